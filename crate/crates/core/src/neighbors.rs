//! Exact k-nearest-neighbor graphs.
//!
//! Both backends order candidates by (squared distance, index) and compute
//! distances with the same summation, so they agree bit-for-bit including
//! tie-breaks.

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Row `i` lists the `k` nearest neighbors of point `i` (self excluded),
/// ascending by distance, ties broken by smaller index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborGraph {
    k: usize,
    indices: Vec<usize>,
}

impl NeighborGraph {
    pub fn from_rows(k: usize, rows: Vec<Vec<usize>>) -> Result<Self> {
        let n = rows.len();
        let mut indices = Vec::with_capacity(n * k);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != k || row.iter().any(|&j| j >= n || j == i) {
                return Err(Error::InvalidInput(format!("invalid neighbor row {i}")));
            }
            indices.extend(row);
        }
        Ok(NeighborGraph { k, indices })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        if self.k == 0 {
            0
        } else {
            self.indices.len() / self.k
        }
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.indices[i * self.k..(i + 1) * self.k]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[usize]> {
        self.indices.chunks_exact(self.k.max(1))
    }

    /// Indices as an n×k array.
    pub fn to_array(&self) -> Array2<usize> {
        Array2::from_shape_vec((self.len(), self.k), self.indices.clone()).expect("rectangular")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KnnBackend {
    /// O(n²) scan; the reference result.
    BruteForce,
    KdTree,
    /// kd-tree for low-dimensional inputs, brute force otherwise.
    Auto,
    /// All pairwise distances at once as |a|² + |b|² − 2a·b through one
    /// matrix product. Fast for wide features; distances carry rounding from
    /// the expansion, so near-ties may resolve differently than the exact
    /// backends.
    Gram,
}

const KD_TREE_MAX_DIM: usize = 8;
const LEAF_SIZE: usize = 12;

pub fn knn(features: ArrayView2<f64>, k: usize) -> Result<NeighborGraph> {
    knn_with(features, k, KnnBackend::Auto)
}

/// The same neighbor sets as the Gram backend of [`knn_with`], but each
/// row lists its neighbors in ascending index order instead of by distance.
/// Skipping the distance sort makes this the cheaper choice for consumers
/// that only need the set, such as EdgeConv aggregation.
pub fn knn_sets(features: ArrayView2<f64>, k: usize) -> Result<NeighborGraph> {
    validate(features, k)?;
    Ok(gram_knn(features, k, false))
}

fn validate(features: ArrayView2<f64>, k: usize) -> Result<()> {
    let n = features.nrows();
    if k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    if n <= k {
        return Err(Error::InsufficientPoints {
            needed: k + 1,
            got: n,
        });
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "knn features contain non-finite values".into(),
        ));
    }
    Ok(())
}

pub fn knn_with(features: ArrayView2<f64>, k: usize, backend: KnnBackend) -> Result<NeighborGraph> {
    validate(features, k)?;
    let n = features.nrows();
    let data: Vec<f64> = features.iter().copied().collect();
    let dim = features.ncols();
    let backend = match backend {
        KnnBackend::Auto if dim <= KD_TREE_MAX_DIM => KnnBackend::KdTree,
        KnnBackend::Auto => KnnBackend::BruteForce,
        b => b,
    };

    if backend == KnnBackend::Gram {
        return Ok(gram_knn(features, k, true));
    }
    let rows: Vec<Vec<usize>> = match backend {
        KnnBackend::BruteForce => (0..n)
            .into_par_iter()
            .map(|i| brute_force_row(&data, dim, n, i, k))
            .collect(),
        _ => {
            let tree = KdTree::build(&data, dim, n);
            (0..n).into_par_iter().map(|i| tree.query(i, k)).collect()
        }
    };
    let mut indices = Vec::with_capacity(n * k);
    rows.into_iter().for_each(|r| indices.extend(r));
    Ok(NeighborGraph { k, indices })
}

#[inline]
fn sq_dist(data: &[f64], dim: usize, i: usize, j: usize) -> f64 {
    let a = &data[i * dim..(i + 1) * dim];
    let b = &data[j * dim..(j + 1) * dim];
    // four interleaved partial sums vectorize; the order is fixed so every
    // backend sees bit-identical distances
    let mut lanes = [0.0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            let d = x[l] - y[l];
            lanes[l] += d * d;
        }
    }
    let mut total = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
    for (x, y) in ra.iter().zip(rb) {
        total += (x - y) * (x - y);
    }
    total
}

/// Sorted bounded buffer of (distance, index) candidates.
struct Candidates {
    k: usize,
    items: Vec<(f64, usize)>,
}

impl Candidates {
    fn new(k: usize) -> Self {
        Candidates {
            k,
            items: Vec::with_capacity(k + 1),
        }
    }

    fn worst(&self) -> f64 {
        if self.items.len() < self.k {
            f64::INFINITY
        } else {
            self.items[self.k - 1].0
        }
    }

    fn offer(&mut self, d: f64, j: usize) {
        if self.items.len() == self.k {
            let (wd, wj) = self.items[self.k - 1];
            if (d, j) >= (wd, wj) {
                return;
            }
        }
        let pos = self
            .items
            .partition_point(|&(cd, cj)| cd < d || (cd == d && cj < j));
        self.items.insert(pos, (d, j));
        self.items.truncate(self.k);
    }

    fn into_indices(self) -> Vec<usize> {
        self.items.into_iter().map(|(_, j)| j).collect()
    }
}

fn gram_knn(features: ArrayView2<f64>, k: usize, by_distance: bool) -> NeighborGraph {
    let n = features.nrows();
    let gram = features.dot(&features.t());
    let gram = gram.as_standard_layout();
    let gram = gram.as_slice().expect("standard layout");
    let sq: Vec<f64> = (0..n).map(|i| gram[i * n + i]).collect();
    let mut indices = vec![0usize; n * k];
    indices.par_chunks_mut(k).enumerate().for_each_init(
        || {
            (
                vec![0.0; n],
                Vec::with_capacity(n),
                vec![0usize; n],
                Vec::with_capacity(n),
            )
        },
        |(dist, scratch, survivors, picked), (i, out)| {
            let g = &gram[i * n..(i + 1) * n];
            for ((d, &gj), &sj) in dist.iter_mut().zip(g).zip(&sq) {
                *d = sq[i] + sj - 2.0 * gj;
            }
            dist[i] = f64::INFINITY;
            let mut count = prefilter(dist, k, scratch, survivors);
            if count < k {
                // the point itself sits at infinity and is never among the k
                for (j, s) in survivors.iter_mut().enumerate() {
                    *s = j;
                }
                count = n;
            }
            let survivors = &survivors[..count];
            if by_distance {
                picked.clear();
                picked.extend(survivors.iter().map(|&j| (dist[j], j)));
                picked.select_nth_unstable_by(k - 1, |a: &(f64, usize), b| {
                    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
                });
                picked.truncate(k);
                picked.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                for (o, &(_, j)) in out.iter_mut().zip(picked.iter()) {
                    *o = j;
                }
            } else {
                // k-th smallest distance, then everything below it plus the
                // lowest-indexed points tied with it
                scratch.clear();
                scratch.extend(survivors.iter().map(|&j| dist[j]));
                scratch.select_nth_unstable_by(k - 1, f64::total_cmp);
                let kth = scratch[k - 1];
                let below = survivors.iter().filter(|&&j| dist[j] < kth).count();
                let mut ties = k - below;
                let mut o = 0;
                for &j in survivors {
                    let d = dist[j];
                    if d < kth || (d == kth && ties > 0) {
                        ties -= (d == kth) as usize;
                        out[o] = j;
                        o += 1;
                    }
                }
            }
        },
    );
    NeighborGraph { k, indices }
}

/// Collects into `survivors` every index whose distance is at most a
/// threshold estimated from a strided sample, aiming for about 2k of them.
/// Returns the survivor count; a count below `k` means the estimate was too
/// tight and the caller must fall back to an exact selection.
fn prefilter(dist: &[f64], k: usize, scratch: &mut Vec<f64>, survivors: &mut [usize]) -> usize {
    let n = dist.len();
    let stride = 8;
    if n < 8 * k || n / stride < 4 {
        return 0;
    }
    scratch.clear();
    scratch.extend(dist.iter().step_by(stride));
    let rank = ((2 * k * scratch.len()) / n + 1).min(scratch.len() - 1);
    scratch.select_nth_unstable_by(rank, f64::total_cmp);
    let threshold = scratch[rank];
    let mut count = 0;
    for (j, &d) in dist.iter().enumerate() {
        survivors[count] = j;
        count += (d <= threshold) as usize;
    }
    count
}

fn brute_force_row(data: &[f64], dim: usize, n: usize, i: usize, k: usize) -> Vec<usize> {
    let mut best = Candidates::new(k);
    for j in (0..n).filter(|&j| j != i) {
        best.offer(sq_dist(data, dim, i, j), j);
    }
    best.into_indices()
}

enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

struct KdTree<'a> {
    data: &'a [f64],
    dim: usize,
    order: Vec<usize>,
    root: Node,
}

impl<'a> KdTree<'a> {
    fn build(data: &'a [f64], dim: usize, n: usize) -> Self {
        let mut order: Vec<usize> = (0..n).collect();
        let root = Self::build_node(data, dim, &mut order, 0);
        KdTree {
            data,
            dim,
            order,
            root,
        }
    }

    fn build_node(data: &[f64], dim: usize, order: &mut [usize], offset: usize) -> Node {
        let len = order.len();
        if len <= LEAF_SIZE {
            return Node::Leaf {
                start: offset,
                end: offset + len,
            };
        }
        let axis = (0..dim)
            .max_by(|&a, &b| {
                let spread = |ax: usize| {
                    let (lo, hi) =
                        order
                            .iter()
                            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &p| {
                                let v = data[p * dim + ax];
                                (lo.min(v), hi.max(v))
                            });
                    hi - lo
                };
                spread(a).total_cmp(&spread(b))
            })
            .expect("dim >= 1");
        let mid = len / 2;
        order.select_nth_unstable_by(mid, |&p, &q| {
            data[p * dim + axis]
                .total_cmp(&data[q * dim + axis])
                .then(p.cmp(&q))
        });
        let value = data[order[mid] * dim + axis];
        let (lo, hi) = order.split_at_mut(mid);
        Node::Split {
            axis,
            value,
            left: Box::new(Self::build_node(data, dim, lo, offset)),
            right: Box::new(Self::build_node(data, dim, hi, offset + mid)),
        }
    }

    fn query(&self, i: usize, k: usize) -> Vec<usize> {
        let mut best = Candidates::new(k);
        self.search(&self.root, i, &mut best);
        best.into_indices()
    }

    fn search(&self, node: &Node, i: usize, best: &mut Candidates) {
        match node {
            Node::Leaf { start, end } => {
                for &j in &self.order[*start..*end] {
                    if j != i {
                        best.offer(sq_dist(self.data, self.dim, i, j), j);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = self.data[i * self.dim + axis] - value;
                let (near, far) = if diff < 0.0 {
                    (left, right)
                } else {
                    (right, left)
                };
                self.search(near, i, best);
                // equality must not prune: an equidistant smaller index may lie across
                if diff * diff <= best.worst() {
                    self.search(far, i, best);
                }
            }
        }
    }
}

/// Full matrix of squared Euclidean distances.
pub fn pairwise_sq_dist(features: ArrayView2<f64>) -> Result<Array2<f64>> {
    if features.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "features contain non-finite values".into(),
        ));
    }
    let n = features.nrows();
    let dim = features.ncols();
    let data: Vec<f64> = features.iter().copied().collect();
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let d = sq_dist(&data, dim, i, j);
            out[[i, j]] = d;
            out[[j, i]] = d;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_points(n: usize, dim: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, dim), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn one_dimensional_example() {
        let f = arr2(&[[0.0], [1.0], [3.0]]);
        for backend in [KnnBackend::BruteForce, KnnBackend::KdTree] {
            let g = knn_with(f.view(), 1, backend).unwrap();
            assert_eq!(g.to_array(), arr2(&[[1], [0], [1]]));
        }
    }

    #[test]
    fn tie_goes_to_smaller_index() {
        let f = arr2(&[[0.0], [1.0], [-1.0]]);
        for backend in [KnnBackend::BruteForce, KnnBackend::KdTree] {
            assert_eq!(knn_with(f.view(), 1, backend).unwrap().row(0), &[1]);
        }
    }

    #[test]
    fn insufficient_points() {
        let f = arr2(&[[0.0], [1.0]]);
        assert!(matches!(
            knn(f.view(), 2),
            Err(Error::InsufficientPoints { needed: 3, got: 2 })
        ));
    }

    #[test]
    fn gram_matches_brute_force_on_generic_data() {
        for (n, dim, k) in [
            (50, 3, 5),
            (120, 16, 20),
            (64, 64, 10),
            (256, 3, 20),
            (256, 32, 20),
            (300, 8, 4),
        ] {
            let x = random_points(n, dim, n as u64 + dim as u64);
            let exact = knn_with(x.view(), k, KnnBackend::BruteForce).unwrap();
            let gram = knn_with(x.view(), k, KnnBackend::Gram).unwrap();
            assert_eq!(exact, gram);
            assert_eq!(as_sets(&exact), knn_sets(x.view(), k).unwrap());
        }
    }

    fn as_sets(g: &NeighborGraph) -> NeighborGraph {
        let rows = g
            .rows()
            .map(|r| {
                let mut r = r.to_vec();
                r.sort_unstable();
                r
            })
            .collect();
        NeighborGraph::from_rows(g.k(), rows).unwrap()
    }

    #[test]
    fn gram_prefilter_keeps_index_order_on_ties() {
        // integer lattice: exact Gram arithmetic with many equal distances
        let mut pts = Vec::new();
        for x in 0..8 {
            for y in 0..8 {
                for z in 0..5 {
                    pts.extend([x as f64, y as f64, z as f64]);
                }
            }
        }
        let f = Array2::from_shape_vec((320, 3), pts).unwrap();
        for k in [4, 6, 20] {
            let exact = knn_with(f.view(), k, KnnBackend::BruteForce).unwrap();
            assert_eq!(exact, knn_with(f.view(), k, KnnBackend::Gram).unwrap());
            assert_eq!(as_sets(&exact), knn_sets(f.view(), k).unwrap());
        }
    }

    #[test]
    fn kd_tree_matches_brute_force() {
        let f = random_points(300, 3, 42);
        let a = knn_with(f.view(), 12, KnnBackend::BruteForce).unwrap();
        let b = knn_with(f.view(), 12, KnnBackend::KdTree).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn kd_tree_matches_on_lattice_with_ties() {
        // integer grid: massive distance ties
        let mut pts = Vec::new();
        for x in 0..6 {
            for y in 0..6 {
                for z in 0..4 {
                    pts.extend([x as f64, y as f64, z as f64]);
                }
            }
        }
        let f = Array2::from_shape_vec((pts.len() / 3, 3), pts).unwrap();
        for k in [1, 6, 13] {
            let a = knn_with(f.view(), k, KnnBackend::BruteForce).unwrap();
            let b = knn_with(f.view(), k, KnnBackend::KdTree).unwrap();
            assert_eq!(a, b, "k = {k}");
        }
    }

    #[test]
    fn pairwise_examples() {
        let d = pairwise_sq_dist(arr2(&[[0.0, 0.0, 0.0], [1.0, 2.0, 2.0]]).view()).unwrap();
        assert_eq!(d[[0, 1]], 9.0);
        assert_eq!(
            pairwise_sq_dist(arr2(&[[1.0, 2.0, 3.0]]).view()).unwrap(),
            arr2(&[[0.0]])
        );
    }

    #[test]
    fn pairwise_matches_gram_identity() {
        let f = random_points(20, 3, 7);
        let d = pairwise_sq_dist(f.view()).unwrap();
        let gram = f.dot(&f.t());
        for i in 0..20 {
            for j in 0..20 {
                let alt = gram[[i, i]] + gram[[j, j]] - 2.0 * gram[[i, j]];
                assert!((d[[i, j]] - alt).abs() <= 1e-10);
                assert_eq!(d[[i, j]], d[[j, i]]);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn neighbors_are_closest(seed in 0u64..1000, k in 1usize..8) {
            let f = random_points(40, 3, seed);
            let g = knn(f.view(), k).unwrap();
            let d = pairwise_sq_dist(f.view()).unwrap();
            for i in 0..40 {
                let row = g.row(i);
                prop_assert!(!row.contains(&i));
                let worst = row.iter().map(|&j| d[[i, j]]).fold(0.0, f64::max);
                for m in (0..40).filter(|m| *m != i && !row.contains(m)) {
                    prop_assert!(worst <= d[[i, m]]);
                }
                for w in row.windows(2) {
                    prop_assert!(d[[i, w[0]]] <= d[[i, w[1]]]);
                }
            }
        }

        #[test]
        fn rigid_motion_invariance(seed in 0u64..1000, angle in -3.0f64..3.0, shift in -5.0f64..5.0) {
            let f = random_points(60, 3, seed);
            let (s, c) = angle.sin_cos();
            let r = arr2(&[[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]);
            let moved = f.dot(&r.t()) + shift;
            prop_assert_eq!(knn(f.view(), 5).unwrap(), knn(moved.view(), 5).unwrap());
        }
    }
}
