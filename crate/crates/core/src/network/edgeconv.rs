//! EdgeConv: f'_i[m] = max_{j ∈ N(i)} LeakyReLU(θ_m·f_i + φ_m·(f_j − f_i)),
//! optionally followed by batch normalization.

use ndarray::Array2;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::layers::{BatchNorm, Linear, LEAKY_SLOPE};
use super::{Mode, Param};
use crate::error::{Error, Result};
use crate::neighbors::{knn_sets, NeighborGraph};

#[derive(Debug, Clone)]
pub struct EdgeConv {
    /// M×c kernel on the center feature.
    pub theta: Param,
    /// M×c kernel on the edge difference.
    pub phi: Param,
    pub bn: Option<BatchNorm>,
    cache: Option<EdgeCache>,
}

#[derive(Debug, Clone)]
struct EdgeCache {
    input: Array2<f64>,
    /// Winning pre-activation per (row, kernel).
    best: Vec<f64>,
    /// Global row index of the winning neighbor per (row, kernel).
    argmax: Vec<usize>,
}

/// Builds one neighbor graph per cloud from consecutive row blocks. Rows
/// hold neighbor sets in ascending index order.
pub fn cloud_graphs(
    x: &Array2<f64>,
    points_per_cloud: usize,
    k: usize,
) -> Result<Vec<NeighborGraph>> {
    if points_per_cloud == 0 || x.nrows() % points_per_cloud != 0 {
        return Err(Error::contract(
            "edgeconv",
            format!(
                "{} rows do not split into clouds of {points_per_cloud}",
                x.nrows()
            ),
        ));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(
            "non-finite features reached a neighbor graph".into(),
        ));
    }
    (0..x.nrows() / points_per_cloud)
        .map(|b| {
            let block = x.slice(ndarray::s![
                b * points_per_cloud..(b + 1) * points_per_cloud,
                ..
            ]);
            knn_sets(block, k)
        })
        .collect()
}

const MAX_STACK_K: usize = 64;

/// Max over the neighbors in `order` (ascending rows) of center + neighbor
/// terms, per kernel. A strict comparison keeps the first, i.e. smallest-row,
/// winner on ties.
#[inline(always)]
fn row_max_body(
    order: &[usize],
    offset: usize,
    c_row: &[f64],
    neighbor: &[f64],
    best_row: &mut [f64],
    arg_row: &mut [usize],
) {
    let m = c_row.len();
    best_row.fill(f64::NEG_INFINITY);
    arg_row.fill(offset + order[0]);
    for &local in order {
        let j = offset + local;
        let n_row = &neighbor[j * m..(j + 1) * m];
        for ((best, arg), (&c, &nb)) in best_row
            .iter_mut()
            .zip(arg_row.iter_mut())
            .zip(c_row.iter().zip(n_row))
        {
            let z = c + nb;
            let better = z > *best;
            *best = if better { z } else { *best };
            *arg = if better { j } else { *arg };
        }
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn row_max_avx2(
    order: &[usize],
    offset: usize,
    c_row: &[f64],
    neighbor: &[f64],
    best_row: &mut [f64],
    arg_row: &mut [usize],
) {
    row_max_body(order, offset, c_row, neighbor, best_row, arg_row)
}

fn wide_vectors() -> bool {
    #[cfg(target_arch = "x86_64")]
    {
        std::arch::is_x86_feature_detected!("avx2")
    }
    #[cfg(not(target_arch = "x86_64"))]
    {
        false
    }
}

fn row_max(
    wide: bool,
    order: &[usize],
    offset: usize,
    c_row: &[f64],
    neighbor: &[f64],
    best_row: &mut [f64],
    arg_row: &mut [usize],
) {
    #[cfg(target_arch = "x86_64")]
    if wide {
        // SAFETY: `wide` is only true when AVX2 was detected at runtime
        return unsafe { row_max_avx2(order, offset, c_row, neighbor, best_row, arg_row) };
    }
    let _ = wide;
    row_max_body(order, offset, c_row, neighbor, best_row, arg_row)
}

impl EdgeConv {
    pub fn new(inputs: usize, kernels: usize, batch_norm: bool, rng: &mut ChaCha8Rng) -> Self {
        // Glorot limit of the equivalent 2c -> M edge perceptron
        let theta = Linear::new(2 * inputs, kernels, false, rng).weight.value;
        let phi = theta.slice(ndarray::s![.., inputs..]).to_owned();
        let theta = theta.slice(ndarray::s![.., ..inputs]).to_owned();
        EdgeConv {
            theta: Param::new(theta),
            phi: Param::new(phi),
            bn: batch_norm.then(|| BatchNorm::new(kernels)),
            cache: None,
        }
    }

    pub fn inputs(&self) -> usize {
        self.theta.value.ncols()
    }

    pub fn kernels(&self) -> usize {
        self.theta.value.nrows()
    }

    /// `x` stacks the clouds row-wise; `graphs[b]` indexes rows of cloud `b`
    /// locally.
    pub fn forward(
        &mut self,
        x: &Array2<f64>,
        graphs: &[NeighborGraph],
        mode: Mode,
    ) -> Result<Array2<f64>> {
        let rows = x.nrows();
        if x.ncols() != self.inputs() {
            return Err(Error::contract(
                "edgeconv",
                format!(
                    "expected {} input channels, got {}",
                    self.inputs(),
                    x.ncols()
                ),
            ));
        }
        let covered: usize = graphs.iter().map(NeighborGraph::len).sum();
        if covered != rows || graphs.is_empty() {
            return Err(Error::contract(
                "edgeconv",
                format!("graphs cover {covered} points but features have {rows} rows"),
            ));
        }
        let m = self.kernels();
        let center_kernel = &self.theta.value - &self.phi.value;
        let center = x.dot(&center_kernel.t());
        let neighbor = x.dot(&self.phi.value.t());
        let center = center.as_standard_layout();
        let neighbor = neighbor.as_standard_layout();
        let (center, neighbor) = (center.as_slice().unwrap(), neighbor.as_slice().unwrap());

        let mut offsets = Vec::with_capacity(graphs.len());
        let mut start = 0;
        for g in graphs {
            offsets.push(start);
            start += g.len();
        }
        let mut owner = Vec::with_capacity(rows);
        for (b, g) in graphs.iter().enumerate() {
            owner.extend(std::iter::repeat_n((b, offsets[b]), g.len()));
        }

        let wide = wide_vectors();
        let mut best = vec![0.0; rows * m];
        let mut argmax = vec![0usize; rows * m];
        best.par_chunks_mut(m)
            .zip(argmax.par_chunks_mut(m))
            .enumerate()
            .for_each(|(i, (best_row, arg_row))| {
                let (b, offset) = owner[i];
                let hood = graphs[b].row(i - offset);
                let c_row = &center[i * m..(i + 1) * m];
                let mut order = [0usize; MAX_STACK_K];
                let mut heap;
                let order: &mut [usize] = if hood.len() <= MAX_STACK_K {
                    &mut order[..hood.len()]
                } else {
                    heap = vec![0; hood.len()];
                    &mut heap
                };
                order.copy_from_slice(hood);
                order.sort_unstable();
                row_max(wide, order, offset, c_row, neighbor, best_row, arg_row);
            });

        let activated = Array2::from_shape_vec(
            (rows, m),
            best.iter()
                .map(|&z| if z > 0.0 { z } else { LEAKY_SLOPE * z })
                .collect(),
        )
        .expect("rows × kernels");
        self.cache = Some(EdgeCache {
            input: x.clone(),
            best,
            argmax,
        });
        match (&mut self.bn, mode) {
            (Some(bn), Mode::Train { .. }) => bn.forward_train(&activated),
            (Some(bn), Mode::Eval) => bn.forward_eval(&activated),
            (None, _) => Ok(activated),
        }
    }

    /// Accumulates θ/φ (and batch-norm) gradients; returns the input
    /// gradient. The graph is treated as constant.
    pub fn backward(&mut self, grad_out: &Array2<f64>) -> Result<Array2<f64>> {
        let grad = match &mut self.bn {
            Some(bn) => bn.backward(grad_out)?,
            None => grad_out.clone(),
        };
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::InvalidState("edgeconv backward without forward".into()))?;
        let (rows, m) = grad.dim();
        let mut d_center = Array2::zeros((rows, m));
        let mut d_neighbor = Array2::zeros((rows, m));
        for i in 0..rows {
            for mm in 0..m {
                let idx = i * m + mm;
                let z = cache.best[idx];
                let g = grad[[i, mm]] * if z > 0.0 { 1.0 } else { LEAKY_SLOPE };
                d_center[[i, mm]] = g;
                d_neighbor[[cache.argmax[idx], mm]] += g;
            }
        }
        let d_center_kernel = d_center.t().dot(&cache.input);
        let d_phi_direct = d_neighbor.t().dot(&cache.input);
        self.theta.grad += &d_center_kernel;
        self.phi.grad += &(&d_phi_direct - &d_center_kernel);

        let center_kernel = &self.theta.value - &self.phi.value;
        Ok(d_center.dot(&center_kernel) + d_neighbor.dot(&self.phi.value))
    }

    /// Argmax table of the last forward pass, for branch fingerprints.
    pub fn last_argmax(&self) -> Option<&[usize]> {
        self.cache.as_ref().map(|c| c.argmax.as_slice())
    }

    pub fn last_preactivations(&self) -> Option<&[f64]> {
        self.cache.as_ref().map(|c| c.best.as_slice())
    }

    pub fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        f(&format!("{prefix}.theta"), &mut self.theta);
        f(&format!("{prefix}.phi"), &mut self.phi);
        if let Some(bn) = &mut self.bn {
            bn.visit(&format!("{prefix}.bn"), f);
        }
    }

    pub fn visit_buffers(
        &mut self,
        prefix: &str,
        f: &mut dyn FnMut(&str, &mut ndarray::Array1<f64>),
    ) {
        if let Some(bn) = &mut self.bn {
            bn.visit_buffers(&format!("{prefix}.bn"), f);
        }
    }
}
