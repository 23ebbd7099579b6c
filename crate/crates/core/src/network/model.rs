//! The channel-controlled EdgeConv classifier.

use std::collections::hash_map::DefaultHasher;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;

use ndarray::{concatenate, s, Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::edgeconv::{cloud_graphs, EdgeConv};
use super::layers::{
    global_max_pool, global_max_pool_backward, leaky_relu, leaky_relu_backward, BatchNorm, Dropout,
    Linear, LEAKY_SLOPE,
};
use super::mp::{MpGate, GATE_HIDDEN};
use super::{Mode, Param};
use crate::error::{Error, Result};
use crate::neighbors::NeighborGraph;
use crate::pointset::PointCloud;

/// Which manifold features are concatenated to xyz before the backbone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Augmentation {
    None,
    Lle,
    Mp,
    LleMp,
}

impl Augmentation {
    pub const ALL: [Augmentation; 4] = [
        Augmentation::None,
        Augmentation::Lle,
        Augmentation::Mp,
        Augmentation::LleMp,
    ];

    pub fn uses_lle(self) -> bool {
        matches!(self, Augmentation::Lle | Augmentation::LleMp)
    }

    pub fn uses_mp(self) -> bool {
        matches!(self, Augmentation::Mp | Augmentation::LleMp)
    }
}

impl fmt::Display for Augmentation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Augmentation::None => "none",
            Augmentation::Lle => "lle",
            Augmentation::Mp => "mp",
            Augmentation::LleMp => "lle+mp",
        })
    }
}

impl FromStr for Augmentation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Augmentation::None),
            "lle" => Ok(Augmentation::Lle),
            "mp" => Ok(Augmentation::Mp),
            "lle+mp" => Ok(Augmentation::LleMp),
            other => Err(Error::InvalidInput(format!(
                "unknown augmentation '{other}' (expected none, lle, mp or lle+mp)"
            ))),
        }
    }
}

/// Base widths are multiplied by the channel multiplier `t` everywhere
/// except the logits.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchitectureSpec {
    pub t: usize,
    pub edgeconv_widths: Vec<usize>,
    pub embedding_width: usize,
    pub head_widths: [usize; 2],
    pub k: usize,
    pub num_classes: usize,
    pub dropout_rate: f64,
    /// Number of coordinate planes for the MP gate: 1 (z=0) or 3.
    pub mp_planes: usize,
    /// Recompute kNN on every EdgeConv input instead of reusing the input graph.
    pub dynamic_graph: bool,
}

impl ArchitectureSpec {
    /// Small widths for tests and desk-scale runs.
    pub fn toy(num_classes: usize) -> Self {
        ArchitectureSpec {
            t: 1,
            edgeconv_widths: vec![16, 16, 32, 64],
            embedding_width: 128,
            head_widths: [64, 32],
            k: 20,
            num_classes,
            dropout_rate: 0.5,
            mp_planes: 3,
            dynamic_graph: true,
        }
    }

    /// The DGCNN-sized backbone.
    pub fn dgcnn(num_classes: usize) -> Self {
        ArchitectureSpec {
            edgeconv_widths: vec![64, 64, 128, 256],
            embedding_width: 1024,
            head_widths: [512, 256],
            ..ArchitectureSpec::toy(num_classes)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.t == 0 {
            return bad("channel multiplier t must be >= 1".into());
        }
        if self.edgeconv_widths.is_empty() || self.edgeconv_widths.contains(&0) {
            return bad(format!(
                "invalid edgeconv widths {:?}",
                self.edgeconv_widths
            ));
        }
        if self.embedding_width == 0 || self.head_widths.contains(&0) {
            return bad("embedding and head widths must be positive".into());
        }
        if self.k == 0 || self.num_classes < 2 {
            return bad("k must be >= 1 and there must be at least 2 classes".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!(
                "dropout rate must be in [0, 1), got {}",
                self.dropout_rate
            ));
        }
        if self.mp_planes != 1 && self.mp_planes != 3 {
            return bad(format!("mp_planes must be 1 or 3, got {}", self.mp_planes));
        }
        Ok(())
    }

    pub fn input_width(&self, augmentation: Augmentation) -> usize {
        3 + if augmentation.uses_lle() { 2 } else { 0 }
            + if augmentation.uses_mp() {
                2 * self.mp_planes
            } else {
                0
            }
    }

    pub fn plane_indices(&self) -> Vec<usize> {
        if self.mp_planes == 1 {
            vec![2]
        } else {
            vec![0, 1, 2]
        }
    }

    /// Effective output widths of every hidden layer in order: EdgeConvs,
    /// embedding, then the two head layers.
    pub fn hidden_widths(&self) -> Vec<usize> {
        self.edgeconv_widths
            .iter()
            .chain([&self.embedding_width])
            .chain(self.head_widths.iter())
            .map(|w| w * self.t)
            .collect()
    }

    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        let list = |v: &[usize]| {
            v.iter()
                .map(|w| w.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        vec![
            ("t", self.t.to_string()),
            ("edgeconv_widths", list(&self.edgeconv_widths)),
            ("embedding_width", self.embedding_width.to_string()),
            ("head_widths", list(&self.head_widths)),
            ("k_edgeconv", self.k.to_string()),
            ("num_classes", self.num_classes.to_string()),
            ("dropout", self.dropout_rate.to_string()),
            ("mp_planes", self.mp_planes.to_string()),
            ("dynamic_graph", self.dynamic_graph.to_string()),
        ]
    }

    /// Applies one `key=value` setting; returns false for keys this type
    /// does not own.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        let bad = || Error::InvalidInput(format!("invalid value '{value}' for {key}"));
        let list = || -> Result<Vec<usize>> {
            value
                .split(',')
                .map(|w| w.trim().parse().map_err(|_| bad()))
                .collect()
        };
        match key {
            "t" => self.t = value.parse().map_err(|_| bad())?,
            "edgeconv_widths" => self.edgeconv_widths = list()?,
            "embedding_width" => self.embedding_width = value.parse().map_err(|_| bad())?,
            "head_widths" => {
                let v = list()?;
                self.head_widths = v.try_into().map_err(|_| bad())?;
            }
            "k_edgeconv" => self.k = value.parse().map_err(|_| bad())?,
            "num_classes" => self.num_classes = value.parse().map_err(|_| bad())?,
            "dropout" => self.dropout_rate = value.parse().map_err(|_| bad())?,
            "mp_planes" => self.mp_planes = value.parse().map_err(|_| bad())?,
            "dynamic_graph" => self.dynamic_graph = value.parse().map_err(|_| bad())?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

/// Clouds stacked row-wise with their precomputed features.
#[derive(Debug, Clone)]
pub struct Batch {
    /// (clouds·n)×3 standardized coordinates.
    pub points: Array2<f64>,
    /// (clouds·n)×2 LLE coordinates, when the augmentation needs them.
    pub lle: Option<Array2<f64>>,
    pub points_per_cloud: usize,
    pub labels: Vec<usize>,
}

impl Batch {
    pub fn new(clouds: &[&PointCloud], lle: Option<&[&Array2<f64>]>) -> Result<Self> {
        let first = clouds
            .first()
            .ok_or_else(|| Error::contract("batch", "a batch needs at least one cloud"))?;
        let n = first.len();
        if let Some(c) = clouds.iter().find(|c| c.len() != n) {
            return Err(Error::contract(
                "batch",
                format!(
                    "mixed point counts: '{}' has {} points, expected {n}",
                    c.id,
                    c.len()
                ),
            ));
        }
        let views: Vec<_> = clouds.iter().map(|c| c.points.view()).collect();
        let points = concatenate(Axis(0), &views).expect("equal widths");
        let lle = match lle {
            Some(blocks) => {
                if blocks.len() != clouds.len() || blocks.iter().any(|b| b.dim() != (n, 2)) {
                    return Err(Error::contract(
                        "batch",
                        "LLE features must be n×2 per cloud",
                    ));
                }
                let views: Vec<_> = blocks.iter().map(|b| b.view()).collect();
                Some(concatenate(Axis(0), &views).expect("equal widths"))
            }
            None => None,
        };
        Ok(Batch {
            points,
            lle,
            points_per_cloud: n,
            labels: clouds.iter().map(|c| c.label.unwrap_or(0)).collect(),
        })
    }

    pub fn clouds(&self) -> usize {
        self.points.nrows() / self.points_per_cloud
    }
}

#[derive(Debug, Clone)]
struct Tape {
    rows: usize,
    points_per_cloud: usize,
    conv_widths: Vec<usize>,
    mp_columns: Option<(usize, usize)>,
    cat: Array2<f64>,
    embed_pre: Array2<f64>,
    pool_argmax: Vec<usize>,
    head_inputs: Vec<Array2<f64>>,
    head_pre: Vec<Array2<f64>>,
    graphs: Vec<Vec<NeighborGraph>>,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub spec: ArchitectureSpec,
    pub augmentation: Augmentation,
    pub mp: Option<MpGate>,
    pub convs: Vec<EdgeConv>,
    pub embed: Linear,
    pub embed_bn: BatchNorm,
    pub head: Vec<Linear>,
    pub head_bn: Vec<BatchNorm>,
    pub dropout: Vec<Dropout>,
    pub output: Linear,
    tape: Option<Tape>,
}

/// Builds a freshly initialized model.
pub fn build_model(
    spec: &ArchitectureSpec,
    augmentation: Augmentation,
    seed: u64,
) -> Result<Model> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = spec.t;
    let mp = if augmentation.uses_mp() {
        Some(MpGate::new(spec.plane_indices(), GATE_HIDDEN, &mut rng)?)
    } else {
        None
    };
    let mut width = spec.input_width(augmentation);
    let mut convs = Vec::new();
    for &w in &spec.edgeconv_widths {
        convs.push(EdgeConv::new(width, w * t, true, &mut rng));
        width = w * t;
    }
    let cat_width: usize = spec.edgeconv_widths.iter().map(|w| w * t).sum();
    let emb = spec.embedding_width * t;
    let [h1, h2] = spec.head_widths.map(|w| w * t);
    Ok(Model {
        spec: spec.clone(),
        augmentation,
        mp,
        convs,
        embed: Linear::new(cat_width, emb, false, &mut rng),
        embed_bn: BatchNorm::new(emb),
        head: vec![
            Linear::new(emb, h1, false, &mut rng),
            Linear::new(h1, h2, true, &mut rng),
        ],
        head_bn: vec![BatchNorm::new(h1), BatchNorm::new(h2)],
        dropout: vec![
            Dropout::new(spec.dropout_rate),
            Dropout::new(spec.dropout_rate),
        ],
        output: Linear::new(h2, spec.num_classes, true, &mut rng),
        tape: None,
    })
}

impl Model {
    pub fn input_width(&self) -> usize {
        self.spec.input_width(self.augmentation)
    }

    /// Output widths of every hidden layer as built.
    pub fn hidden_widths(&self) -> Vec<usize> {
        self.convs
            .iter()
            .map(EdgeConv::kernels)
            .chain([self.embed.outputs()])
            .chain(self.head.iter().map(Linear::outputs))
            .collect()
    }

    pub fn logits_width(&self) -> usize {
        self.output.outputs()
    }

    fn input_features(&mut self, batch: &Batch) -> Result<(Array2<f64>, Option<(usize, usize)>)> {
        let mut parts = vec![batch.points.clone()];
        if self.augmentation.uses_lle() {
            let lle = batch.lle.as_ref().ok_or_else(|| {
                Error::contract(
                    "model",
                    "augmentation needs LLE features but the batch has none",
                )
            })?;
            parts.push(lle.clone());
        }
        let mut mp_columns = None;
        if let Some(mp) = &mut self.mp {
            let start: usize = parts.iter().map(|p| p.ncols()).sum();
            let gated = mp.forward(&batch.points)?;
            mp_columns = Some((start, start + gated.ncols()));
            parts.push(gated);
        }
        let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
        Ok((
            concatenate(Axis(1), &views).expect("equal rows"),
            mp_columns,
        ))
    }

    /// Computes logits for every cloud in the batch. Training mode uses batch
    /// statistics and seeds dropout from `seed`; evaluation is deterministic.
    pub fn forward(&mut self, batch: &Batch, mode: Mode) -> Result<Array2<f64>> {
        let n = batch.points_per_cloud;
        if n == 0 || batch.points.nrows() % n != 0 {
            return Err(Error::contract(
                "model",
                "points do not split into equal clouds",
            ));
        }
        let (x0, mp_columns) = self.input_features(batch)?;
        let rows = x0.nrows();

        let mut graphs: Vec<Vec<NeighborGraph>> = Vec::with_capacity(self.convs.len());
        let mut x = x0;
        let mut outputs = Vec::with_capacity(self.convs.len());
        for (l, conv) in self.convs.iter_mut().enumerate() {
            let g = if l == 0 || self.spec.dynamic_graph {
                cloud_graphs(&x, n, self.spec.k)?
            } else {
                graphs[0].clone()
            };
            x = conv.forward(&x, &g, mode)?;
            graphs.push(g);
            outputs.push(x.clone());
        }
        let views: Vec<_> = outputs.iter().map(|o| o.view()).collect();
        let cat = concatenate(Axis(1), &views).expect("equal rows");

        let embedded = self.embed.forward(&cat)?;
        let embed_pre = match mode {
            Mode::Train { .. } => self.embed_bn.forward_train(&embedded)?,
            Mode::Eval => self.embed_bn.forward_eval(&embedded)?,
        };
        let (pooled, pool_argmax) = global_max_pool(&leaky_relu(&embed_pre, LEAKY_SLOPE), n)?;

        let mut rng = match mode {
            Mode::Train { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
            Mode::Eval => None,
        };
        let mut h = pooled;
        let mut head_inputs = Vec::with_capacity(2);
        let mut head_pre = Vec::with_capacity(2);
        for i in 0..self.head.len() {
            let a = self.head[i].forward(&h)?;
            let a = match mode {
                Mode::Train { .. } => self.head_bn[i].forward_train(&a)?,
                Mode::Eval => self.head_bn[i].forward_eval(&a)?,
            };
            let act = leaky_relu(&a, LEAKY_SLOPE);
            let next = match &mut rng {
                Some(rng) => self.dropout[i].forward_train(&act, rng),
                None => self.dropout[i].forward_eval(&act),
            };
            head_inputs.push(h);
            head_pre.push(a);
            h = next;
        }
        let logits = self.output.forward(&h)?;
        head_inputs.push(h);

        self.tape = Some(Tape {
            rows,
            points_per_cloud: n,
            conv_widths: outputs.iter().map(|o| o.ncols()).collect(),
            mp_columns,
            cat,
            embed_pre,
            pool_argmax,
            head_inputs,
            head_pre,
            graphs,
        });
        Ok(logits)
    }

    /// Backpropagates `grad_logits` from the last training-mode forward pass,
    /// accumulating into every parameter gradient.
    pub fn backward(&mut self, grad_logits: &Array2<f64>) -> Result<()> {
        let tape = self
            .tape
            .take()
            .ok_or_else(|| Error::InvalidState("model backward without forward".into()))?;
        let result = self.backward_with(&tape, grad_logits);
        self.tape = Some(tape);
        result
    }

    fn backward_with(&mut self, tape: &Tape, grad_logits: &Array2<f64>) -> Result<()> {
        let mut g = self.output.backward(&tape.head_inputs[2], grad_logits);
        for i in (0..self.head.len()).rev() {
            g = self.dropout[i].backward(&g);
            g = leaky_relu_backward(&tape.head_pre[i], &g, LEAKY_SLOPE);
            g = self.head_bn[i].backward(&g)?;
            g = self.head[i].backward(&tape.head_inputs[i], &g);
        }
        let g = global_max_pool_backward(&g, &tape.pool_argmax, tape.rows);
        let g = leaky_relu_backward(&tape.embed_pre, &g, LEAKY_SLOPE);
        let g = self.embed_bn.backward(&g)?;
        let d_cat = self.embed.backward(&tape.cat, &g);

        let mut bounds = Vec::with_capacity(tape.conv_widths.len());
        let mut start = 0;
        for &w in &tape.conv_widths {
            bounds.push((start, start + w));
            start += w;
        }
        let last = self.convs.len() - 1;
        let (a, b) = bounds[last];
        let mut g = d_cat.slice(s![.., a..b]).to_owned();
        for l in (0..self.convs.len()).rev() {
            let d_in = self.convs[l].backward(&g)?;
            if l > 0 {
                let (a, b) = bounds[l - 1];
                g = d_in + &d_cat.slice(s![.., a..b]);
            } else {
                g = d_in;
            }
        }
        if let (Some(mp), Some((a, b))) = (&mut self.mp, tape.mp_columns) {
            mp.backward(&g.slice(s![.., a..b]).to_owned())?;
        }
        let _ = tape.points_per_cloud;
        Ok(())
    }

    /// Hash of every discrete choice made by the last forward pass: neighbor
    /// graphs, max winners, and LeakyReLU branches. Two passes with equal
    /// fingerprints evaluate the same smooth piece of the network.
    pub fn branch_fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        let signs = |h: &mut DefaultHasher, values: &mut dyn Iterator<Item = f64>| {
            for v in values {
                (v > 0.0).hash(h);
            }
        };
        if let Some(tape) = &self.tape {
            for layer in &tape.graphs {
                for g in layer {
                    g.rows().for_each(|r| r.hash(&mut h));
                }
            }
            tape.pool_argmax.hash(&mut h);
            signs(&mut h, &mut tape.embed_pre.iter().copied());
            for a in &tape.head_pre {
                signs(&mut h, &mut a.iter().copied());
            }
        }
        for conv in &self.convs {
            if let Some(arg) = conv.last_argmax() {
                arg.hash(&mut h);
            }
            if let Some(pre) = conv.last_preactivations() {
                signs(&mut h, &mut pre.iter().copied());
            }
        }
        if let Some((hidden, gate)) = self.mp.as_ref().and_then(MpGate::last_preactivations) {
            signs(&mut h, &mut hidden.iter().copied());
            signs(&mut h, &mut gate.iter().copied());
        }
        h.finish()
    }

    /// Visits every learnable tensor with a stable dotted name.
    pub fn visit_params(&mut self, f: &mut dyn FnMut(&str, &mut Param)) {
        if let Some(mp) = &mut self.mp {
            mp.visit("mp", f);
        }
        for (l, conv) in self.convs.iter_mut().enumerate() {
            conv.visit(&format!("conv{l}"), f);
        }
        self.embed.visit("embed", f);
        self.embed_bn.visit("embed_bn", f);
        for (i, (lin, bn)) in self
            .head
            .iter_mut()
            .zip(self.head_bn.iter_mut())
            .enumerate()
        {
            lin.visit(&format!("head{i}"), f);
            bn.visit(&format!("head_bn{i}"), f);
        }
        self.output.visit("output", f);
    }

    /// Visits the batch-norm running statistics.
    pub fn visit_buffers(&mut self, f: &mut dyn FnMut(&str, &mut Array1<f64>)) {
        for (l, conv) in self.convs.iter_mut().enumerate() {
            conv.visit_buffers(&format!("conv{l}"), f);
        }
        self.embed_bn.visit_buffers("embed_bn", f);
        for (i, bn) in self.head_bn.iter_mut().enumerate() {
            bn.visit_buffers(&format!("head_bn{i}"), f);
        }
    }

    pub fn parameter_count(&mut self) -> usize {
        let mut total = 0;
        self.visit_params(&mut |_, p| total += p.value.len());
        total
    }

    pub fn zero_grad(&mut self) {
        self.visit_params(&mut |_, p| p.grad.fill(0.0));
    }

    pub fn param_vector(&mut self) -> Vec<f64> {
        let mut out = Vec::new();
        self.visit_params(&mut |_, p| out.extend(p.value.iter().copied()));
        out
    }

    pub fn grad_vector(&mut self) -> Vec<f64> {
        let mut out = Vec::new();
        self.visit_params(&mut |_, p| out.extend(p.grad.iter().copied()));
        out
    }

    pub fn set_param_vector(&mut self, values: &[f64]) {
        let mut offset = 0;
        self.visit_params(&mut |_, p| {
            let len = p.value.len();
            for (dst, src) in p.value.iter_mut().zip(&values[offset..offset + len]) {
                *dst = *src;
            }
            offset += len;
        });
    }

    /// (name, element count) of every parameter tensor, in visit order.
    pub fn parameter_shapes(&mut self) -> Vec<(String, (usize, usize))> {
        let mut out = Vec::new();
        self.visit_params(&mut |name, p| out.push((name.to_string(), p.value.dim())));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pointset::{generate_shape, standardize, ShapeClass};

    fn toy_batch(clouds: usize, n: usize) -> Batch {
        let owned: Vec<PointCloud> = (0..clouds)
            .map(|i| {
                let class = ShapeClass::ALL[i % 8];
                standardize(&generate_shape(class, n, 0.01, i as u64).unwrap()).unwrap()
            })
            .collect();
        let refs: Vec<&PointCloud> = owned.iter().collect();
        Batch::new(&refs, None).unwrap()
    }

    #[test]
    fn toy_construction_widths() {
        let spec = ArchitectureSpec::toy(8);
        let model = build_model(&spec, Augmentation::None, 0).unwrap();
        assert_eq!(model.input_width(), 3);
        assert_eq!(model.logits_width(), 8);
        assert_eq!(model.hidden_widths(), vec![16, 16, 32, 64, 128, 64, 32]);
        for (aug, width) in [
            (Augmentation::Lle, 5),
            (Augmentation::Mp, 9),
            (Augmentation::LleMp, 11),
        ] {
            assert_eq!(build_model(&spec, aug, 0).unwrap().input_width(), width);
        }
    }

    #[test]
    fn channel_multiplier_scales_hidden_layers() {
        let base = build_model(&ArchitectureSpec::toy(8), Augmentation::Mp, 0).unwrap();
        for t in [2, 4] {
            let spec = ArchitectureSpec {
                t,
                ..ArchitectureSpec::toy(8)
            };
            let scaled = build_model(&spec, Augmentation::Mp, 0).unwrap();
            let expected: Vec<usize> = base.hidden_widths().iter().map(|w| w * t).collect();
            assert_eq!(scaled.hidden_widths(), expected);
            assert_eq!(scaled.logits_width(), 8);
        }
    }

    #[test]
    fn augmentation_tags() {
        for aug in Augmentation::ALL {
            assert_eq!(aug.to_string().parse::<Augmentation>().unwrap(), aug);
        }
        assert!("pca".parse::<Augmentation>().is_err());
    }

    #[test]
    fn spec_validation() {
        let mut spec = ArchitectureSpec::toy(8);
        spec.t = 0;
        assert!(build_model(&spec, Augmentation::None, 0).is_err());
        let mut spec = ArchitectureSpec::toy(8);
        spec.mp_planes = 2;
        assert!(spec.validate().is_err());
        let mut spec = ArchitectureSpec::toy(8);
        assert!(spec.set("head_widths", "1,2,3").is_err());
        assert!(spec.set("head_widths", "10,5").unwrap());
        assert!(!spec.set("epochs", "3").unwrap());
    }

    #[test]
    fn mixed_point_counts_rejected() {
        let a = generate_shape(ShapeClass::Sphere, 32, 0.0, 0).unwrap();
        let b = generate_shape(ShapeClass::Sphere, 33, 0.0, 0).unwrap();
        assert!(matches!(
            Batch::new(&[&a, &b], None),
            Err(Error::Contract { .. })
        ));
    }

    #[test]
    fn eval_is_deterministic() {
        let spec = ArchitectureSpec {
            k: 8,
            ..ArchitectureSpec::toy(8)
        };
        let mut model = build_model(&spec, Augmentation::Mp, 1).unwrap();
        let batch = toy_batch(3, 40);
        let a = model.forward(&batch, Mode::Eval).unwrap();
        let b = model.forward(&batch, Mode::Eval).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn lle_model_requires_lle_features() {
        let spec = ArchitectureSpec {
            k: 8,
            ..ArchitectureSpec::toy(8)
        };
        let mut model = build_model(&spec, Augmentation::Lle, 1).unwrap();
        assert!(matches!(
            model.forward(&toy_batch(2, 40), Mode::Eval),
            Err(Error::Contract { .. })
        ));
    }
}
