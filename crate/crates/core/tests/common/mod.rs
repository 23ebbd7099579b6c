//! Gradient-check suites shared by the integration tests.

#![allow(dead_code)]

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use ndarray::Array2;
use pointmanifold::manifold::lle_embed;
use pointmanifold::network::edgeconv::cloud_graphs;
use pointmanifold::network::gradcheck::{check_model, grad_check, GradCheckReport};
use pointmanifold::network::layers::{
    global_max_pool, global_max_pool_backward, leaky_relu, leaky_relu_backward,
    softmax_cross_entropy, BatchNorm, Dropout, Linear, LEAKY_SLOPE,
};
use pointmanifold::network::{
    build_model, ArchitectureSpec, Augmentation, Batch, EdgeConv, Mode, MpGate, Param,
};
use pointmanifold::pointset::{generate_shape, standardize, PointCloud, ShapeClass};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const H: f64 = 1e-5;
pub const LAYER_TOLERANCE: f64 = 1e-4;
pub const MODEL_TOLERANCE: f64 = 1e-3;

/// One named finite-difference comparison and its tolerance.
pub struct Check {
    pub name: String,
    pub report: GradCheckReport,
    pub tolerance: f64,
}

impl Check {
    fn new(name: impl Into<String>, report: GradCheckReport, tolerance: f64) -> Self {
        Check {
            name: name.into(),
            report,
            tolerance,
        }
    }

    pub fn ok(&self) -> bool {
        self.report.passed() && self.report.max_rel_error() <= self.tolerance
    }

    pub fn describe(&self) -> String {
        format!(
            "{}: max rel err {:.2e} over {} entries ({} skipped at kinks)",
            self.name,
            self.report.max_rel_error(),
            self.report.entries.len(),
            self.report.skipped
        )
    }
}

pub fn assert_checks(checks: &[Check]) {
    for c in checks {
        assert!(c.ok(), "{} (worst {:?})", c.describe(), c.report.worst());
    }
}

pub fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}

pub fn signs(values: impl IntoIterator<Item = f64>, h: &mut DefaultHasher) {
    for v in values {
        (v > 0.0).hash(h);
    }
}

pub fn params(visit: &mut dyn FnMut(&mut dyn FnMut(&str, &mut Param))) -> (Vec<f64>, Vec<f64>) {
    let (mut values, mut grads) = (Vec::new(), Vec::new());
    visit(&mut |_, p| {
        values.extend(p.value.iter().copied());
        grads.extend(p.grad.iter().copied());
    });
    (values, grads)
}

pub fn set_params(visit: &mut dyn FnMut(&mut dyn FnMut(&str, &mut Param)), values: &[f64]) {
    let mut offset = 0;
    visit(&mut |_, p| {
        for v in p.value.iter_mut() {
            *v = values[offset];
            offset += 1;
        }
    });
}

pub fn all_indices(len: usize) -> Vec<usize> {
    (0..len).collect()
}

/// Checks `f(x) = sum(g(x) ∘ r)` against its analytic input gradient.
fn input_check(
    name: &str,
    x: &Array2<f64>,
    analytic: &Array2<f64>,
    tolerance: f64,
    mut g: impl FnMut(Array2<f64>) -> (f64, u64),
) -> Check {
    let shape = x.dim();
    let report = grad_check(
        |v| g(Array2::from_shape_vec(shape, v.to_vec()).unwrap()),
        x.as_slice().unwrap(),
        analytic.as_slice().unwrap(),
        &all_indices(x.len()),
        H,
        tolerance,
    );
    Check::new(name, report, tolerance)
}

pub fn linear_checks() -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random(4, 3, &mut rng);
    let r = random(4, 5, &mut rng);
    let mut layer = Linear::new(3, 5, true, &mut rng);
    layer.forward(&x).unwrap();
    let dx = layer.backward(&x, &r);
    let input = input_check("linear input", &x, &dx, 1e-6, |x| {
        ((layer.forward(&x).unwrap() * &r).sum(), 0)
    });

    let (values, grads) = params(&mut |f| layer.visit("l", f));
    let report = grad_check(
        |v| {
            set_params(&mut |f| layer.visit("l", f), v);
            ((layer.forward(&x).unwrap() * &r).sum(), 0)
        },
        &values,
        &grads,
        &all_indices(values.len()),
        H,
        1e-6,
    );
    vec![input, Check::new("linear params", report, 1e-6)]
}

pub fn leaky_relu_checks() -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = random(6, 4, &mut rng);
    let r = random(6, 4, &mut rng);
    let dx = leaky_relu_backward(&x, &r, LEAKY_SLOPE);
    vec![input_check("leaky relu", &x, &dx, LAYER_TOLERANCE, |x| {
        let mut h = DefaultHasher::new();
        signs(x.iter().copied(), &mut h);
        ((leaky_relu(&x, LEAKY_SLOPE) * &r).sum(), h.finish())
    })]
}

pub fn batchnorm_checks() -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random(7, 3, &mut rng);
    let r = random(7, 3, &mut rng);
    let mut bn = BatchNorm::new(3);
    bn.gamma.value = random(1, 3, &mut rng);
    bn.beta.value = random(1, 3, &mut rng);
    bn.forward_train(&x).unwrap();
    let dx = bn.backward(&r).unwrap();
    let (values, grads) = params(&mut |f| bn.visit("bn", f));
    let input = input_check("batchnorm input", &x, &dx, LAYER_TOLERANCE, |x| {
        ((bn.forward_train(&x).unwrap() * &r).sum(), 0)
    });
    let report = grad_check(
        |v| {
            set_params(&mut |f| bn.visit("bn", f), v);
            ((bn.forward_train(&x).unwrap() * &r).sum(), 0)
        },
        &values,
        &grads,
        &all_indices(values.len()),
        H,
        LAYER_TOLERANCE,
    );
    vec![
        input,
        Check::new("batchnorm params", report, LAYER_TOLERANCE),
    ]
}

pub fn dropout_checks() -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = random(5, 4, &mut rng);
    let r = random(5, 4, &mut rng);
    let mut dropout = Dropout::new(0.5);
    dropout.forward_train(&x, &mut ChaCha8Rng::seed_from_u64(9));
    let dx = dropout.backward(&r);
    vec![input_check("dropout", &x, &dx, LAYER_TOLERANCE, |x| {
        let y = dropout.forward_train(&x, &mut ChaCha8Rng::seed_from_u64(9));
        ((y * &r).sum(), 0)
    })]
}

pub fn cross_entropy_checks() -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let logits = random(4, 6, &mut rng) * 3.0;
    let labels = [0, 5, 2, 2];
    let (_, grad) = softmax_cross_entropy(&logits, &labels).unwrap();
    vec![input_check(
        "softmax cross entropy",
        &logits,
        &grad,
        LAYER_TOLERANCE,
        |z| (softmax_cross_entropy(&z, &labels).unwrap().0, 0),
    )]
}

pub fn max_pool_checks() -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = random(12, 3, &mut rng);
    let r = random(3, 3, &mut rng);
    let (_, argmax) = global_max_pool(&x, 4).unwrap();
    let dx = global_max_pool_backward(&r, &argmax, 12);
    vec![input_check(
        "global max pool",
        &x,
        &dx,
        LAYER_TOLERANCE,
        |x| {
            let (pooled, argmax) = global_max_pool(&x, 4).unwrap();
            let mut h = DefaultHasher::new();
            argmax.hash(&mut h);
            ((pooled * &r).sum(), h.finish())
        },
    )]
}

fn edgeconv_fingerprint(conv: &EdgeConv) -> u64 {
    let mut h = DefaultHasher::new();
    conv.last_argmax().unwrap().hash(&mut h);
    signs(conv.last_preactivations().unwrap().iter().copied(), &mut h);
    h.finish()
}

pub fn edgeconv_checks(batch_norm: bool) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (clouds, n, c, m, k) = (2, 12, 4, 6, 4);
    let x = random(clouds * n, c, &mut rng);
    let r = random(clouds * n, m, &mut rng);
    let graphs = cloud_graphs(&x, n, k).unwrap();
    let mut conv = EdgeConv::new(c, m, batch_norm, &mut rng);
    let mode = Mode::Train { seed: 0 };
    conv.forward(&x, &graphs, mode).unwrap();
    let dx = conv.backward(&r).unwrap();
    let (values, grads) = params(&mut |f| conv.visit("ec", f));
    let tag = if batch_norm {
        "edgeconv+bn"
    } else {
        "edgeconv"
    };

    let input = input_check(&format!("{tag} input"), &x, &dx, LAYER_TOLERANCE, |x| {
        let y = conv.forward(&x, &graphs, mode).unwrap();
        ((y * &r).sum(), edgeconv_fingerprint(&conv))
    });
    let report = grad_check(
        |v| {
            set_params(&mut |f| conv.visit("ec", f), v);
            let y = conv.forward(&x, &graphs, mode).unwrap();
            ((y * &r).sum(), edgeconv_fingerprint(&conv))
        },
        &values,
        &grads,
        &all_indices(values.len()),
        H,
        LAYER_TOLERANCE,
    );
    vec![
        input,
        Check::new(format!("{tag} params"), report, LAYER_TOLERANCE),
    ]
}

pub fn mp_gate_checks() -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut checks = Vec::new();
    for planes in [vec![2], vec![0, 1, 2]] {
        let points = random(10, 3, &mut rng);
        let mut gate = MpGate::new(planes.clone(), 16, &mut rng).unwrap();
        let r = random(10, gate.width(), &mut rng);
        gate.forward(&points).unwrap();
        gate.backward(&r).unwrap();
        let (values, grads) = params(&mut |f| gate.visit("mp", f));
        let report = grad_check(
            |v| {
                set_params(&mut |f| gate.visit("mp", f), v);
                let y = gate.forward(&points).unwrap();
                let mut h = DefaultHasher::new();
                let (hidden, out) = gate.last_preactivations().unwrap();
                signs(hidden.iter().chain(out.iter()).copied(), &mut h);
                ((y * &r).sum(), h.finish())
            },
            &values,
            &grads,
            &all_indices(values.len()),
            H,
            LAYER_TOLERANCE,
        );
        checks.push(Check::new(
            format!("mp gate planes {planes:?}"),
            report,
            LAYER_TOLERANCE,
        ));
    }
    checks
}

/// Standardized labelled clouds cycling through the shape classes.
pub fn toy_clouds(count: usize, n: usize, seed: u64) -> Vec<PointCloud> {
    (0..count)
        .map(|i| {
            let class = ShapeClass::ALL[i % ShapeClass::ALL.len()];
            let mut c =
                standardize(&generate_shape(class, n, 0.02, seed + i as u64).unwrap()).unwrap();
            c.label = Some(class.index());
            c
        })
        .collect()
}

pub fn toy_batch(clouds: &[PointCloud], with_lle: bool) -> Batch {
    let refs: Vec<&PointCloud> = clouds.iter().collect();
    let lle: Option<Vec<Array2<f64>>> = with_lle.then(|| {
        clouds
            .iter()
            .map(|c| lle_embed(c, 12, 2).unwrap().coords)
            .collect()
    });
    let lle_refs: Option<Vec<&Array2<f64>>> = lle.as_ref().map(|v| v.iter().collect());
    Batch::new(&refs, lle_refs.as_deref()).unwrap()
}

/// Sampled entries of every parameter tensor of the toy model, per
/// augmentation, on two 32-point clouds.
pub fn end_to_end_checks() -> Vec<Check> {
    let clouds = toy_clouds(2, 32, 11);
    Augmentation::ALL
        .into_iter()
        .enumerate()
        .map(|(i, aug)| {
            let batch = toy_batch(&clouds, aug.uses_lle());
            let mut model = build_model(&ArchitectureSpec::toy(8), aug, 100 + i as u64).unwrap();
            let report = check_model(&mut model, &batch, 5, 2, H, MODEL_TOLERANCE).unwrap();
            Check::new(format!("toy model {aug}"), report, MODEL_TOLERANCE)
        })
        .collect()
}

/// Every layer primitive followed by the end-to-end model checks.
pub fn full_gradient_suite() -> Vec<Check> {
    let mut all = Vec::new();
    all.extend(linear_checks());
    all.extend(leaky_relu_checks());
    all.extend(batchnorm_checks());
    all.extend(dropout_checks());
    all.extend(cross_entropy_checks());
    all.extend(max_pool_checks());
    all.extend(edgeconv_checks(false));
    all.extend(edgeconv_checks(true));
    all.extend(mp_gate_checks());
    all.extend(end_to_end_checks());
    all
}
