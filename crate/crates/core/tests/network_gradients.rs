mod common;

use std::time::Instant;

use ndarray::{Array1, Array2};
use pointmanifold::network::gradcheck::{grad_check, model_loss};
use pointmanifold::network::layers::{softmax_cross_entropy, BatchNorm};
use pointmanifold::network::{build_model, ArchitectureSpec, Augmentation, Mode};
use pointmanifold::pointset::PointCloud;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{assert_checks, toy_batch, toy_clouds, H};

#[test]
fn linear_layer_gradients() {
    assert_checks(&common::linear_checks());
}

#[test]
fn leaky_relu_gradients() {
    assert_checks(&common::leaky_relu_checks());
}

#[test]
fn batchnorm_gradients() {
    assert_checks(&common::batchnorm_checks());
}

#[test]
fn dropout_gradients() {
    assert_checks(&common::dropout_checks());
}

#[test]
fn cross_entropy_gradients() {
    assert_checks(&common::cross_entropy_checks());
}

#[test]
fn max_pool_gradients() {
    assert_checks(&common::max_pool_checks());
}

#[test]
fn edgeconv_gradients() {
    let checks = common::edgeconv_checks(false);
    assert_checks(&checks);
    // at most half the input entries may sit on a max or sign kink
    assert!(checks[0].report.entries.len() * 2 >= 2 * 12 * 4);
}

#[test]
fn edgeconv_batchnorm_gradients() {
    assert_checks(&common::edgeconv_checks(true));
}

#[test]
fn mp_gate_gradients() {
    assert_checks(&common::mp_gate_checks());
}

#[test]
fn end_to_end_gradients() {
    let start = Instant::now();
    let checks = common::end_to_end_checks();
    assert_checks(&checks);
    for c in &checks {
        assert!(
            c.report.entries.len() >= 40,
            "{}: only {} entries survived",
            c.name,
            c.report.entries.len()
        );
    }
    assert!(start.elapsed().as_secs() < 60);
}

#[test]
fn end_to_end_detects_corrupted_backward() {
    let clouds = toy_clouds(2, 32, 11);
    let batch = toy_batch(&clouds, false);
    let mut model = build_model(&ArchitectureSpec::toy(8), Augmentation::Mp, 3).unwrap();
    model.zero_grad();
    let logits = model.forward(&batch, Mode::Train { seed: 5 }).unwrap();
    let (_, grad) = softmax_cross_entropy(&logits, &batch.labels).unwrap();
    model.backward(&grad).unwrap();
    let mut analytic = model.grad_vector();
    let params = model.param_vector();
    // flip the sign of one embedding weight gradient
    let offset = model
        .parameter_shapes()
        .iter()
        .take_while(|(name, _)| name != "embed.weight")
        .map(|(_, (r, c))| r * c)
        .sum::<usize>();
    let target = (offset..offset + 100)
        .max_by(|&a, &b| analytic[a].abs().total_cmp(&analytic[b].abs()))
        .unwrap();
    analytic[target] = -analytic[target];
    let report = grad_check(
        |p| {
            model.set_param_vector(p);
            model_loss(&mut model, &batch, 5).unwrap()
        },
        &params,
        &analytic,
        &[target],
        H,
        1e-3,
    );
    assert!(!report.passed());
}

#[test]
fn toy_parameter_count_matches_audit() {
    // EdgeConv: 2·M·c kernels + 2·M batch norm
    //   3→16: 96+32, 16→16: 512+32, 16→32: 1024+64, 32→64: 4096+128
    // embedding 128→128 (cat of 16+16+32+64), no bias: 16384 + bn 256
    // head 128→64 no bias: 8192 + 128; 64→32 with bias: 2080 + 64
    // logits 32→8 with bias: 264
    let mut model = build_model(&ArchitectureSpec::toy(8), Augmentation::None, 0).unwrap();
    assert_eq!(model.parameter_count(), 33352);
    // gate 6→16→1 adds 129, and the first EdgeConv now reads 9 channels
    let mut mp = build_model(&ArchitectureSpec::toy(8), Augmentation::Mp, 0).unwrap();
    assert_eq!(mp.parameter_count(), 33352 - 96 + 288 + 129);
}

fn permute_cloud(cloud: &PointCloud, perm: &[usize]) -> PointCloud {
    let mut out = cloud.clone();
    for (dst, &src) in perm.iter().enumerate() {
        out.points.row_mut(dst).assign(&cloud.points.row(src));
    }
    out
}

#[test]
fn eval_logits_are_permutation_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let clouds = toy_clouds(3, 64, 40);
    for aug in [Augmentation::None, Augmentation::Mp] {
        let mut model = build_model(&ArchitectureSpec::toy(8), aug, 1).unwrap();
        // give batch norm non-trivial running statistics
        let train = toy_batch(&clouds, false);
        model.forward(&train, Mode::Train { seed: 1 }).unwrap();
        let base = model
            .forward(&toy_batch(&clouds, false), Mode::Eval)
            .unwrap();
        let mut perm: Vec<usize> = (0..64).collect();
        for _ in 0..3 {
            for i in (1..perm.len()).rev() {
                perm.swap(i, rng.random_range(0..=i));
            }
            let permuted: Vec<PointCloud> =
                clouds.iter().map(|c| permute_cloud(c, &perm)).collect();
            let logits = model
                .forward(&toy_batch(&permuted, false), Mode::Eval)
                .unwrap();
            let diff = (&logits - &base)
                .mapv(f64::abs)
                .fold(0.0f64, |a, &b| a.max(b));
            assert!(diff <= 1e-9, "{aug}: {diff:e}");
        }
    }
}

#[test]
fn bn_running_statistics_track_batches() {
    let mut bn = BatchNorm::new(2);
    let x = Array2::from_shape_vec((4, 2), vec![1.0, 0.0, 3.0, 0.0, 5.0, 2.0, 7.0, 2.0]).unwrap();
    for _ in 0..200 {
        bn.forward_train(&x).unwrap();
    }
    let mean = Array1::from(vec![4.0, 1.0]);
    assert!((&bn.running_mean - &mean).mapv(f64::abs).sum() < 1e-6);
}
