mod common;

use common::{
    add, bce_oracle, decoder_oracle, feature_oracle, gradient_check, matmul, model_loss_oracle, rel_diff,
    to_dense, Dense,
};
use jssr_core::autoencoder::{
    asymptotic_covariance_check, covariance_features, decoder_forward, encoder_forward, eq4_decompose,
    evaluate_loss, extract_sensing_matrix, khatri_rao_conj, load_model, loss_and_gradients, save_model, train,
    vec_column, DecoderConfig, DecoderWeights, EncoderWeights, FeatureKind, Model, NoisePolicy, TrainConfig,
    CLAMP,
};
use jssr_core::baselines::gaussian_pilots;
use jssr_core::dataset::generate_dataset;
use jssr_core::rng::stream;
use jssr_core::signal::{
    build_signal, linear_measurement, measure, sample_activity, sample_channels, sample_noise, ActivityVector,
    GroupSparsityConfig,
};
use jssr_core::thresholding::SoftScores;
use jssr_core::ComplexMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::Rng;

#[test]
fn encoder_matches_complex_product() {
    let mut rng = stream(1, 0);
    for _ in 0..20 {
        let a = sample_channels(4, 6, &mut rng).unwrap();
        let x = sample_channels(6, 3, &mut rng).unwrap();
        let z = sample_noise(4, 3, 0.3, &mut rng).unwrap();
        let y = encoder_forward(&x, &EncoderWeights::from_matrix(&a), &z).unwrap();
        let expected = add(&matmul(&to_dense(&a), &to_dense(&x)), &to_dense(&z));
        assert!(rel_diff(&y, &expected) < 1e-12);
    }
}

#[test]
fn encoder_is_bit_identical_to_measure() {
    let mut rng = stream(2, 0);
    let a = gaussian_pilots(8, 3, &mut rng).unwrap();
    let x = sample_channels(8, 4, &mut rng).unwrap();
    let noise_rng = stream(2, 9);
    let z = sample_noise(3, 4, 0.1, &mut noise_rng.clone()).unwrap();
    let via_measure = measure(&a, &x, 0.1, &mut noise_rng.clone()).unwrap().y;
    let via_encoder = encoder_forward(&x, &EncoderWeights::from_matrix(a.matrix()), &z).unwrap();
    assert_eq!(via_measure, via_encoder);
}

#[test]
fn encoder_zero_in_zero_out() {
    let w = EncoderWeights::random(3, 5, &mut stream(3, 0));
    let y = encoder_forward(&ComplexMatrix::zeros(5, 2), &w, &ComplexMatrix::zeros(3, 2)).unwrap();
    assert!(y.is_zero());
}

#[test]
fn encoder_is_permutation_equivariant() {
    let mut rng = stream(4, 0);
    let a = sample_channels(3, 7, &mut rng).unwrap();
    let x = sample_channels(7, 2, &mut rng).unwrap();
    let z = sample_noise(3, 2, 0.1, &mut rng).unwrap();
    let perm = [3usize, 0, 6, 2, 5, 1, 4];
    let ap = ComplexMatrix::from_fn(3, 7, |r, c| a.get(r, perm[c]));
    let xp = ComplexMatrix::from_fn(7, 2, |r, c| x.get(perm[r], c));
    let y = encoder_forward(&x, &EncoderWeights::from_matrix(&a), &z).unwrap();
    let yp = encoder_forward(&xp, &EncoderWeights::from_matrix(&ap), &z).unwrap();
    assert!(y.max_abs_diff(&yp) < 1e-12);
}

#[test]
fn features_match_complex_covariance() {
    let mut rng = stream(5, 0);
    for m in [1usize, 2, 7] {
        let y = sample_channels(4, m, &mut rng).unwrap();
        let f = covariance_features(&y).unwrap();
        let expected = feature_oracle(&to_dense(&y));
        for (g, e) in f.values().iter().zip(&expected) {
            assert!((g - e).abs() < 1e-12);
        }
        let re = f.re_block();
        for l in 0..4 {
            let power = (0..m).map(|c| y.re[[l, c]].powi(2) + y.im[[l, c]].powi(2)).sum::<f64>() / m as f64;
            assert!((re[[l, l]] - power).abs() < 1e-12);
        }
    }
}

proptest! {
    #[test]
    fn covariance_blocks_are_hermitian(seed in any::<u64>(), l in 1usize..6, m in 1usize..6) {
        let y = sample_channels(l, m, &mut stream(seed, 0)).unwrap();
        let f = covariance_features(&y).unwrap();
        let (re, im) = (f.re_block(), f.im_block());
        for i in 0..l {
            prop_assert!(re[[i, i]] >= 0.0);
            for j in 0..l {
                prop_assert!((re[[i, j]] - re[[j, i]]).abs() <= 1e-12);
                prop_assert!((im[[i, j]] + im[[j, i]]).abs() <= 1e-12);
            }
        }
    }
}

fn random_biases(w: &mut DecoderWeights, rng: &mut impl Rng) {
    for layer in &mut w.layers {
        layer.bias.mapv_inplace(|_| rng.random_range(-0.5..0.5));
    }
}

#[test]
fn decoder_matches_scalar_loops() {
    let mut rng = stream(6, 0);
    let cfg = DecoderConfig::covariance(2, 3, 2, 1).with_hidden_width(4);
    for _ in 0..10 {
        let mut w = DecoderWeights::glorot(&cfg, &mut rng);
        random_biases(&mut w, &mut rng);
        let y = sample_channels(2, 2, &mut rng).unwrap();
        let f = covariance_features(&y).unwrap();
        let (scores, _) = decoder_forward(&f, &w).unwrap();
        let expected = decoder_oracle(f.values().as_slice().unwrap(), &w, CLAMP);
        for (s, e) in scores.as_slice().iter().zip(&expected) {
            assert!((s - e).abs() < 1e-12);
        }
    }
}

#[test]
fn bce_matches_scalar_loops() {
    use jssr_core::autoencoder::bce_loss;
    let mut rng = stream(7, 0);
    let truth: Vec<ActivityVector> = (0..3)
        .map(|_| ActivityVector::from_bools((0..4).map(|_| rng.random_bool(0.4))))
        .collect();
    let scores: Vec<SoftScores> = (0..3)
        .map(|_| SoftScores::new((0..4).map(|_| rng.random_range(0.01..0.99)).collect()))
        .collect();
    let got = bce_loss(&truth, &scores).unwrap();
    assert!((got - bce_oracle(&truth, &scores)).abs() < 1e-12);
}

fn tiny_batch(arch: &DecoderConfig, seed: u64, batch: usize) -> (Vec<ComplexMatrix>, Vec<ComplexMatrix>, Vec<ActivityVector>) {
    let cfg = GroupSparsityConfig::new(arch.devices, arch.devices, 0.4, 0.4).unwrap();
    let mut rng = stream(seed, 1);
    let mut xs = Vec::new();
    let mut zs = Vec::new();
    let mut truth = Vec::new();
    for _ in 0..batch {
        let alpha = sample_activity(&cfg, &mut rng).unwrap();
        let h = sample_channels(arch.devices, arch.antennas, &mut rng).unwrap();
        xs.push(build_signal(&alpha, &h).unwrap().x);
        zs.push(sample_noise(arch.measurements, arch.antennas, 0.1, &mut rng).unwrap());
        truth.push(alpha);
    }
    (xs, zs, truth)
}

fn refs<T>(v: &[T]) -> Vec<&T> {
    v.iter().collect()
}

#[test]
fn gradients_match_finite_differences() {
    for features in [FeatureKind::Covariance, FeatureKind::Raw] {
        let arch = DecoderConfig::covariance(3, 6, 2, 1).with_hidden_width(5).with_features(features);
        let mut rng = stream(8, 0);
        let mut model = Model::init(arch, 0.1, 8, &mut rng).unwrap();
        random_biases(&mut model.decoder, &mut rng);
        let (xs, zs, truth) = tiny_batch(&arch, 8, 3);
        let (worst, checked) = gradient_check(&model, &refs(&xs), &refs(&zs), &refs(&truth), 1e-5);
        let expected = 2 * 3 * 6 + arch.layer_shapes().iter().map(|(o, i)| o * i + o).sum::<usize>();
        assert_eq!(checked, expected);
        assert!(worst < 1e-5, "{features:?}: worst relative error {worst}");
    }
}

#[test]
fn batched_loss_matches_oracle() {
    let arch = DecoderConfig::covariance(3, 6, 2, 2).with_hidden_width(4);
    let mut rng = stream(9, 0);
    let mut model = Model::init(arch, 0.1, 9, &mut rng).unwrap();
    random_biases(&mut model.decoder, &mut rng);
    let (xs, zs, truth) = tiny_batch(&arch, 9, 5);
    let (loss, _) = loss_and_gradients(&model, &refs(&xs), &refs(&zs), &refs(&truth)).unwrap();
    assert!((loss - model_loss_oracle(&model, &refs(&xs), &refs(&zs), &truth)).abs() < 1e-12);
}

#[test]
fn symmetric_point_has_zero_gradient() {
    // Zero decoder, and a batch whose labels are complementary: every score is
    // 1/2 and the mean error of every output is zero.
    let arch = DecoderConfig::covariance(3, 6, 2, 1).with_hidden_width(5);
    let mut model = Model::init(arch, 0.1, 10, &mut stream(10, 0)).unwrap();
    model.decoder = DecoderWeights::zeros(&arch);
    let (mut xs, mut zs, mut truth) = tiny_batch(&arch, 10, 1);
    let flipped = ActivityVector::from_bools(truth[0].as_slice().iter().map(|&a| a == 0));
    let h = sample_channels(6, 2, &mut stream(10, 2)).unwrap();
    xs.push(build_signal(&flipped, &h).unwrap().x);
    zs.push(zs[0].clone());
    truth.push(flipped);
    let (loss, grads) = loss_and_gradients(&model, &refs(&xs), &refs(&zs), &refs(&truth)).unwrap();
    assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
    assert!(grads.max_abs() < 1e-15);
}

#[test]
fn saturated_output_passes_no_gradient() {
    let arch = DecoderConfig::covariance(3, 6, 2, 1).with_hidden_width(5);
    let mut rng = stream(11, 0);
    let mut model = Model::init(arch, 0.1, 11, &mut rng).unwrap();
    random_biases(&mut model.decoder, &mut rng);
    let (xs, zs, _) = tiny_batch(&arch, 11, 1);
    // Unit 2 saturates at exactly 1 and is labelled active: zero upstream.
    model.decoder.layers[1].bias[2] = 60.0;
    let truth = ActivityVector::from_bools([false, false, true, false, true, false]);
    let (_, grads) = loss_and_gradients(&model, &refs(&xs), &refs(&zs), &[&truth]).unwrap();
    let (dw, db) = &grads.layers[1];
    assert_eq!(db[2], 0.0);
    assert!(dw.row(2).iter().all(|&g| g == 0.0));
    assert!(dw.row(0).iter().any(|&g| g != 0.0));
}

fn toy_sets(n: usize, l: usize, m: usize, count: usize) -> (DecoderConfig, Vec<jssr_core::JointSignal>, Vec<jssr_core::JointSignal>) {
    let cfg = GroupSparsityConfig::from_mean_and_ratio(n, n / 2, 0.1, 3.0).unwrap();
    let train_set = generate_dataset(&cfg, m, count, 100).unwrap();
    let val_set = generate_dataset(&cfg, m, 64, 101).unwrap();
    (DecoderConfig::covariance(l, n, m, 1), train_set, val_set)
}

fn overfit_config() -> TrainConfig {
    TrainConfig {
        batch_size: 8,
        epochs: 500,
        patience: 0,
        seed: 3,
        noise: NoisePolicy::Fixed,
        ..TrainConfig::default()
    }
}

#[test]
fn covariance_decoder_overfits_toy_set() {
    let (arch, train_set, val_set) = toy_sets(20, 6, 4, 32);
    let out = train(&train_set, &val_set, &overfit_config(), &arch).unwrap();
    let last = out.log.last().unwrap();
    assert_eq!(out.log.len(), 500);
    assert!(last.train_loss < 0.05, "final training loss {}", last.train_loss);
}

#[test]
fn naive_decoder_overfits_toy_set() {
    let (arch, train_set, val_set) = toy_sets(20, 6, 4, 32);
    let arch = arch.with_features(FeatureKind::Raw);
    let out = jssr_core::baselines::naive_decoder_train(&train_set, &val_set, &overfit_config(), &arch).unwrap();
    let last = out.log.last().unwrap();
    assert!(last.train_loss < 0.05, "final training loss {}", last.train_loss);
}

#[test]
fn training_is_reproducible_and_keeps_the_best_model() {
    let (arch, train_set, val_set) = toy_sets(20, 6, 4, 200);
    let cfg = TrainConfig {
        batch_size: 16,
        epochs: 30,
        patience: 5,
        seed: 12,
        ..TrainConfig::default()
    };
    let a = train(&train_set, &val_set, &cfg, &arch).unwrap();
    let b = train(&train_set, &val_set, &cfg, &arch).unwrap();
    let losses = |o: &jssr_core::autoencoder::TrainOutcome| -> Vec<(usize, f64, f64)> {
        o.log.iter().map(|e| (e.epoch, e.train_loss, e.val_loss)).collect()
    };
    assert_eq!(losses(&a), losses(&b));
    assert_eq!(a.model, b.model);

    let seed = cfg.validation_noise_seed();
    let best = evaluate_loss(&a.model, &val_set, seed, cfg.sigma2).unwrap();
    let last = evaluate_loss(&a.final_model, &val_set, seed, cfg.sigma2).unwrap();
    assert_eq!(best, a.best_val_loss);
    assert!(best <= last);
    assert!(a.best_val_loss < a.initial_val_loss);
    assert!(a.model.encoder.column_norm_violation() < 1e-9);
    assert!(a.final_model.encoder.column_norm_violation() < 1e-9);
}

#[test]
fn extracted_pilots_round_trip() {
    let (arch, train_set, val_set) = toy_sets(20, 6, 4, 64);
    let cfg = TrainConfig {
        batch_size: 16,
        epochs: 3,
        seed: 13,
        ..TrainConfig::default()
    };
    let model = train(&train_set, &val_set, &cfg, &arch).unwrap().model;
    let a = extract_sensing_matrix(&model.encoder).unwrap();
    let target = 6f64.sqrt();
    assert!(a.matrix().column_norms().iter().all(|n| (n - target).abs() < 1e-9));

    let x = &train_set[0].x;
    let z = sample_noise(6, 4, 0.1, &mut stream(13, 5)).unwrap();
    assert_eq!(
        encoder_forward(x, &model.encoder, &z).unwrap(),
        linear_measurement(a.matrix(), x, &z).unwrap()
    );

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    save_model(&model, &path).unwrap();
    let reloaded = extract_sensing_matrix(&load_model(&path).unwrap().encoder).unwrap();
    assert_eq!(a, reloaded);
}

/// `vec(Y Y^H / M)` through the oracle, against `(A* ⊙ A) r + vec(E1) + vec(E2)`.
fn eq4_residual(a: &jssr_core::SensingMatrix, x: &ComplexMatrix, z: &ComplexMatrix) -> f64 {
    let y = add(&matmul(&to_dense(a.matrix()), &to_dense(x)), &to_dense(z));
    let c = common::covariance(&y);
    let l = c.len();
    let lhs: Dense = (0..l * l).map(|i| vec![c[i % l][i / l]]).collect();
    let d = eq4_decompose(a, x, z).unwrap();
    let rhs = d.linear_term.add(&vec_column(&d.e1)).unwrap().add(&vec_column(&d.e2)).unwrap();
    rel_diff(&rhs, &lhs)
}

#[test]
fn eq4_identity_on_random_instances() {
    let mut rng = stream(14, 0);
    let cfg = GroupSparsityConfig::new(10, 10, 0.5, 0.5).unwrap();
    for _ in 0..20 {
        let a = gaussian_pilots(10, 4, &mut rng).unwrap();
        let alpha = sample_activity(&cfg, &mut rng).unwrap();
        let x = build_signal(&alpha, &sample_channels(10, 3, &mut rng).unwrap()).unwrap().x;
        let z = sample_noise(4, 3, 0.1, &mut rng).unwrap();
        assert!(eq4_residual(&a, &x, &z) < 1e-10);
    }
}

#[test]
fn khatri_rao_columns_are_kronecker_products() {
    let a = sample_channels(3, 4, &mut stream(15, 0)).unwrap();
    let kr = khatri_rao_conj(&a);
    let d = to_dense(&a);
    for n in 0..4 {
        for i in 0..3 {
            for j in 0..3 {
                let expected: Complex64 = d[i][n].conj() * d[j][n];
                let (re, im) = kr.get(i * 3 + j, n);
                assert!((re - expected.re).abs() < 1e-14 && (im - expected.im).abs() < 1e-14);
            }
        }
    }
}

#[test]
fn large_m_covariance_is_near_its_limit() {
    let mut rng = stream(16, 0);
    let a = gaussian_pilots(100, 14, &mut rng).unwrap();
    let cfg = GroupSparsityConfig::from_mean_and_ratio(100, 10, 0.1, 3.0).unwrap();
    let alpha = ActivityVector::from_bools((0..100).map(|n| n % 10 == 0 || cfg.group_of(n) == 1));
    let rep = asymptotic_covariance_check(&a, &alpha, 0.1, 10_000, &mut rng).unwrap();
    assert!(rep.relative_residual < 0.1, "{}", rep.relative_residual);
}

#[test]
fn silent_noiseless_covariance_is_zero() {
    let mut rng = stream(17, 0);
    let a = gaussian_pilots(6, 3, &mut rng).unwrap();
    let rep = asymptotic_covariance_check(&a, &ActivityVector::zeros(6), 0.0, 50, &mut rng).unwrap();
    assert_eq!(rep.relative_residual, 0.0);
}
