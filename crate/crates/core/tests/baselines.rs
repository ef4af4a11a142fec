mod common;

use common::{covariance, matmul, ml_step_oracle, model_covariance, nll, to_dense, inverse, Dense};
use jssr_core::autoencoder::sample_covariance;
use jssr_core::baselines::{
    cov_lasso, cov_ml, cov_ml_observed, gaussian_pilots, group_lasso, ml_coordinate_step, mmv_amp, AmpPrior,
    CovLassoSolver, Detector, GroupLassoDetector, GroupLassoSolver, MlDetector, SolverConfig,
};
use jssr_core::rng::stream;
use jssr_core::signal::{build_signal, linear_measurement, sample_activity, sample_channels, sample_noise, GroupSparsityConfig, SensingMatrix};
use jssr_core::thresholding::{apply_threshold, calibrate_threshold, error_rate, SoftScores, ThresholdGrid};
use jssr_core::ComplexMatrix;
use num_complex::Complex64;

#[test]
fn pilot_moments() {
    let a = gaussian_pilots(1000, 1000, &mut stream(1, 0)).unwrap();
    let m = a.matrix();
    let power = (m.re.iter().map(|v| v * v).sum::<f64>() + m.im.iter().map(|v| v * v).sum::<f64>()) / 1e6;
    assert!((power - 1.0).abs() < 0.01, "{power}");
    let norms = m.column_norms();
    let mean_sq = norms.iter().map(|n| n * n).sum::<f64>() / norms.len() as f64;
    assert!((mean_sq / 1000.0 - 1.0).abs() < 0.02);
    assert_eq!(a, gaussian_pilots(1000, 1000, &mut stream(1, 0)).unwrap());
}

/// Random `(A, X, Y)` with the given activity probability.
fn instance(seed: u64, n: usize, l: usize, m: usize, p: f64, sigma2: f64) -> (SensingMatrix, ComplexMatrix, jssr_core::signal::ActivityVector, ComplexMatrix) {
    let mut rng = stream(seed, 0);
    let a = gaussian_pilots(n, l, &mut rng).unwrap();
    let cfg = GroupSparsityConfig::new(n, n, p, p).unwrap();
    let alpha = sample_activity(&cfg, &mut rng).unwrap();
    let x = build_signal(&alpha, &sample_channels(n, m, &mut rng).unwrap()).unwrap().x;
    let z = sample_noise(l, m, sigma2, &mut rng).unwrap();
    let y = linear_measurement(a.matrix(), &x, &z).unwrap();
    (a, x, alpha, y)
}

/// `1/2 ||vec(S) - sum_n r_n vec(a_n a_n^H)||^2 + lambda sum r`.
fn cov_lasso_objective(s: &Dense, a: &Dense, r: &[f64], lambda: f64) -> f64 {
    let l = s.len();
    let mut total = 0.0;
    for i in 0..l {
        for j in 0..l {
            let mut fit = Complex64::new(0.0, 0.0);
            for (n, rn) in r.iter().enumerate() {
                fit += a[i][n] * a[j][n].conj() * rn;
            }
            total += (s[i][j] - fit).norm_sqr();
        }
    }
    0.5 * total + lambda * r.iter().sum::<f64>()
}

/// `1/2 ||Y - AX||_F^2 + lambda sum_n ||X_n||`.
fn group_lasso_objective(y: &Dense, a: &Dense, x: &Dense, lambda: f64) -> f64 {
    let ax = matmul(a, x);
    let fit: f64 = y.iter().flatten().zip(ax.iter().flatten()).map(|(u, v)| (u - v).norm_sqr()).sum();
    let penalty: f64 = x.iter().map(|row| row.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()).sum();
    0.5 * fit + lambda * penalty
}

fn non_increasing(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0))
}

#[test]
fn cov_lasso_descends_and_matches_long_run() {
    for seed in 0..3 {
        let (a, _, _, y) = instance(10 + seed, 8, 4, 16, 0.3, 0.1);
        let s = sample_covariance(&y).unwrap();
        let lambda = 0.05 * CovLassoSolver::new(&a).lambda_max(&s).unwrap();
        let cfg = SolverConfig {
            lambda,
            max_iterations: 100_000,
            tolerance: 1e-13,
            track_objective: true,
            ..SolverConfig::default()
        };
        let rep = cov_lasso(&s, &a, &cfg).unwrap();
        assert!(non_increasing(&rep.objective), "seed {seed}");
        let reference = cov_lasso(
            &s,
            &a,
            &SolverConfig {
                max_iterations: 1_000_000,
                tolerance: 0.0,
                track_objective: false,
                ..cfg
            },
        )
        .unwrap();
        let (sd, ad) = (to_dense(&s), to_dense(a.matrix()));
        let f = cov_lasso_objective(&sd, &ad, rep.value.as_slice(), lambda);
        let f_ref = cov_lasso_objective(&sd, &ad, reference.value.as_slice(), lambda);
        assert!((f - f_ref).abs() < 1e-8, "seed {seed}: {f} vs {f_ref}");
        let tracked = *rep.objective.last().unwrap();
        assert!((tracked - f).abs() < 1e-10 * f.abs().max(1.0));
    }
}

#[test]
fn group_lasso_descends_and_matches_long_run() {
    for seed in 0..3 {
        let (a, _, _, y) = instance(20 + seed, 10, 5, 2, 0.2, 0.1);
        let solver = GroupLassoSolver::new(&a);
        let lambda = 0.1 * solver.lambda_max(&y).unwrap();
        let cfg = SolverConfig {
            lambda,
            max_iterations: 100_000,
            tolerance: 1e-13,
            track_objective: true,
            ..SolverConfig::default()
        };
        let rep = solver.solve(&y, &cfg).unwrap();
        assert!(non_increasing(&rep.objective), "seed {seed}");
        let reference = solver
            .solve(
                &y,
                &SolverConfig {
                    max_iterations: 1_000_000,
                    tolerance: 0.0,
                    track_objective: false,
                    ..cfg
                },
            )
            .unwrap();
        let (yd, ad) = (to_dense(&y), to_dense(a.matrix()));
        let f = group_lasso_objective(&yd, &ad, &to_dense(&rep.value), lambda);
        let f_ref = group_lasso_objective(&yd, &ad, &to_dense(&reference.value), lambda);
        assert!((f - f_ref).abs() < 1e-8, "seed {seed}: {f} vs {f_ref}");

        let norms = group_lasso(&y, &a, &cfg).unwrap().value;
        for (n, row) in to_dense(&rep.value).iter().enumerate() {
            let expected = row.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            assert!((norms[n] - expected).abs() < 1e-12);
        }
    }
}

#[test]
fn ml_step_matches_golden_section() {
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let (a, _, _, y) = instance(30 + seed, 8, 4, 6, 0.4, 0.1);
        let mut rng = stream(30 + seed, 1);
        let gamma: Vec<f64> = (0..8).map(|_| if rand::Rng::random_bool(&mut rng, 0.5) { rand::Rng::random_range(&mut rng, 0.0..2.0) } else { 0.0 }).collect();
        let ad = to_dense(a.matrix());
        let s_hat = covariance(&to_dense(&y));
        let inv = inverse(&model_covariance(&ad, &gamma, 0.1));
        for n in 0..8 {
            let col: Dense = (0..4).map(|i| vec![ad[i][n]]).collect();
            let v = matmul(&inv, &col);
            let q: f64 = (0..4).map(|i| (col[i][0].conj() * v[i][0]).re).sum();
            let w = matmul(&s_hat, &v);
            let s: f64 = (0..4).map(|i| (v[i][0].conj() * w[i][0]).re).sum();
            let d = ml_coordinate_step(q, s, gamma[n]);
            let oracle = ml_step_oracle(q, s, gamma[n]);
            worst = worst.max((d - oracle).abs());

            // The 1-D reduction agrees with the full likelihood.
            let mut moved = gamma.clone();
            moved[n] += d;
            let full = nll(&s_hat, &ad, &moved, 0.1) - nll(&s_hat, &ad, &gamma, 0.1);
            let reduced = (1.0 + d * q).ln() - d * s / (1.0 + d * q);
            assert!((full - reduced).abs() < 1e-9);
        }
    }
    assert!(worst < 1e-8, "worst deviation {worst}");
}

#[test]
fn ml_likelihood_never_increases() {
    for seed in 0..3 {
        let (a, _, _, y) = instance(40 + seed, 12, 5, 8, 0.3, 0.1);
        let s = sample_covariance(&y).unwrap();
        let (sd, ad) = (to_dense(&s), to_dense(a.matrix()));
        let mut values = vec![nll(&sd, &ad, &[0.0; 12], 0.1)];
        let cfg = SolverConfig {
            max_iterations: 15,
            tolerance: 0.0,
            track_objective: true,
            ..SolverConfig::default()
        };
        let rep = cov_ml_observed(&s, &a, 0.1, &cfg, |_, g| values.push(nll(&sd, &ad, g, 0.1))).unwrap();
        assert!(values.len() > 12);
        assert!(non_increasing(&values), "seed {seed}");
        // The solver's own running likelihood agrees with direct evaluation.
        assert_eq!(rep.objective.len(), values.len());
        for (tracked, direct) in rep.objective.iter().zip(&values) {
            assert!((tracked - direct).abs() < 1e-9 * direct.abs().max(1.0));
        }
    }
}

#[test]
fn ml_is_scale_homogeneous() {
    let (a, _, _, y) = instance(50, 12, 5, 8, 0.3, 0.1);
    let s = sample_covariance(&y).unwrap();
    let cfg = SolverConfig {
        max_iterations: 15,
        tolerance: 1e-6,
        ..SolverConfig::default()
    };
    let base = cov_ml(&s, &a, 0.1, &cfg).unwrap().value;
    let c = 7.5;
    let scaled = cov_ml(&s.scaled(c), &a, 0.1 * c, &cfg).unwrap().value;
    for (g, gs) in base.as_slice().iter().zip(scaled.as_slice()) {
        assert!((gs - c * g).abs() < 1e-8 * (c * g).abs().max(1.0), "{gs} vs {}", c * g);
    }
}

#[test]
fn amp_with_identity_pilots() {
    let n = 20;
    let mut rng = stream(60, 0);
    let a = SensingMatrix::new(ComplexMatrix::identity(n));
    let cfg = GroupSparsityConfig::new(n, n, 0.3, 0.3).unwrap();
    let mut truth = Vec::new();
    let mut est = Vec::new();
    for _ in 0..20 {
        let alpha = sample_activity(&cfg, &mut rng).unwrap();
        let x = build_signal(&alpha, &sample_channels(n, 4, &mut rng).unwrap()).unwrap().x;
        let z = sample_noise(n, 4, 1e-6, &mut rng).unwrap();
        let y = linear_measurement(a.matrix(), &x, &z).unwrap();
        let prior = AmpPrior {
            activity: 0.3,
            channel_variance: 1.0,
        };
        let scores = mmv_amp(&y, &a, &prior, &SolverConfig { max_iterations: 50, ..SolverConfig::default() })
            .unwrap()
            .value;
        for (n, &s) in scores.as_slice().iter().enumerate() {
            if alpha.is_active(n) {
                assert!(s > 0.99, "active score {s}");
            } else {
                assert!(s < 0.01, "inactive score {s}");
            }
        }
        est.push(apply_threshold(&scores, 0.5));
        truth.push(alpha);
    }
    assert_eq!(error_rate(&truth, &est).unwrap(), 0.0);
}

#[test]
fn amp_beats_matched_filter() {
    let (n, l, m, p) = (12, 8, 4, 0.15);
    let a = gaussian_pilots(n, l, &mut stream(70, 0)).unwrap();
    let cfg = GroupSparsityConfig::new(n, n, p, p).unwrap();
    let prior = AmpPrior {
        activity: p,
        channel_variance: 1.0,
    };
    let solver_cfg = SolverConfig {
        max_iterations: 50,
        ..SolverConfig::default()
    };
    let ah = a.matrix().conj_transpose();
    let mut truth = Vec::new();
    let mut amp_scores = Vec::new();
    let mut mf_scores = Vec::new();
    let mut rng = stream(70, 1);
    for _ in 0..2000 {
        let alpha = sample_activity(&cfg, &mut rng).unwrap();
        let x = build_signal(&alpha, &sample_channels(n, m, &mut rng).unwrap()).unwrap().x;
        let z = sample_noise(l, m, 0.1, &mut rng).unwrap();
        let y = linear_measurement(a.matrix(), &x, &z).unwrap();
        amp_scores.push(mmv_amp(&y, &a, &prior, &solver_cfg).unwrap().value);
        let energy = ah.matmul(&y).unwrap().row_norms_sq();
        mf_scores.push(SoftScores::new(energy.iter().map(|e| e / (1.0 + e)).collect()));
        truth.push(alpha);
    }
    // Each detector gets its own best threshold on the same samples.
    let grid = ThresholdGrid::default();
    let best_rate = |scores: &[SoftScores]| {
        let r = calibrate_threshold(scores, &truth, &grid).unwrap();
        let d: Vec<_> = scores.iter().map(|s| apply_threshold(s, r)).collect();
        error_rate(&truth, &d).unwrap()
    };
    let (amp, mf) = (best_rate(&amp_scores), best_rate(&mf_scores));
    assert!(amp <= mf, "AMP {amp}, matched filter {mf}");
}

#[test]
fn detectors_are_deterministic() {
    let (a, _, _, y) = instance(80, 20, 6, 4, 0.2, 0.1);
    let glasso = GroupLassoDetector::new(&a, SolverConfig::default()).with_relative_lambda(0.1);
    let ml = MlDetector::new(&a, 0.1);
    for det in [&glasso as &dyn Detector, &ml] {
        let first = det.detect(&y).unwrap();
        let second = det.detect(&y).unwrap();
        assert_eq!(first, second, "{}", det.name());
    }
}
