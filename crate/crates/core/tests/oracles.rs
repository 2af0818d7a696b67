//! Library results checked against independent brute-force computations.

mod common;

use common::*;
use nystrom_erm::diagnostics::{
    effective_dim_2, fit_eigendecay, projection_residual, Decay, ResidualProbe,
};
use nystrom_erm::kernel::gram;
use nystrom_erm::nystrom::DEFAULT_EIGEN_TOL;
use nystrom_erm::sampling::ScoreKind;
use nystrom_erm::solver::{
    empirical_risk, loss_value, objective, predict_embedded, LossSpec, StepSchedule,
};
use nystrom_erm::synth::{covariance_diagonal, generate, SynthDecay, SynthSpec};
use nystrom_erm::*;

#[test]
fn exact_scores_match_dense_inverse() {
    let k = random_psd(50, 30, 0.1, 1);
    for alpha in [1e-3, 1e-2, 0.3] {
        let s = exact_leverage_scores(&k, alpha).unwrap();
        let oracle = dense_inverse_scores(&k, alpha);
        for (a, b) in s.scores.iter().zip(&oracle) {
            assert!((a - b).abs() <= 1e-8, "{a} vs {b}");
        }
        assert!(s.scores.iter().all(|&v| v > 0.0 && v < 1.0));
    }
}

#[test]
fn full_pilot_recovers_exact_scores() {
    let ds = linear_dataset(60, 4, 2);
    let spec = KernelSpec::gaussian(1.5).unwrap();
    let k = gram(&spec, ds.points(), ds.points()).unwrap();
    let alpha = 1e-3;
    let exact = exact_leverage_scores(&k, alpha).unwrap();
    let approx = approximate_leverage_scores(&ds, &spec, alpha, 60, 7).unwrap();
    assert_eq!(approx.kind, ScoreKind::Approximate);
    for (a, b) in approx.scores.iter().zip(&exact.scores) {
        assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
    }
}

#[test]
fn approximate_scores_within_factor_two() {
    let spec = KernelSpec::gaussian(2.0).unwrap();
    let alpha = 0.1;
    let trials = 40;
    let mut good = 0;
    for seed in 0..trials {
        let ds = linear_dataset(200, 3, 100 + seed);
        let k = gram(&spec, ds.points(), ds.points()).unwrap();
        let exact = exact_leverage_scores(&k, alpha).unwrap();
        let approx = approximate_leverage_scores(&ds, &spec, alpha, 50, seed).unwrap();
        let within = exact
            .scores
            .iter()
            .zip(&approx.scores)
            .all(|(l, a)| a / l <= 2.0 && l / a <= 2.0);
        good += within as usize;
    }
    assert!(good as f64 >= 0.95 * trials as f64, "{good}/{trials}");
}

#[test]
fn duplicated_points_share_scores() {
    let base = gaussian_points(30, 3, 5);
    let mut x = base.clone();
    x.append(&base).unwrap();
    let ds = Dataset::new("dup", x, vec![1.0; 60]).unwrap();
    let spec = KernelSpec::gaussian(1.0).unwrap();
    let s = approximate_leverage_scores(&ds, &spec, 0.01, 20, 3).unwrap();
    for i in 0..30 {
        assert!((s.scores[i] - s.scores[i + 30]).abs() <= 1e-9);
    }
}

/// `|freq - p| <= 3 sqrt(p (1 - p) / trials)`
fn within_three_sigma(count: usize, trials: usize, p: f64) -> bool {
    let freq = count as f64 / trials as f64;
    (freq - p).abs() <= 3.0 * (p * (1.0 - p) / trials as f64).sqrt()
}

#[test]
fn uniform_single_landmark_frequencies() {
    let trials = 6000;
    let mut counts = [0usize; 3];
    for seed in 0..trials {
        counts[uniform_landmarks(3, 1, seed as u64).unwrap().indices[0]] += 1;
    }
    for c in counts {
        assert!(within_three_sigma(c, trials, 1.0 / 3.0), "{counts:?}");
    }
}

#[test]
fn als_first_draw_frequencies() {
    let n = 100;
    let raw: Vec<f64> = (0..n).map(|i| 0.05 + 0.9 * (i as f64 / n as f64).powi(2)).collect();
    let total: f64 = raw.iter().sum();
    let scores = LeverageScores {
        alpha: 0.1,
        scores: raw.clone(),
        kind: ScoreKind::Exact,
        approximation_factor: 1.0,
    };
    let trials = 10_000;
    let mut counts = vec![0usize; n];
    for seed in 0..trials {
        let lm = als_landmarks(&scores, 20, seed as u64).unwrap();
        counts[lm.indices[0]] += 1;
    }
    // Bonferroni-free 3 sigma per cell; a handful of the 100 cells may
    // legitimately exceed it, so allow 2%
    let outside = (0..n)
        .filter(|&i| !within_three_sigma(counts[i], trials, raw[i] / total))
        .count();
    assert!(outside <= 2, "{outside} cells outside 3 sigma");
}

#[test]
fn landmark_self_consistency() {
    let ds = linear_dataset(80, 5, 9);
    let spec = KernelSpec::gaussian(2.0).unwrap();
    let lm = uniform_landmarks(80, 15, 1).unwrap();
    let map = fit_embedding(&ds, &spec, &lm, DEFAULT_EIGEN_TOL).unwrap();
    assert_eq!(map.rank(), 15);
    let lp = ds.points().select(&lm.indices);
    let e = embed(&map, &lp, None).unwrap();
    let km = gram(&spec, &lp, &lp).unwrap();
    assert!(max_abs_diff(&row_gram(&e), &km) <= 1e-8);
}

#[test]
fn embedding_matches_pseudo_inverse_projection() {
    let ds = linear_dataset(70, 4, 11);
    let spec = KernelSpec::gaussian(1.5).unwrap();
    let lm = uniform_landmarks(70, 12, 4).unwrap();
    let map = fit_embedding(&ds, &spec, &lm, DEFAULT_EIGEN_TOL).unwrap();
    let e = embed(&map, ds.points(), None).unwrap();
    let lp = ds.points().select(&lm.indices);
    let k_nm = gram(&spec, ds.points(), &lp).unwrap();
    let k_m = gram(&spec, &lp, &lp).unwrap();
    assert!(max_abs_diff(&row_gram(&e), &projected_kernel(&k_nm, &k_m)) <= 1e-6);
}

#[test]
fn all_points_as_landmarks_recover_gram() {
    let ds = linear_dataset(40, 6, 12);
    let spec = KernelSpec::gaussian(2.0).unwrap();
    let lm = LandmarkSet::from_indices((0..40).collect()).unwrap();
    let map = fit_embedding(&ds, &spec, &lm, DEFAULT_EIGEN_TOL).unwrap();
    let e = embed(&map, ds.points(), None).unwrap();
    let k = gram(&spec, ds.points(), ds.points()).unwrap();
    assert!(max_abs_diff(&row_gram(&e), &k) <= 1e-6);
}

#[test]
fn residual_matches_explicit_projector() {
    for (seed, n) in [(1u64, 60usize), (2, 90)] {
        let ds = linear_dataset(n, 3, seed);
        let spec = KernelSpec::gaussian(1.0).unwrap();
        let lm = uniform_landmarks(n, 10, seed).unwrap();
        let lp = ds.points().select(&lm.indices);
        let k = gram(&spec, ds.points(), ds.points()).unwrap();
        let k_nm = gram(&spec, ds.points(), &lp).unwrap();
        let k_m = gram(&spec, &lp, &lp).unwrap();
        let oracle = residual_oracle(&k, &k_nm, &k_m);
        let got = projection_residual(&ds, &spec, &lm).unwrap();
        assert!((got - oracle).abs() <= 1e-9 + 1e-6 * oracle, "{got} vs {oracle}");
    }
}

#[test]
fn linear_residual_matches_feature_space_projector() {
    let ds = linear_dataset(120, 8, 31);
    let lm = uniform_landmarks(120, 5, 3).unwrap();
    let x = nalgebra::DMatrix::from_row_slice(120, 8, ds.points().as_slice());
    let oracle = feature_space_residual(&x, &lm.indices);
    let got = projection_residual(&ds, &KernelSpec::Linear, &lm).unwrap();
    assert!((got - oracle).abs() <= 1e-10 + 1e-8 * oracle, "{got} vs {oracle}");
}

#[test]
fn residual_above_dense_threshold_uses_lanczos_consistently() {
    // n > 400 switches to the iterative eigensolver
    let ds = linear_dataset(450, 3, 21);
    let spec = KernelSpec::gaussian(1.0).unwrap();
    let lm = uniform_landmarks(450, 25, 2).unwrap();
    let lp = ds.points().select(&lm.indices);
    let k = gram(&spec, ds.points(), ds.points()).unwrap();
    let k_nm = gram(&spec, ds.points(), &lp).unwrap();
    let k_m = gram(&spec, &lp, &lp).unwrap();
    let oracle = residual_oracle(&k, &k_nm, &k_m);
    let probe = ResidualProbe::new(&ds, &spec).unwrap();
    let got = probe.residual(&lm).unwrap();
    assert!((got - oracle).abs() <= 1e-9 + 1e-6 * oracle, "{got} vs {oracle}");
}

#[test]
fn effective_dimension_matches_trace_oracle() {
    let k = random_psd(40, 40, 0.05, 3);
    for alpha in [1e-4, 1e-2, 1.0] {
        let got = effective_dim_2(&k, alpha).unwrap();
        let oracle = dense_inverse_trace(&k, alpha);
        assert!((got - oracle).abs() <= 1e-8 * oracle.max(1.0));
    }
}

#[test]
fn gaussian_grid_spectrum_is_exponential() {
    let rows: Vec<Vec<f64>> = (0..120).map(|i| vec![i as f64 / 119.0]).collect();
    let ds = Dataset::new("grid", Points::from_rows(&rows).unwrap(), vec![1.0; 120]).unwrap();
    let k = gram(&KernelSpec::gaussian(0.3).unwrap(), ds.points(), ds.points()).unwrap();
    let spectrum = nystrom_erm::diagnostics::covariance_spectrum(&k).unwrap();
    let report = fit_eigendecay(&spectrum).unwrap();
    assert!(matches!(report.decay, Decay::Exponential { .. }), "{:?}", report.decay);
    assert!(report.exponential_residual < report.polynomial_residual);
}

#[test]
fn synthetic_spectrum_recovers_decay() {
    let mut ok = 0;
    for seed in 0..5 {
        let s = generate(&SynthSpec {
            n: 2000,
            d: 60,
            decay: SynthDecay::Polynomial { p: 0.5 },
            target_norm: 1.0,
            label_noise: 0.0,
            margin: None,
            seed,
        })
        .unwrap();
        let x = s.dataset.points().to_matrix();
        let cov = x.transpose() * &x / 2000.0;
        let spectrum = nystrom_erm::linalg::sym_eigenvalues(&cov);
        if let Decay::Polynomial { p, .. } = fit_eigendecay(&spectrum).unwrap().decay {
            ok += ((p - 0.5).abs() <= 0.1) as usize;
        }
    }
    assert_eq!(ok, 5);
}

#[test]
fn synthetic_covariance_converges() {
    let d = 20;
    let mut errors = Vec::new();
    for seed in 0..20 {
        let s = generate(&SynthSpec {
            n: 50 * d,
            d,
            decay: SynthDecay::Polynomial { p: 0.5 },
            target_norm: 1.0,
            label_noise: 0.0,
            margin: None,
            seed,
        })
        .unwrap();
        let x = s.dataset.points().to_matrix();
        let cov = x.transpose() * &x / (50 * d) as f64;
        let eig = nystrom_erm::linalg::sym_eigenvalues(&cov);
        let truth = covariance_diagonal(SynthDecay::Polynomial { p: 0.5 }, d);
        let worst = (0..10)
            .map(|j| (eig[j] - truth[j]).abs() / truth[j])
            .fold(0.0, f64::max);
        errors.push(worst);
    }
    assert!(median(&mut errors) <= 0.2, "{errors:?}");
}

fn reference_gap(ds_points: &Points, labels: &[f64], lambda: f64, epochs: usize, seed: u64) -> (f64, f64) {
    let loss = LossSpec::hinge();
    let short = TrainOptions {
        epochs,
        seed,
        average: true,
        ..TrainOptions::default()
    };
    let long = TrainOptions {
        epochs: epochs * 100,
        ..short.clone()
    };
    let a = train_penalized(ds_points, labels, &loss, lambda, &short).unwrap();
    let b = train_penalized(ds_points, labels, &loss, lambda, &long).unwrap();
    (a.objective, b.objective)
}

#[test]
fn two_point_problem_reaches_long_run_objective() {
    let x = Points::from_rows(&[[1.0, 0.5], [-1.0, -0.2]]).unwrap();
    let (short, long) = reference_gap(&x, &[1.0, -1.0], 0.1, 200, 0);
    assert!((short - long).abs() <= 1e-3, "{short} vs {long}");
}

#[test]
fn constrained_problem_reaches_long_run_objective() {
    let ds = linear_dataset(50, 3, 33);
    let loss = LossSpec::hinge();
    let opts = TrainOptions {
        epochs: 400,
        average: true,
        schedule: StepSchedule::InvSqrt { scale: None },
        ..TrainOptions::default()
    };
    let short = train_constrained(ds.points(), ds.labels(), &loss, 5.0, &opts).unwrap();
    let long = train_constrained(
        ds.points(),
        ds.labels(),
        &loss,
        5.0,
        &TrainOptions {
            epochs: 40_000,
            ..opts.clone()
        },
    )
    .unwrap();
    let n = nystrom_erm::linalg::norm(&short.weights);
    assert!(n <= 5.0 + 1e-12);
    assert!((short.objective - long.objective).abs() <= 1e-2, "{} vs {}", short.objective, long.objective);
}

#[test]
fn constrained_large_radius_matches_unprojected_run() {
    let ds = linear_dataset(30, 2, 34);
    let loss = LossSpec::hinge();
    let opts = TrainOptions {
        epochs: 5,
        schedule: StepSchedule::InvSqrt { scale: Some(0.1) },
        ..TrainOptions::default()
    };
    let a = train_constrained(ds.points(), ds.labels(), &loss, 1e6, &opts).unwrap();
    let b = train_constrained(ds.points(), ds.labels(), &loss, 1e9, &opts).unwrap();
    assert_eq!(a.weights, b.weights);
}

#[test]
fn clipping_never_increases_hinge_risk() {
    let ds = linear_dataset(200, 4, 35);
    let loss = LossSpec::hinge();
    let fit = train_penalized(ds.points(), ds.labels(), &loss, 1e-4, &TrainOptions::default()).unwrap();
    let raw = predict_embedded(&fit, ds.points(), false).unwrap();
    let clipped = predict_embedded(&fit, ds.points(), true).unwrap();
    let risk = |s: &[f64]| s.iter().zip(ds.labels()).map(|(s, y)| loss_value(&loss, *y, *s)).sum::<f64>();
    assert!(risk(&clipped) <= risk(&raw));
    assert!((risk(&raw) / 200.0 - empirical_risk(ds.points(), ds.labels(), &loss, &fit.weights)).abs() < 1e-12);
}

#[test]
fn single_class_objective_never_worse_than_origin() {
    let x = gaussian_points(100, 3, 36);
    let labels = vec![1.0; 100];
    let loss = LossSpec::hinge();
    let fit = train_penalized(&x, &labels, &loss, 0.05, &TrainOptions::default()).unwrap();
    assert!(fit.objective <= 1.0);
    assert!((objective(&x, &labels, &loss, 0.05, &[0.0; 3]) - 1.0).abs() < 1e-15);
}
