//! End-to-end acceptance checks. Each test prints one status line.
//!
//! Checks on public datasets read LIBSVM files from `$NYSTROM_DATA_DIR`
//! (`usps`, `a9a`, each holding the full dataset) and report SKIP when the
//! files are absent.

mod common;

use std::path::PathBuf;
use std::time::Instant;

use common::*;
use nalgebra::DMatrix;
use nystrom_erm::diagnostics::{
    effective_dim_from_spectrum, exponential_dim_bound, polynomial_dim_bound,
};
use nystrom_erm::experiment::{run_experiment, ExperimentConfig, RESULT_COLUMNS, TIMING_COLUMNS};
use nystrom_erm::kernel::gram;
use nystrom_erm::nystrom::DEFAULT_EIGEN_TOL;
use nystrom_erm::sampling::{select_landmarks, SamplingPlan};
use nystrom_erm::solver::{loss_value, predict_embedded, score_subgradient};
use nystrom_erm::synth::{covariance_diagonal, generate, SynthDecay, SynthSpec};
use nystrom_erm::*;
use rand::RngExt;

fn bundled_config(file: &str) -> ExperimentConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs").join(file);
    ExperimentConfig::load(&path).unwrap()
}

fn dataset_file(name: &str) -> Option<PathBuf> {
    let dir = std::env::var_os("NYSTROM_DATA_DIR")?;
    let path = PathBuf::from(dir).join(name);
    path.is_file().then_some(path)
}

/// Mean test error and wall time of a bundled config on a local dataset.
fn run_bundled(file: &str, data: PathBuf, ms: Option<Vec<usize>>) -> (Vec<f64>, f64) {
    let mut cfg = bundled_config(file);
    cfg.data.train = Some(data);
    if let Some(ms) = ms {
        cfg.grid.m = ms;
    }
    let start = Instant::now();
    let res = run_experiment(&cfg).unwrap();
    assert_eq!(res.failed_cells(), 0);
    (res.cells.iter().map(|c| c.c_err().mean).collect(), start.elapsed().as_secs_f64())
}

#[test]
fn usps_error_rate() {
    let name = "usps error rate";
    let Some(data) = dataset_file("usps") else {
        return report_skip(name, "usps not found in $NYSTROM_DATA_DIR");
    };
    let (err, secs) = run_bundled("usps_als.toml", data, None);
    let pass = err[0] <= 0.035 && secs <= 120.0;
    report(name, pass, &format!("c-err {:.4} (<= 0.035), {secs:.0}s (<= 120s)", err[0]));
    assert!(pass);
}

#[test]
fn a9a_error_rate() {
    let name = "a9a error rate";
    let Some(data) = dataset_file("a9a") else {
        return report_skip(name, "a9a not found in $NYSTROM_DATA_DIR");
    };
    let (err, secs) = run_bundled("a9a_als.toml", data, None);
    let pass = err[0] <= 0.157 && secs <= 180.0;
    report(name, pass, &format!("c-err {:.4} (<= 0.157), {secs:.0}s (<= 180s)", err[0]));
    assert!(pass);
}

#[test]
fn usps_uniform_needs_more_landmarks() {
    let name = "usps uniform vs leverage sampling";
    let Some(data) = dataset_file("usps") else {
        return report_skip(name, "usps not found in $NYSTROM_DATA_DIR");
    };
    let (als, _) = run_bundled("usps_als.toml", data.clone(), Some(vec![2500]));
    let (uni, _) = run_bundled("usps_uniform.toml", data, Some(vec![2500, 4000]));
    let worse = uni[0] > als[0];
    let matches_later = (uni[1] - als[0]).abs() <= 0.002;
    let pass = worse || matches_later;
    report(
        name,
        pass,
        &format!("als@2500 {:.4}, uniform@2500 {:.4}, uniform@4000 {:.4}", als[0], uni[0], uni[1]),
    );
    assert!(pass);
}

#[test]
fn leverage_scores_match_dense_inverse() {
    let mut rng = seeded_rng(4);
    let mut worst: f64 = 0.0;
    for i in 0..50u64 {
        let n = rng.random_range(2..=100);
        let k = rng.random_range(1..=n);
        let scale = 10f64.powf(rng.random_range(-2.0..1.0));
        let alpha = 10f64.powf(rng.random_range(-3.0..0.0));
        let g = random_psd(n, k, scale, 100 + i);
        let got = exact_leverage_scores(&g, alpha).unwrap();
        let oracle = dense_inverse_scores(&g, alpha);
        for (a, b) in got.scores.iter().zip(&oracle) {
            worst = worst.max((a - b).abs());
        }
    }
    let pass = worst <= 1e-8;
    report("leverage scores vs dense inverse", pass, &format!("max abs diff {worst:.2e} over 50 matrices"));
    assert!(pass);
}

#[test]
fn leverage_scores_sum_to_trace() {
    let mut rng = seeded_rng(5);
    let mut worst: f64 = 0.0;
    for i in 0..20u64 {
        let n = rng.random_range(5..=80);
        let g = random_psd(n, rng.random_range(1..=n), 0.1, 200 + i);
        for alpha in [1e-4, 1e-3, 1e-2, 1e-1, 1.0] {
            let sum = exact_leverage_scores(&g, alpha).unwrap().sum();
            let trace = dense_inverse_trace(&g, alpha);
            worst = worst.max((sum - trace).abs() / trace);
        }
    }
    let pass = worst <= 1e-6;
    report("leverage score sum identity", pass, &format!("max relative diff {worst:.2e} over 100 cases"));
    assert!(pass);
}

#[test]
fn embedding_reconstructs_projected_kernel() {
    let mut rng = seeded_rng(6);
    let mut worst: f64 = 0.0;
    for i in 0..10u64 {
        let n = rng.random_range(30..=120);
        let d = rng.random_range(2..=8);
        let m = rng.random_range(5..=25);
        let ds = linear_dataset(n, d, 300 + i);
        let spec = KernelSpec::gaussian(rng.random_range(1.0..3.0)).unwrap();
        let lm = uniform_landmarks(n, m, i).unwrap();
        let map = fit_embedding(&ds, &spec, &lm, DEFAULT_EIGEN_TOL).unwrap();
        let e = embed(&map, ds.points(), None).unwrap();
        let lp = ds.points().select(&lm.indices);
        let k_nm = gram(&spec, ds.points(), &lp).unwrap();
        let k_m = gram(&spec, &lp, &lp).unwrap();
        worst = worst.max(max_abs_diff(&row_gram(&e), &projected_kernel(&k_nm, &k_m)));
    }
    let ds = linear_dataset(40, 6, 12);
    let spec = KernelSpec::gaussian(2.0).unwrap();
    let lm = LandmarkSet::from_indices((0..40).collect()).unwrap();
    let map = fit_embedding(&ds, &spec, &lm, DEFAULT_EIGEN_TOL).unwrap();
    let e = embed(&map, ds.points(), None).unwrap();
    let full = max_abs_diff(&row_gram(&e), &gram(&spec, ds.points(), ds.points()).unwrap());
    let pass = worst <= 1e-6 && map.rank() == 40 && full <= 1e-6;
    report(
        "embedding reconstruction",
        pass,
        &format!("projected {worst:.2e}, all landmarks {full:.2e} (rank {})", map.rank()),
    );
    assert!(pass);
}

#[test]
fn projection_residual_bound() {
    const N: usize = 2000;
    const D: usize = 300;
    let alphas = [1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2];
    let landmarks = |c: f64, alpha: f64| (c * alpha.powf(-0.5) * (N as f64).ln()).ceil() as usize;
    // per alpha, whether the residual is within 3 alpha
    let trial = |seed: u64, c: f64| -> Vec<bool> {
        let ds = generate(&SynthSpec {
            n: N,
            d: D,
            decay: SynthDecay::Polynomial { p: 0.5 },
            target_norm: 1.0,
            label_noise: 0.0,
            margin: None,
            seed,
        })
        .unwrap()
        .dataset;
        let x = DMatrix::from_row_slice(N, D, ds.points().as_slice());
        alphas
            .iter()
            .enumerate()
            .map(|(i, &alpha)| {
                let m = landmarks(c, alpha);
                let plan = SamplingPlan {
                    method: SamplingMethod::Als,
                    m,
                    alpha,
                    pilot_size: m,
                    seed: seed * 10 + i as u64,
                };
                let lm = select_landmarks(&ds, &KernelSpec::Linear, &plan).unwrap();
                feature_space_residual(&x, &lm.indices) <= 3.0 * alpha
            })
            .collect()
    };
    // calibration on seeds disjoint from the evaluation seeds
    let c = [0.05, 0.1, 0.2, 0.5, 1.0]
        .into_iter()
        .find(|&c| (1000..1010).all(|s| trial(s, c).iter().all(|&ok| ok)))
        .unwrap();
    let mut hits = [0usize; 6];
    for seed in 0..50 {
        for (h, ok) in hits.iter_mut().zip(trial(seed, c)) {
            *h += ok as usize;
        }
    }
    let pass = hits.iter().all(|&h| h >= 45);
    let ms: Vec<usize> = alphas.iter().map(|&a| landmarks(c, a)).collect();
    report(
        "projection residual bound",
        pass,
        &format!("c {c}, m {ms:?}, within 3 alpha {hits:?} of 50"),
    );
    assert!(pass);
}

#[test]
fn effective_dimension_decay_bounds() {
    let alphas: Vec<f64> = (0..10).map(|i| 10f64.powf(-6.0 + 0.5 * i as f64)).collect();
    type Bound = Box<dyn Fn(f64) -> f64>;
    let mut cases: Vec<(String, Vec<f64>, Bound)> = Vec::new();
    for p in [0.5, 1.0 / 3.0] {
        let s = covariance_diagonal(SynthDecay::Polynomial { p }, 20_000);
        let (gamma, beta) = (s[0], 1.0 / p);
        cases.push((
            format!("polynomial beta {beta:.1} gamma {gamma:.3}"),
            s,
            Box::new(move |a| polynomial_dim_bound(gamma, beta, a).unwrap()),
        ));
    }
    let (gamma, beta) = (5.0, 1.5);
    cases.push((
        format!("polynomial beta {beta} gamma {gamma}"),
        (1..=20_000).map(|j| gamma * (j as f64).powf(-beta)).collect(),
        Box::new(move |a| polynomial_dim_bound(gamma, beta, a).unwrap()),
    ));
    for beta in [0.3, 1.0] {
        let s = covariance_diagonal(SynthDecay::Exponential { beta }, 2000);
        let gamma = s[0] * beta.exp();
        cases.push((
            format!("exponential beta {beta} gamma {gamma:.3}"),
            s,
            Box::new(move |a| exponential_dim_bound(gamma, beta, a).unwrap()),
        ));
    }
    let mut violations = Vec::new();
    for (label, spectrum, bound) in &cases {
        for &a in &alphas {
            let d = effective_dim_from_spectrum(spectrum, a);
            if d > bound(a) {
                violations.push(format!("{label} alpha {a:e}: {d} > {}", bound(a)));
            }
        }
    }
    let pass = violations.is_empty();
    let detail = if pass {
        format!("{} spectra x {} alphas", cases.len(), alphas.len())
    } else {
        violations.join("; ")
    };
    report("effective dimension decay bounds", pass, &detail);
    assert!(pass);
}

/// Clipped hinge test risk of the full pipeline on realizable synthetic data.
fn rate_risk(n: usize, seed: u64) -> f64 {
    const TEST: usize = 10_000;
    let all = generate(&SynthSpec {
        n: n + TEST,
        d: 10,
        decay: SynthDecay::Polynomial { p: 0.5 },
        target_norm: 1.0,
        label_noise: 0.0,
        margin: Some(0.1),
        seed,
    })
    .unwrap()
    .dataset;
    let train = all.subset(&(0..n).collect::<Vec<_>>(), "train");
    let test = all.subset(&(n..n + TEST).collect::<Vec<_>>(), "test");
    let nf = n as f64;
    let lambda = 0.1 / nf.sqrt();
    let m = (nf.sqrt() * nf.ln()).ceil() as usize;
    let plan = SamplingPlan { method: SamplingMethod::Als, m, alpha: lambda, pilot_size: m, seed };
    let spec = KernelSpec::Linear;
    let lm = select_landmarks(&train, &spec, &plan).unwrap();
    let map = fit_embedding(&train, &spec, &lm, DEFAULT_EIGEN_TOL).unwrap();
    let e = embed(&map, train.points(), None).unwrap();
    let loss = LossSpec::hinge();
    let opts = TrainOptions { epochs: 10, seed, ..TrainOptions::default() };
    let fit = train_penalized(&e, train.labels(), &loss, lambda, &opts).unwrap();
    let scores = predict_embedded(&fit, &embed(&map, test.points(), None).unwrap(), true).unwrap();
    scores.iter().zip(test.labels()).map(|(s, y)| loss_value(&loss, *y, *s)).sum::<f64>() / TEST as f64
}

#[test]
fn excess_risk_decreases_with_n() {
    // the margin makes the data separable with zero hinge loss, so the
    // excess risk is the risk itself
    let ns = [500usize, 2000, 8000];
    let medians: Vec<f64> = ns
        .iter()
        .map(|&n| {
            let mut v: Vec<f64> = (0..10).map(|s| rate_risk(n, s)).collect();
            median(&mut v)
        })
        .collect();
    let xs: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = medians.iter().map(|r| r.ln()).collect();
    let fitted = slope(&xs, &ys);
    let pass = fitted <= -0.35;
    report(
        "excess risk rate",
        pass,
        &format!("log-log slope {fitted:.3} (<= -0.35), median risks {medians:.4?}"),
    );
    assert!(pass);
}

#[test]
fn solver_reaches_long_run_objective_and_subgradients_are_valid() {
    let loss = LossSpec::hinge();
    let alternating = |ds: Dataset| {
        let labels = (0..ds.len()).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        Dataset::new("alt", ds.points().clone(), labels).unwrap()
    };
    let problems: Vec<(Dataset, f64)> = vec![
        (
            Dataset::new("two", Points::from_rows(&[[1.0, 0.5], [-1.0, -0.2]]).unwrap(), vec![1.0, -1.0])
                .unwrap(),
            0.1,
        ),
        (linear_dataset(30, 3, 1), 0.05),
        (linear_dataset(50, 4, 2), 0.01),
        (alternating(linear_dataset(40, 3, 5)), 0.1),
        (linear_dataset(60, 2, 7), 0.02),
    ];
    let mut gaps = Vec::new();
    for (i, (ds, lambda)) in problems.iter().enumerate() {
        let short = TrainOptions { epochs: 1000, seed: i as u64, average: true, ..TrainOptions::default() };
        let long = TrainOptions { epochs: 100_000, ..short.clone() };
        let a = train_penalized(ds.points(), ds.labels(), &loss, *lambda, &short).unwrap();
        let b = train_penalized(ds.points(), ds.labels(), &loss, *lambda, &long).unwrap();
        gaps.push((a.objective - b.objective).abs());
    }

    // multiples of 2^-10 below 2^4 keep every operation exact
    let mut rng = seeded_rng(10);
    let mut violations = 0;
    for _ in 0..10_000 {
        let y = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let s = rng.random_range(-10_240i32..10_240) as f64 / 1024.0;
        let t = rng.random_range(-10_240i32..10_240) as f64 / 1024.0;
        let g = score_subgradient(&loss, y, s);
        if loss_value(&loss, y, t) < loss_value(&loss, y, s) + g * (t - s) {
            violations += 1;
        }
    }
    let worst = gaps.iter().cloned().fold(0.0, f64::max);
    let pass = worst <= 1e-3 && violations == 0;
    report(
        "solver convergence and convexity",
        pass,
        &format!("max objective gap {worst:.2e}, {violations} subgradient violations in 10000"),
    );
    assert!(pass);
}

fn non_timing_csv(cfg: &ExperimentConfig) -> Vec<Vec<String>> {
    let mut buf = Vec::new();
    run_experiment(cfg).unwrap().write_csv(&mut buf).unwrap();
    let keep: Vec<usize> = (0..RESULT_COLUMNS.len())
        .filter(|&i| !TIMING_COLUMNS.contains(&RESULT_COLUMNS[i]))
        .collect();
    String::from_utf8(buf)
        .unwrap()
        .lines()
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            keep.iter().map(|&i| f[i].to_string()).collect()
        })
        .collect()
}

#[test]
fn pipeline_is_deterministic() {
    let mut cfg = bundled_config("synth.toml");
    cfg.repeats = 2;
    cfg.workers = 2;
    cfg.grid.m = vec![10, 40];
    cfg.grid.lambda = vec![1e-4, 1e-2];
    if let Some(s) = cfg.data.synth.as_mut() {
        s.n = 800;
        s.test_n = 400;
    }
    let first = non_timing_csv(&cfg);
    let second = non_timing_csv(&cfg);
    let pass = first == second && first.len() == 5;
    report("deterministic pipeline output", pass, &format!("{} result rows compared", first.len() - 1));
    assert!(pass);
}

#[test]
fn bundled_configs_are_valid() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut bad = Vec::new();
    let mut count = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        count += 1;
        if let Err(e) = ExperimentConfig::load(&path).and_then(|c| c.validate()) {
            bad.push(format!("{}: {e}", path.display()));
        }
    }
    let pass = bad.is_empty();
    report("bundled configs parse", pass, &if pass { format!("{count} files") } else { bad.join("; ") });
    assert!(pass);
}
