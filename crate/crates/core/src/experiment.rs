//! Grid experiments over `(sigma, lambda, m)` with repeated runs.
//!
//! A run samples landmarks, fits the embedding, embeds the training set and
//! trains (timed together as `t_train`), then embeds and scores the test set
//! (`t_pred`). Cells are aggregated as mean and sample standard deviation
//! over repeats. A failing run marks its cell but never stops the sweep.
//!
//! Configuration is TOML:
//!
//! ```toml
//! name = "usps"
//! repeats = 5
//! seed = 0
//! workers = 1
//!
//! [data]
//! train = "data/usps"
//! test = "data/usps.t"        # or: test_fraction = 0.2
//! binarize = [1, 2, 3, 4, 5]
//!
//! [kernel]
//! family = "gaussian"
//! sigma = [10.0]
//!
//! [sampling]
//! method = "als"              # or "uniform"
//! # alpha defaults to lambda, pilot_size to m
//!
//! [grid]
//! m = [2500]
//! lambda = [5e-6]
//!
//! [solver]
//! epochs = 10
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{load_libsvm, split, Binarization, Dataset};
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::nystrom::{embed, fit_embedding, DEFAULT_EIGEN_TOL};
use crate::sampling::{select_landmarks, SamplingMethod, SamplingPlan};
use crate::solver::{
    classification_error, empirical_risk, predict_embedded, train_constrained, train_penalized,
    LossFamily, LossSpec, StepSchedule, TrainOptions, UpdateMode,
};
use crate::synth::{generate, SynthDecay, SynthSpec};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub data: DataConfig,
    pub kernel: KernelConfig,
    #[serde(default)]
    pub loss: LossConfig,
    pub sampling: SamplingConfig,
    pub grid: GridConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default = "one")]
    pub repeats: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub workers: usize,
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    /// Held-out fraction when no test file is given.
    pub test_fraction: Option<f64>,
    /// Raw labels mapped to +1.
    pub binarize: Option<Vec<f64>>,
    pub dim: Option<usize>,
    pub synth: Option<SynthConfig>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub n: usize,
    pub test_n: usize,
    pub d: usize,
    /// `polynomial:<p>` or `exponential:<beta>`.
    pub decay: String,
    #[serde(default = "default_target_norm")]
    pub target_norm: f64,
    #[serde(default)]
    pub label_noise: f64,
    #[serde(default)]
    pub margin: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

fn default_target_norm() -> f64 {
    10.0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub family: String,
    #[serde(default)]
    pub sigma: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    pub family: LossFamily,
    pub clip: Option<f64>,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            family: LossFamily::Hinge,
            clip: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    pub method: SamplingMethod,
    /// Ridge level of the leverage scores; defaults to the cell's lambda.
    pub alpha: Option<f64>,
    /// Pilot landmarks for approximate scores; defaults to the cell's m.
    pub pilot_size: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub m: Vec<usize>,
    pub lambda: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub epochs: usize,
    pub constrained_radius: Option<f64>,
    pub average: bool,
    pub full_batch: bool,
    pub eigen_tol: f64,
    pub batch: Option<usize>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            epochs: 10,
            constrained_radius: None,
            average: false,
            full_batch: false,
            eigen_tol: DEFAULT_EIGEN_TOL,
            batch: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Format(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(format!("config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.m.is_empty() || self.grid.lambda.is_empty() {
            return Err(Error::invalid("m and lambda grids must be nonempty"));
        }
        if self.repeats < 1 {
            return Err(Error::invalid("repeats must be at least 1"));
        }
        if self.workers < 1 {
            return Err(Error::invalid("workers must be at least 1"));
        }
        if self.grid.m.contains(&0) {
            return Err(Error::invalid("m values must be positive"));
        }
        if self.grid.lambda.iter().any(|l| !(*l >= 0.0)) {
            return Err(Error::invalid("lambda values must be non-negative"));
        }
        self.kernels()?;
        LossSpec::new(self.loss.family, self.loss.clip)?;
        match (&self.data.train, &self.data.synth) {
            (Some(_), Some(_)) => return Err(Error::invalid("give either a data file or a synth spec")),
            (None, None) => return Err(Error::invalid("no data source configured")),
            _ => {}
        }
        if let Some(f) = self.data.test_fraction {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::invalid("test_fraction must lie in (0, 1)"));
            }
        }
        Ok(())
    }

    /// One kernel per sigma value (a single entry for sigma-free families).
    pub fn kernels(&self) -> Result<Vec<KernelSpec>> {
        match self.kernel.family.as_str() {
            "gaussian" => {
                if self.kernel.sigma.is_empty() {
                    return Err(Error::invalid("gaussian kernel needs a sigma grid"));
                }
                self.kernel.sigma.iter().map(|&s| KernelSpec::gaussian(s)).collect()
            }
            "linear" => Ok(vec![KernelSpec::Linear]),
            other => Err(Error::invalid(format!("kernel family {other:?} not usable in experiments"))),
        }
    }

    /// Training and test sets for this configuration.
    pub fn load_data(&self) -> Result<(Dataset, Dataset)> {
        if let Some(s) = &self.data.synth {
            let decay: SynthDecay = s.decay.parse()?;
            let spec = SynthSpec {
                n: s.n + s.test_n,
                d: s.d,
                decay,
                target_norm: s.target_norm,
                label_noise: s.label_noise,
                margin: s.margin,
                seed: s.seed,
            };
            let all = generate(&spec)?.dataset;
            let train_idx: Vec<usize> = (0..s.n).collect();
            let test_idx: Vec<usize> = (s.n..s.n + s.test_n).collect();
            return Ok((
                all.subset(&train_idx, format!("{}-train", self.name)),
                all.subset(&test_idx, format!("{}-test", self.name)),
            ));
        }
        let rule = self.data.binarize.clone().map(Binarization::new);
        let train_path = self.data.train.as_ref().expect("validated");
        let train = load_libsvm(train_path, self.data.dim, rule.as_ref())?;
        match &self.data.test {
            Some(test_path) => {
                let test = load_libsvm(test_path, self.data.dim, rule.as_ref())?;
                let d = train.dim().max(test.dim());
                Ok((train.with_dim(d)?, test.with_dim(d)?))
            }
            None => split(&train, self.data.test_fraction.unwrap_or(0.2), self.seed),
        }
    }
}

/// One training/evaluation run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunOutcome {
    pub repeat: usize,
    pub m_eff: usize,
    pub rank: usize,
    pub c_err: f64,
    /// Clipped-loss test risk.
    pub test_risk: f64,
    pub objective: f64,
    pub t_train: f64,
    pub t_pred: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CellResult {
    pub dataset: String,
    pub method: SamplingMethod,
    pub kernel: String,
    pub sigma: Option<f64>,
    pub lambda: f64,
    pub m: usize,
    pub runs: Vec<RunOutcome>,
    pub errors: Vec<String>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

/// Mean and sample standard deviation (0 for a single value).
pub fn summarize(values: &[f64]) -> Summary {
    let n = values.len();
    if n == 0 {
        return Summary {
            mean: f64::NAN,
            std: f64::NAN,
        };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Summary { mean, std }
}

impl CellResult {
    pub fn ok(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn c_err(&self) -> Summary {
        summarize(&self.runs.iter().map(|r| r.c_err).collect::<Vec<_>>())
    }

    pub fn test_risk(&self) -> Summary {
        summarize(&self.runs.iter().map(|r| r.test_risk).collect::<Vec<_>>())
    }

    pub fn t_train(&self) -> Summary {
        summarize(&self.runs.iter().map(|r| r.t_train).collect::<Vec<_>>())
    }

    pub fn t_pred(&self) -> Summary {
        summarize(&self.runs.iter().map(|r| r.t_pred).collect::<Vec<_>>())
    }

    pub fn status(&self) -> String {
        if self.ok() {
            "ok".into()
        } else {
            format!("failed: {}", self.errors.join("; "))
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentResults {
    pub name: String,
    pub n_train: usize,
    pub n_test: usize,
    pub cells: Vec<CellResult>,
}

pub const RESULT_COLUMNS: [&str; 17] = [
    "dataset",
    "method",
    "kernel",
    "sigma",
    "lambda",
    "m",
    "m_eff_mean",
    "rank_mean",
    "repeats",
    "c_err_mean",
    "c_err_std",
    "test_risk_mean",
    "t_train_mean",
    "t_train_std",
    "t_pred_mean",
    "t_pred_std",
    "status",
];

/// Columns holding wall-clock measurements.
pub const TIMING_COLUMNS: [&str; 4] = ["t_train_mean", "t_train_std", "t_pred_mean", "t_pred_std"];

impl ExperimentResults {
    pub fn failed_cells(&self) -> usize {
        self.cells.iter().filter(|c| !c.ok()).count()
    }

    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(RESULT_COLUMNS)?;
        for c in &self.cells {
            let mean_of = |f: fn(&RunOutcome) -> usize| {
                summarize(&c.runs.iter().map(|r| f(r) as f64).collect::<Vec<_>>()).mean
            };
            let (ce, risk, tt, tp) = (c.c_err(), c.test_risk(), c.t_train(), c.t_pred());
            out.write_record([
                c.dataset.clone(),
                c.method.to_string(),
                c.kernel.clone(),
                c.sigma.map(|s| s.to_string()).unwrap_or_default(),
                c.lambda.to_string(),
                c.m.to_string(),
                format!("{:.1}", mean_of(|r| r.m_eff)),
                format!("{:.1}", mean_of(|r| r.rank)),
                c.runs.len().to_string(),
                format!("{:.6}", ce.mean),
                format!("{:.6}", ce.std),
                format!("{:.6}", risk.mean),
                format!("{:.3}", tt.mean),
                format!("{:.3}", tt.std),
                format!("{:.3}", tp.mean),
                format!("{:.3}", tp.std),
                c.status(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    /// Writes `results.csv` and `summary.json` into `dir`.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        self.write_csv(fs::File::create(dir.join("results.csv"))?)?;
        let summary = serde_json::json!({
            "name": self.name,
            "n_train": self.n_train,
            "n_test": self.n_test,
            "failed_cells": self.failed_cells(),
            "cells": self.cells.iter().map(|c| serde_json::json!({
                "method": c.method,
                "kernel": c.kernel,
                "sigma": c.sigma,
                "lambda": c.lambda,
                "m": c.m,
                "c_err_mean": c.c_err().mean,
                "c_err_std": c.c_err().std,
                "test_risk_mean": c.test_risk().mean,
                "t_train_mean": c.t_train().mean,
                "t_pred_mean": c.t_pred().mean,
                "status": c.status(),
            })).collect::<Vec<_>>(),
        });
        fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
        Ok(())
    }
}

struct Cell {
    kernel: KernelSpec,
    lambda: f64,
    m: usize,
}

fn cells(cfg: &ExperimentConfig) -> Result<Vec<Cell>> {
    let mut out = Vec::new();
    for kernel in cfg.kernels()? {
        for &lambda in &cfg.grid.lambda {
            for &m in &cfg.grid.m {
                out.push(Cell {
                    kernel: kernel.clone(),
                    lambda,
                    m,
                });
            }
        }
    }
    Ok(out)
}

fn train_options(cfg: &ExperimentConfig, seed: u64) -> TrainOptions {
    TrainOptions {
        epochs: cfg.solver.epochs,
        seed,
        schedule: if cfg.solver.constrained_radius.is_some() {
            StepSchedule::InvSqrt { scale: None }
        } else {
            StepSchedule::Pegasos
        },
        mode: if cfg.solver.full_batch {
            UpdateMode::FullBatch
        } else {
            UpdateMode::Stochastic
        },
        average: cfg.solver.average,
        project_ball: true,
        track_objective: false,
    }
}

/// Seed of repeat `r`; shared by all cells so that cells differ only in
/// their hyperparameters.
fn repeat_seed(base: u64, repeat: usize) -> u64 {
    base.wrapping_add(repeat as u64)
}

fn run_once(
    cfg: &ExperimentConfig,
    cell: &Cell,
    train: &Dataset,
    test: &Dataset,
    repeat: usize,
) -> Result<RunOutcome> {
    let seed = repeat_seed(cfg.seed, repeat);
    let loss = LossSpec::new(cfg.loss.family, cfg.loss.clip)?;
    let plan = SamplingPlan {
        method: cfg.sampling.method,
        m: cell.m,
        alpha: cfg.sampling.alpha.unwrap_or(cell.lambda),
        pilot_size: cfg.sampling.pilot_size.unwrap_or(cell.m),
        seed,
    };
    let opts = train_options(cfg, seed);

    let start = Instant::now();
    let lm = select_landmarks(train, &cell.kernel, &plan)?;
    let map = fit_embedding(train, &cell.kernel, &lm, cfg.solver.eigen_tol)?;
    let e = embed(&map, train.points(), cfg.solver.batch)?;
    let fit = match cfg.solver.constrained_radius {
        Some(r) => train_constrained(&e, train.labels(), &loss, r, &opts)?,
        None => train_penalized(&e, train.labels(), &loss, cell.lambda, &opts)?,
    };
    let t_train = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let et = embed(&map, test.points(), cfg.solver.batch)?;
    let scores = predict_embedded(&fit, &et, true)?;
    let t_pred = start.elapsed().as_secs_f64();

    let c_err = classification_error(&scores, test.labels())?;
    let test_risk = empirical_risk(&et, test.labels(), &loss, &fit.weights);
    // risk of the clipped scores, not of the raw linear predictor
    let test_risk = {
        let clipped: f64 = scores
            .iter()
            .zip(test.labels())
            .map(|(s, y)| crate::solver::loss_value(&loss, *y, *s))
            .sum::<f64>()
            / test.len() as f64;
        debug_assert!(clipped <= test_risk + 1e-9 || loss.family == LossFamily::Logistic);
        clipped
    };
    Ok(RunOutcome {
        repeat,
        m_eff: lm.len(),
        rank: map.rank(),
        c_err,
        test_risk,
        objective: fit.objective,
        t_train,
        t_pred,
    })
}

/// Runs every grid cell `repeats` times on already loaded data.
pub fn run_experiment_on(cfg: &ExperimentConfig, train: &Dataset, test: &Dataset) -> Result<ExperimentResults> {
    cfg.validate()?;
    if test.is_empty() {
        return Err(Error::invalid("test set is empty"));
    }
    let cells = cells(cfg)?;
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..cfg.repeats).map(move |r| (c, r)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;
    let outcomes: Vec<(usize, Result<RunOutcome>)> = pool.install(|| {
        jobs.par_iter()
            .map(|&(c, r)| {
                log::info!("cell {}/{} repeat {}", c + 1, cells.len(), r + 1);
                (c, run_once(cfg, &cells[c], train, test, r))
            })
            .collect()
    });

    let mut results: Vec<CellResult> = cells
        .iter()
        .map(|cell| CellResult {
            dataset: train.name.clone(),
            method: cfg.sampling.method,
            kernel: cell.kernel.name().to_string(),
            sigma: match cell.kernel {
                KernelSpec::Gaussian { sigma } => Some(sigma),
                _ => None,
            },
            lambda: cell.lambda,
            m: cell.m,
            runs: Vec::new(),
            errors: Vec::new(),
        })
        .collect();
    for (c, outcome) in outcomes {
        match outcome {
            Ok(run) => results[c].runs.push(run),
            Err(e) => {
                log::warn!("cell {} failed: {e}", c + 1);
                results[c].errors.push(e.to_string());
            }
        }
    }
    Ok(ExperimentResults {
        name: cfg.name.clone(),
        n_train: train.len(),
        n_test: test.len(),
        cells: results,
    })
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResults> {
    cfg.validate()?;
    let (train, test) = cfg.load_data()?;
    run_experiment_on(cfg, &train, &test)
}

/// Mean and standard deviation of the test error over a `lambda x m` grid
/// (rows follow the lambda grid, columns the m grid).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Heatmap {
    pub sigma: Option<f64>,
    pub lambdas: Vec<f64>,
    pub ms: Vec<usize>,
    pub mean: Vec<Vec<f64>>,
    pub std: Vec<Vec<f64>>,
    pub failed_cells: usize,
}

impl Heatmap {
    fn write_grid(&self, values: &[Vec<f64>], w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["lambda\\m".to_string()];
        header.extend(self.ms.iter().map(|m| m.to_string()));
        out.write_record(&header)?;
        for (lambda, row) in self.lambdas.iter().zip(values) {
            let mut rec = vec![lambda.to_string()];
            rec.extend(row.iter().map(|v| format!("{v:.6}")));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_mean_csv(&self, w: impl Write) -> Result<()> {
        self.write_grid(&self.mean, w)
    }

    pub fn write_std_csv(&self, w: impl Write) -> Result<()> {
        self.write_grid(&self.std, w)
    }

    /// Writes `heatmap_mean.csv` and `heatmap_std.csv` into `dir`.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        self.write_mean_csv(fs::File::create(dir.join("heatmap_mean.csv"))?)?;
        self.write_std_csv(fs::File::create(dir.join("heatmap_std.csv"))?)?;
        Ok(())
    }
}

pub fn heatmap_from_results(cfg: &ExperimentConfig, results: &ExperimentResults) -> Heatmap {
    let sigma = cfg.kernel.sigma.first().copied().filter(|_| cfg.kernel.family == "gaussian");
    let lambdas = cfg.grid.lambda.clone();
    let ms = cfg.grid.m.clone();
    let mut mean = vec![vec![f64::NAN; ms.len()]; lambdas.len()];
    let mut std = mean.clone();
    let mut failed = 0;
    for c in results.cells.iter().filter(|c| c.sigma == sigma) {
        let (Some(i), Some(j)) = (
            lambdas.iter().position(|&l| l == c.lambda),
            ms.iter().position(|&m| m == c.m),
        ) else {
            continue;
        };
        if !c.ok() {
            failed += 1;
            continue;
        }
        let s = c.c_err();
        mean[i][j] = s.mean;
        std[i][j] = s.std;
    }
    Heatmap {
        sigma,
        lambdas,
        ms,
        mean,
        std,
        failed_cells: failed,
    }
}

/// Runs the `lambda x m` grid at the first sigma.
pub fn sweep_heatmap_on(cfg: &ExperimentConfig, train: &Dataset, test: &Dataset) -> Result<Heatmap> {
    if cfg.grid.lambda.len() < 2 || cfg.grid.m.len() < 2 {
        return Err(Error::invalid("a heatmap needs at least two lambda and two m values"));
    }
    let mut single = cfg.clone();
    if single.kernel.sigma.len() > 1 {
        log::warn!("heatmap uses only the first sigma value");
        single.kernel.sigma.truncate(1);
    }
    let results = run_experiment_on(&single, train, test)?;
    Ok(heatmap_from_results(&single, &results))
}

pub fn sweep_heatmap(cfg: &ExperimentConfig) -> Result<Heatmap> {
    cfg.validate()?;
    let (train, test) = cfg.load_data()?;
    sweep_heatmap_on(cfg, &train, &test)
}
