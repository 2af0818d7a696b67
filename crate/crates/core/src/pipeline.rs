//! End-to-end training: landmarks, embedding, subgradient solver.

use crate::data::Dataset;
use crate::error::Result;
use crate::kernel::KernelSpec;
use crate::model::TrainedModel;
use crate::nystrom::{embed, fit_embedding, DEFAULT_EIGEN_TOL};
use crate::sampling::{select_landmarks, LandmarkSet, SamplingMethod, SamplingPlan};
use crate::solver::{train_constrained, train_penalized, LossSpec, TrainOptions};

#[derive(Clone, Debug)]
pub struct PipelineConfig {
    pub kernel: KernelSpec,
    pub loss: LossSpec,
    pub lambda: f64,
    /// Solve the norm-constrained problem with this radius instead of the
    /// penalized one.
    pub constrained_radius: Option<f64>,
    pub sampling: SamplingPlan,
    pub eigen_tol: f64,
    /// Embedding batch size; defaults to the number of landmarks.
    pub batch: Option<usize>,
    pub train: TrainOptions,
}

impl PipelineConfig {
    /// Gaussian kernel, clipped hinge loss, leverage sampling at
    /// `alpha = lambda` with a pilot of `m` points.
    pub fn new(sigma: f64, lambda: f64, m: usize) -> Result<Self> {
        Ok(PipelineConfig {
            kernel: KernelSpec::gaussian(sigma)?,
            loss: LossSpec::hinge(),
            lambda,
            constrained_radius: None,
            sampling: SamplingPlan {
                method: SamplingMethod::Als,
                m,
                alpha: lambda,
                pilot_size: m,
                seed: 0,
            },
            eigen_tol: DEFAULT_EIGEN_TOL,
            batch: None,
            train: TrainOptions::default(),
        })
    }
}

pub fn train_model(ds: &Dataset, cfg: &PipelineConfig) -> Result<TrainedModel> {
    let lm = select_landmarks(ds, &cfg.kernel, &cfg.sampling)?;
    train_model_with_landmarks(ds, cfg, &lm)
}

pub fn train_model_with_landmarks(
    ds: &Dataset,
    cfg: &PipelineConfig,
    lm: &LandmarkSet,
) -> Result<TrainedModel> {
    let map = fit_embedding(ds, &cfg.kernel, lm, cfg.eigen_tol)?;
    let e = embed(&map, ds.points(), cfg.batch)?;
    let fit = match cfg.constrained_radius {
        Some(radius) => train_constrained(&e, ds.labels(), &cfg.loss, radius, &cfg.train)?,
        None => train_penalized(&e, ds.labels(), &cfg.loss, cfg.lambda, &cfg.train)?,
    };
    TrainedModel::new(map, fit)
}
