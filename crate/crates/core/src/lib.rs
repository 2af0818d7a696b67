//! Empirical risk minimization over random Nystrom subspaces.
//!
//! Pipeline: pick landmarks ([`sampling`]), build the subspace embedding
//! ([`nystrom`]), train a linear predictor on the embedded data by
//! stochastic subgradient descent ([`solver`]) and predict with optional
//! clipping ([`model`]). [`diagnostics`] measures effective dimensions,
//! projection residuals and spectral decay; [`synth`] generates data with a
//! controlled spectrum; [`experiment`] runs grid sweeps.

pub mod data;
pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod kernel;
pub mod linalg;
pub mod model;
pub mod nystrom;
pub mod pipeline;
pub mod sampling;
pub mod solver;
pub mod synth;

pub use data::{load_libsvm, parse_libsvm, split, Binarization, Dataset};
pub use error::{Error, Result};
pub use kernel::{eval_kernel, gram, KernelSpec, PrecomputedKernel};
pub use linalg::Points;
pub use model::{predict, TrainedModel};
pub use nystrom::{embed, fit_embedding, NystromMap};
pub use pipeline::{train_model, PipelineConfig};
pub use sampling::{
    als_landmarks, approximate_leverage_scores, exact_leverage_scores, uniform_landmarks,
    LandmarkSet, LeverageScores, SamplingMethod,
};
pub use solver::{
    classification_error, loss_subgradient, loss_value, train_constrained, train_penalized,
    LossFamily, LossSpec, TrainOptions, TrainedWeights,
};

/// Deterministic generator used for every seeded operation.
pub type SeededRng = rand::rngs::ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    use rand::SeedableRng;
    SeededRng::seed_from_u64(seed)
}
