//! Trained predictor: a Nystrom map plus subspace weights, with a versioned
//! JSON file format that needs no access to the training set.
//!
//! File layout (version 1):
//!
//! ```text
//! {
//!   "format": "nystrom-erm-model", "version": 1,
//!   "kernel": {"family": "gaussian", "sigma": 10.0},
//!   "landmarks": {"indices": [...], "method": "als", "alpha": 1e-5, "seed": 0},
//!   "landmark_points": {"rows": m, "dim": d, "data": [row-major m*d]},
//!   "eigenvalues": [m values, nonincreasing],
//!   "tol": 1e-12,
//!   "factor": {"rows": r, "dim": m, "data": [row-major r*m]},
//!   "weights": {"weights": [r values], "lambda": ..., "loss": {...}, ...}
//! }
//! ```
//!
//! The score of a point `x` is `weights . (factor * k(x))` where
//! `k(x)_j = K(landmark_j, x)`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::linalg::Points;
use crate::nystrom::{embed, NystromMap};
use crate::sampling::LandmarkSet;
use crate::solver::{predict_embedded, TrainedWeights};

pub const MODEL_FORMAT: &str = "nystrom-erm-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub map: NystromMap,
    pub fit: TrainedWeights,
}

impl TrainedModel {
    pub fn new(map: NystromMap, fit: TrainedWeights) -> Result<Self> {
        if map.rank() != fit.weights.len() {
            return Err(Error::invalid(format!(
                "weights have dimension {}, embedding has rank {}",
                fit.weights.len(),
                map.rank()
            )));
        }
        Ok(TrainedModel { map, fit })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_json(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = BufReader::new(File::open(path)?);
        let wire: ModelFile = serde_json::from_reader(file)?;
        wire.into_model()
    }

    pub fn write_json(&self, w: impl Write) -> Result<()> {
        let wire = ModelFile::from_model(self)?;
        serde_json::to_writer(w, &wire)?;
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let wire: ModelFile = serde_json::from_str(s)?;
        wire.into_model()
    }
}

/// Scores `<a, embed(x_i)>`, clipped to `[-M, M]` when `clip` is set.
pub fn predict(model: &TrainedModel, x: &Points, clip: bool) -> Result<Vec<f64>> {
    let e = embed(&model.map, x, None)?;
    predict_embedded(&model.fit, &e, clip)
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    kernel: KernelSpec,
    landmarks: LandmarkSet,
    landmark_points: Points,
    eigenvalues: Vec<f64>,
    tol: f64,
    factor: Points,
    weights: TrainedWeights,
}

impl ModelFile {
    fn from_model(model: &TrainedModel) -> Result<Self> {
        if let KernelSpec::Precomputed(_) = model.map.kernel() {
            return Err(Error::invalid(
                "models over precomputed kernels cannot be saved; the Gram matrix is external",
            ));
        }
        Ok(ModelFile {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            kernel: model.map.kernel().clone(),
            landmarks: model.map.landmarks().clone(),
            landmark_points: model.map.landmark_points().clone(),
            eigenvalues: model.map.eigenvalues().to_vec(),
            tol: model.map.tol(),
            factor: Points::from_matrix(model.map.factor()),
            weights: model.fit.clone(),
        })
    }

    fn into_model(self) -> Result<TrainedModel> {
        if self.format != MODEL_FORMAT {
            return Err(Error::Format(format!("not a model file (format {:?})", self.format)));
        }
        if self.version != MODEL_VERSION {
            return Err(Error::Format(format!("unsupported model version {}", self.version)));
        }
        self.kernel.validate()?;
        let factor = DMatrix::from_row_slice(self.factor.len(), self.factor.dim(), self.factor.as_slice());
        let map = NystromMap::from_parts(
            self.kernel,
            self.landmarks,
            self.landmark_points,
            self.eigenvalues,
            factor,
            self.tol,
        )?;
        TrainedModel::new(map, self.weights)
    }
}
