//! The subspace embedding `x -> (K_m^{1/2})^+ (K(x~_1, x), ..., K(x~_m, x))`.
//!
//! Inner products of embedded points reproduce the projected kernel
//! `K_xm K_m^+ K_my`. Eigenvalues of `K_m` at or below `tol * lambda_max` are
//! dropped, so the embedding dimension is the retained rank `r <= m`.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernel::{gram, KernelSpec};
use crate::linalg::Points;
use crate::sampling::{psd_eigen, LandmarkSet};

/// Default relative eigenvalue cutoff for the pseudo-inverse.
pub const DEFAULT_EIGEN_TOL: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct NystromMap {
    kernel: KernelSpec,
    landmarks: LandmarkSet,
    landmark_points: Points,
    /// All eigenvalues of `K_m`, nonincreasing, roundoff negatives clamped.
    eigenvalues: Vec<f64>,
    /// `r x m`, rows `u_j / sqrt(lambda_j)` for the retained eigenpairs.
    factor: DMatrix<f64>,
    tol: f64,
}

pub fn fit_embedding(
    ds: &Dataset,
    spec: &KernelSpec,
    lm: &LandmarkSet,
    tol: f64,
) -> Result<NystromMap> {
    lm.check_against(ds.len())?;
    let points = ds.points().select(&lm.indices);
    NystromMap::from_landmark_points(spec.clone(), lm.clone(), points, tol)
}

impl NystromMap {
    pub fn from_landmark_points(
        kernel: KernelSpec,
        landmarks: LandmarkSet,
        landmark_points: Points,
        tol: f64,
    ) -> Result<Self> {
        kernel.validate()?;
        if !(0.0..1.0).contains(&tol) {
            return Err(Error::invalid(format!("eigenvalue cutoff must lie in [0, 1), got {tol}")));
        }
        if landmark_points.is_empty() {
            return Err(Error::invalid("landmark set is empty"));
        }
        if landmark_points.len() != landmarks.len() {
            return Err(Error::invalid("landmark points do not match the landmark set"));
        }
        let km = gram(&kernel, &landmark_points, &landmark_points)?;
        let eig = psd_eigen(&km, "landmark Gram matrix")?;
        let top = eig.values[0];
        let rank = eig
            .values
            .iter()
            .take_while(|&&v| v > 0.0 && v > tol * top)
            .count();
        let m = landmark_points.len();
        if rank < m {
            log::info!("landmark Gram has numerical rank {rank} of {m}; embedding dimension reduced");
        }
        let mut factor = DMatrix::zeros(rank, m);
        for j in 0..rank {
            let s = eig.values[j].sqrt();
            for c in 0..m {
                factor[(j, c)] = eig.vectors[(c, j)] / s;
            }
        }
        Ok(NystromMap {
            kernel,
            landmarks,
            landmark_points,
            eigenvalues: eig.values,
            factor,
            tol,
        })
    }

    /// Rebuilds a map from stored parts without refactoring `K_m`.
    pub(crate) fn from_parts(
        kernel: KernelSpec,
        landmarks: LandmarkSet,
        landmark_points: Points,
        eigenvalues: Vec<f64>,
        factor: DMatrix<f64>,
        tol: f64,
    ) -> Result<Self> {
        let m = landmark_points.len();
        if landmarks.len() != m || factor.ncols() != m || eigenvalues.len() != m || factor.nrows() > m {
            return Err(Error::Format("inconsistent embedding dimensions".into()));
        }
        Ok(NystromMap {
            kernel,
            landmarks,
            landmark_points,
            eigenvalues,
            factor,
            tol,
        })
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn landmarks(&self) -> &LandmarkSet {
        &self.landmarks
    }

    pub fn landmark_points(&self) -> &Points {
        &self.landmark_points
    }

    /// Number of landmarks `m`.
    pub fn num_landmarks(&self) -> usize {
        self.landmark_points.len()
    }

    /// Embedding dimension `r`.
    pub fn rank(&self) -> usize {
        self.factor.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.landmark_points.dim()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn retained_eigenvalues(&self) -> &[f64] {
        &self.eigenvalues[..self.rank()]
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    /// `K_m`, recomputed from the landmark points.
    pub fn landmark_gram(&self) -> Result<DMatrix<f64>> {
        gram(&self.kernel, &self.landmark_points, &self.landmark_points)
    }

    /// Retained orthonormal eigenvectors of `K_m` as columns (`m x r`).
    pub fn eigenvectors(&self) -> DMatrix<f64> {
        let mut u = self.factor.transpose();
        for (j, lambda) in self.retained_eigenvalues().iter().enumerate() {
            u.column_mut(j).scale_mut(lambda.sqrt());
        }
        u
    }
}

/// Embeds `x` in batches of `batch` points (default: one batch per `m`
/// points). Returns an `n x r` row-major matrix.
pub fn embed(map: &NystromMap, x: &Points, batch: Option<usize>) -> Result<Points> {
    let r = map.rank();
    if x.is_empty() {
        return Ok(Points::empty(r));
    }
    if x.dim() != map.input_dim() {
        return Err(Error::invalid(format!(
            "points have dimension {}, embedding expects {}",
            x.dim(),
            map.input_dim()
        )));
    }
    let batch = batch.unwrap_or(map.num_landmarks()).max(1);
    let starts: Vec<usize> = (0..x.len()).step_by(batch).collect();
    let blocks: Vec<Result<Vec<f64>>> = starts
        .into_par_iter()
        .map(|start| {
            let end = (start + batch).min(x.len());
            let idx: Vec<usize> = (start..end).collect();
            let chunk = x.select(&idx);
            // m x b; the product r x b is column-major with one embedded
            // point per column, i.e. the row-major block we need.
            let kmb = gram(&map.kernel, &map.landmark_points, &chunk)?;
            let e = &map.factor * kmb;
            Ok(e.as_slice().to_vec())
        })
        .collect();
    let mut data = Vec::with_capacity(x.len() * r);
    for b in blocks {
        data.extend(b?);
    }
    Points::new(x.len(), r, data)
}
