//! Landmark selection: uniform subsets and ridge-leverage-score sampling.
//!
//! The ridge leverage score of point `i` at level `alpha` is
//! `l_i(alpha) = (K (K + alpha n I)^{-1})_{ii}`; the scores sum to the
//! empirical effective dimension `Tr((K + alpha n I)^{-1} K)`. Leverage
//! sampling draws `m` indices i.i.d. from `Q(i) = l_i / sum_j l_j` and drops
//! repeats, so the resulting subspace can have fewer than `m` landmarks.

use std::collections::HashSet;
use std::io::Write;

use nalgebra::DMatrix;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::linalg::{max_asymmetry, sym_eigen};
use crate::nystrom::{embed, fit_embedding, DEFAULT_EIGEN_TOL};
use crate::seeded_rng;

/// Tolerated negative eigenvalue, relative to the largest one.
pub(crate) const PSD_TOLERANCE: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreKind {
    Exact,
    Approximate,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LeverageScores {
    pub alpha: f64,
    pub scores: Vec<f64>,
    pub kind: ScoreKind,
    /// Multiplicative accuracy factor; 1 for exact scores. Approximate
    /// scores carry no runtime certificate and report `f64::NAN`.
    pub approximation_factor: f64,
}

impl LeverageScores {
    pub fn sum(&self) -> f64 {
        self.scores.iter().sum()
    }

    /// Writes `index,score` rows.
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["index", "score"])?;
        for (i, s) in self.scores.iter().enumerate() {
            out.write_record([i.to_string(), format!("{s:e}")])?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMethod {
    Uniform,
    Als,
}

impl std::str::FromStr for SamplingMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(SamplingMethod::Uniform),
            "als" => Ok(SamplingMethod::Als),
            _ => Err(Error::invalid(format!("unknown sampling method {s:?}"))),
        }
    }
}

impl std::fmt::Display for SamplingMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SamplingMethod::Uniform => "uniform",
            SamplingMethod::Als => "als",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LandmarkSet {
    pub indices: Vec<usize>,
    pub method: SamplingMethod,
    pub alpha: Option<f64>,
    pub seed: u64,
}

impl LandmarkSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Landmarks given explicitly, e.g. for diagnostics on a fixed subset.
    pub fn from_indices(indices: Vec<usize>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(indices.len());
        if let Some(dup) = indices.iter().find(|i| !seen.insert(**i)) {
            return Err(Error::invalid(format!("landmark index {dup} repeated")));
        }
        Ok(LandmarkSet {
            indices,
            method: SamplingMethod::Uniform,
            alpha: None,
            seed: 0,
        })
    }

    pub(crate) fn check_against(&self, n: usize) -> Result<()> {
        if self.indices.is_empty() {
            return Err(Error::invalid("landmark set is empty"));
        }
        if let Some(&i) = self.indices.iter().find(|&&i| i >= n) {
            return Err(Error::invalid(format!("landmark index {i} out of range for {n} points")));
        }
        Ok(())
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha.is_finite() && alpha > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("ridge level alpha must be positive, got {alpha}")))
    }
}

/// Eigenvalues of a symmetric PSD matrix with roundoff negatives clamped to
/// zero; rejects genuinely indefinite input.
pub(crate) fn psd_eigen(k: &DMatrix<f64>, what: &str) -> Result<crate::linalg::SortedEigen> {
    let (r, c) = k.shape();
    if r != c {
        return Err(Error::invalid(format!("{what} is {r}x{c}, not square")));
    }
    if k.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("{what} has non-finite entries")));
    }
    let scale = k.amax().max(1.0);
    if max_asymmetry(k) > 1e-8 * scale {
        return Err(Error::invalid(format!("{what} is not symmetric")));
    }
    let mut eig = sym_eigen(k);
    if let (Some(&top), Some(&bottom)) = (eig.values.first(), eig.values.last()) {
        if bottom < -PSD_TOLERANCE * top.max(0.0) && bottom < -f64::EPSILON * scale {
            return Err(Error::domain(format!(
                "{what} is not positive semi-definite (eigenvalue {bottom:e}, largest {top:e})"
            )));
        }
    }
    for v in &mut eig.values {
        *v = v.max(0.0);
    }
    Ok(eig)
}

/// `l_i = sum_j U_ij^2 lambda_j / (lambda_j + alpha n)` from the
/// eigendecomposition `K = U diag(lambda) U^T`.
pub fn exact_leverage_scores(k: &DMatrix<f64>, alpha: f64) -> Result<LeverageScores> {
    check_alpha(alpha)?;
    let n = k.nrows();
    let eig = psd_eigen(k, "Gram matrix")?;
    let ridge = alpha * n as f64;
    let weights: Vec<f64> = eig.values.iter().map(|&l| l / (l + ridge)).collect();
    let scores = (0..n)
        .map(|i| {
            weights
                .iter()
                .enumerate()
                .map(|(j, w)| {
                    let u = eig.vectors[(i, j)];
                    u * u * w
                })
                .sum::<f64>()
                .min(1.0)
        })
        .collect();
    Ok(LeverageScores {
        alpha,
        scores,
        kind: ScoreKind::Exact,
        approximation_factor: 1.0,
    })
}

/// Two-pass estimate: embed every point with a uniform pilot Nystrom map of
/// `pilot_size` landmarks, then score `q_i^T (Q^T Q + alpha n I)^{-1} q_i`.
pub fn approximate_leverage_scores(
    ds: &Dataset,
    spec: &KernelSpec,
    alpha: f64,
    pilot_size: usize,
    seed: u64,
) -> Result<LeverageScores> {
    check_alpha(alpha)?;
    if pilot_size < 1 {
        return Err(Error::invalid("pilot size must be at least 1"));
    }
    let n = ds.len();
    if pilot_size > n {
        return Err(Error::invalid(format!(
            "pilot size {pilot_size} exceeds the {n} available points"
        )));
    }
    let pilot = uniform_landmarks(n, pilot_size, seed)?;
    let map = fit_embedding(ds, spec, &pilot, DEFAULT_EIGEN_TOL)?;
    let q = embed(&map, ds.points(), None)?;
    let r = q.dim();
    let ridge = alpha * n as f64;

    // q stored row-major n x r is the column-major r x n matrix Q^T.
    let qt = DMatrix::from_column_slice(r, n, q.as_slice());
    let mut c = &qt * qt.transpose();
    for j in 0..r {
        c[(j, j)] += ridge;
    }
    let chol = c
        .cholesky()
        .ok_or_else(|| Error::domain("regularized pilot covariance is not positive definite"))?;
    let mut z = qt;
    chol.l().solve_lower_triangular_mut(&mut z);
    let scores = z.column_iter().map(|col| col.norm_squared().min(1.0)).collect();
    Ok(LeverageScores {
        alpha,
        scores,
        kind: ScoreKind::Approximate,
        approximation_factor: f64::NAN,
    })
}

/// `m` distinct indices drawn uniformly without replacement.
pub fn uniform_landmarks(n: usize, m: usize, seed: u64) -> Result<LandmarkSet> {
    if m < 1 || m > n {
        return Err(Error::invalid(format!("cannot draw {m} landmarks from {n} points")));
    }
    let mut rng = seeded_rng(seed);
    let indices = rand::seq::index::sample(&mut rng, n, m).into_vec();
    Ok(LandmarkSet {
        indices,
        method: SamplingMethod::Uniform,
        alpha: None,
        seed,
    })
}

/// `m` i.i.d. draws from the normalized scores, repeats removed in order of
/// first occurrence.
pub fn als_landmarks(scores: &LeverageScores, m: usize, seed: u64) -> Result<LandmarkSet> {
    if m < 1 {
        return Err(Error::invalid("number of draws must be at least 1"));
    }
    if let Some(s) = scores.scores.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
        return Err(Error::invalid(format!("invalid leverage score {s}")));
    }
    if !scores.scores.iter().any(|&s| s > 0.0) {
        return Err(Error::invalid("all leverage scores are zero"));
    }
    let dist = WeightedIndex::new(&scores.scores)
        .map_err(|e| Error::invalid(format!("cannot sample from scores: {e}")))?;
    let mut rng = seeded_rng(seed);
    let mut seen = HashSet::with_capacity(m);
    let mut indices = Vec::with_capacity(m);
    for _ in 0..m {
        let i = dist.sample(&mut rng);
        if seen.insert(i) {
            indices.push(i);
        }
    }
    Ok(LandmarkSet {
        indices,
        method: SamplingMethod::Als,
        alpha: Some(scores.alpha),
        seed,
    })
}

/// Parameters for [`select_landmarks`].
#[derive(Clone, Debug)]
pub struct SamplingPlan {
    pub method: SamplingMethod,
    pub m: usize,
    /// Ridge level for leverage scores.
    pub alpha: f64,
    /// Pilot landmarks for approximate scores; clamped to the dataset size.
    pub pilot_size: usize,
    pub seed: u64,
}

/// Uniform sampling, or approximate scores followed by leverage sampling.
pub fn select_landmarks(ds: &Dataset, spec: &KernelSpec, plan: &SamplingPlan) -> Result<LandmarkSet> {
    let n = ds.len();
    match plan.method {
        SamplingMethod::Uniform => uniform_landmarks(n, plan.m.min(n), plan.seed),
        SamplingMethod::Als => {
            let pilot = plan.pilot_size.min(n);
            let scores = approximate_leverage_scores(ds, spec, plan.alpha, pilot, plan.seed)?;
            als_landmarks(&scores, plan.m, plan.seed ^ 0x5851_f42d_4c95_7f2d)
        }
    }
}
