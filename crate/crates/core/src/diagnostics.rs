//! Spectral diagnostics of the statistical-computational tradeoff.
//!
//! All quantities are empirical: the covariance spectrum is `eig(K) / n`,
//! `d_{alpha,2} = sum_j lambda_j / (lambda_j + alpha)` and the sup-norm
//! effective dimension is approximated by the sample maximum
//! `n * max_i l_i(alpha)`. The projection residual is
//! `lambda_max(K - K_nm K_m^+ K_mn) / n`, the squared operator norm of
//! `Sigma^{1/2} (I - P_m)` for the empirical covariance.

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernel::{gram, KernelSpec};
use crate::linalg::{extreme_eigenvalues, Points};
use crate::nystrom::{embed, fit_embedding, DEFAULT_EIGEN_TOL};
use crate::sampling::{exact_leverage_scores, psd_eigen, LandmarkSet, PSD_TOLERANCE};

/// Minimum number of positive eigenvalues for a decay fit.
pub const MIN_FIT_POINTS: usize = 10;

/// Eigenvalues below this fraction of the largest are roundoff.
const SPECTRUM_FLOOR: f64 = 64.0 * f64::EPSILON;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Decay {
    /// `lambda_j ~ gamma j^{-1/p}`
    Polynomial { p: f64, gamma: f64 },
    /// `lambda_j ~ gamma e^{-beta j}`
    Exponential { beta: f64, gamma: f64 },
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub eigenvalues: Vec<f64>,
    pub decay: Decay,
    /// RMS residual of the selected fit in log-eigenvalue units.
    pub fit_residual: f64,
    pub polynomial_residual: f64,
    pub exponential_residual: f64,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha.is_finite() && alpha > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("alpha must be positive, got {alpha}")))
    }
}

/// Eigenvalues of the empirical covariance, `eig(K) / n`, nonincreasing.
pub fn covariance_spectrum(k: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = k.nrows() as f64;
    let eig = psd_eigen(k, "Gram matrix")?;
    Ok(eig.values.into_iter().map(|v| v / n).collect())
}

/// `sum_j s_j / (s_j + alpha)` for a covariance spectrum `s`.
pub fn effective_dim_from_spectrum(spectrum: &[f64], alpha: f64) -> f64 {
    spectrum.iter().map(|&s| s / (s + alpha)).sum()
}

pub fn effective_dim_2(k: &DMatrix<f64>, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(effective_dim_from_spectrum(&covariance_spectrum(k)?, alpha))
}

pub fn effective_dim_inf(k: &DMatrix<f64>, alpha: f64) -> Result<f64> {
    let scores = exact_leverage_scores(k, alpha)?;
    let top = scores.scores.iter().copied().fold(0.0, f64::max);
    Ok(k.nrows() as f64 * top)
}

/// Reusable Gram matrix for repeated residual evaluations on one dataset.
pub struct ResidualProbe<'a> {
    ds: &'a Dataset,
    spec: &'a KernelSpec,
    gram: DMatrix<f64>,
    top: f64,
}

impl<'a> ResidualProbe<'a> {
    pub fn new(ds: &'a Dataset, spec: &'a KernelSpec) -> Result<Self> {
        let gram = gram(spec, ds.points(), ds.points())?;
        let (_, top) = extreme_eigenvalues(&gram);
        Ok(ResidualProbe { ds, spec, gram, top })
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn residual(&self, lm: &LandmarkSet) -> Result<f64> {
        let map = fit_embedding(self.ds, self.spec, lm, DEFAULT_EIGEN_TOL)?;
        let q = embed(&map, self.ds.points(), None)?;
        self.residual_of_embedding(&q)
    }

    /// Residual for an arbitrary embedding of the dataset's points.
    pub fn residual_of_embedding(&self, q: &Points) -> Result<f64> {
        let n = self.ds.len();
        let r = q.dim();
        // row-major n x r is the column-major r x n matrix Q^T
        let qt = DMatrix::from_column_slice(r, n, q.as_slice());
        let mut resid = self.gram.clone();
        resid.gemm_tr(-1.0, &qt, &qt, 1.0);
        // exact symmetry for the eigen-solver
        for j in 0..n {
            for i in (j + 1)..n {
                let v = 0.5 * (resid[(i, j)] + resid[(j, i)]);
                resid[(i, j)] = v;
                resid[(j, i)] = v;
            }
        }
        let (lo, hi) = extreme_eigenvalues(&resid);
        if lo < -PSD_TOLERANCE * self.top.max(0.0) && lo < -f64::EPSILON * self.top.abs().max(1.0) {
            return Err(Error::domain(format!(
                "Nystrom residual is indefinite (eigenvalue {lo:e}, kernel scale {:e})",
                self.top
            )));
        }
        Ok(hi.max(0.0) / n as f64)
    }
}

pub fn projection_residual(ds: &Dataset, spec: &KernelSpec, lm: &LandmarkSet) -> Result<f64> {
    lm.check_against(ds.len())?;
    ResidualProbe::new(ds, spec)?.residual(lm)
}

/// Upper bound `beta / (beta - 1) (gamma / alpha)^{1/beta}` on
/// `d_{alpha,2}` when `lambda_j <= gamma j^{-beta}`. For `gamma >= 1` it is
/// at most `gamma beta / (beta - 1) alpha^{-1/beta}`; the latter form is not
/// a bound when `gamma < 1`.
pub fn polynomial_dim_bound(gamma: f64, beta: f64, alpha: f64) -> Result<f64> {
    if !(beta > 1.0) {
        return Err(Error::invalid(format!("polynomial bound needs beta > 1, got {beta}")));
    }
    if !(gamma > 0.0) {
        return Err(Error::invalid("gamma must be positive"));
    }
    check_alpha(alpha)?;
    Ok(beta / (beta - 1.0) * (gamma / alpha).powf(1.0 / beta))
}

/// Upper bound on `d_{alpha,2}` when `lambda_j <= gamma e^{-beta j}`.
pub fn exponential_dim_bound(gamma: f64, beta: f64, alpha: f64) -> Result<f64> {
    if !(gamma > 0.0 && beta > 0.0) {
        return Err(Error::invalid("gamma and beta must be positive"));
    }
    check_alpha(alpha)?;
    Ok((gamma / alpha).ln_1p() / beta)
}

struct LineFit {
    slope: f64,
    intercept: f64,
    rms: f64,
}

fn least_squares(xs: &[f64], ys: &[f64]) -> LineFit {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let sse: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let e = y - (intercept + slope * x);
            e * e
        })
        .sum();
    LineFit {
        slope,
        intercept,
        rms: (sse / n).sqrt(),
    }
}

/// Fits `log lambda_j` against `log j` (polynomial) and against `j`
/// (exponential) over the middle 80% of the positive spectrum and keeps the
/// family with the smaller residual.
pub fn fit_eigendecay(spectrum: &[f64]) -> Result<SpectrumReport> {
    let mut eigenvalues = spectrum.to_vec();
    eigenvalues.sort_by(|a, b| b.total_cmp(a));
    let top = eigenvalues.first().copied().unwrap_or(0.0);
    if let Some(&bottom) = eigenvalues.last() {
        if bottom < -PSD_TOLERANCE * top.max(0.0) {
            return Err(Error::domain(format!("spectrum has negative value {bottom:e}")));
        }
    }
    for v in &mut eigenvalues {
        *v = v.max(0.0);
    }
    let floor = top * SPECTRUM_FLOOR;
    let positive = eigenvalues.iter().take_while(|&&v| v > 0.0 && v > floor).count();
    if positive < MIN_FIT_POINTS {
        return Err(Error::InsufficientData(format!(
            "{positive} positive eigenvalues, at least {MIN_FIT_POINTS} needed for a decay fit"
        )));
    }
    let lo = positive / 10;
    let hi = positive - positive / 10;
    let js: Vec<f64> = (lo..hi).map(|i| (i + 1) as f64).collect();
    let logs: Vec<f64> = (lo..hi).map(|i| eigenvalues[i].ln()).collect();
    let log_js: Vec<f64> = js.iter().map(|j| j.ln()).collect();

    let poly = least_squares(&log_js, &logs);
    let expo = least_squares(&js, &logs);

    let poly_ok = poly.slope < 0.0;
    let expo_ok = expo.slope < 0.0;
    let (decay, fit_residual) = if !poly_ok && !expo_ok {
        (Decay::None, f64::NAN)
    } else if poly_ok && (!expo_ok || poly.rms <= expo.rms) {
        let p = (-1.0 / poly.slope).clamp(1e-9, 1.0 - 1e-9);
        (
            Decay::Polynomial {
                p,
                gamma: poly.intercept.exp(),
            },
            poly.rms,
        )
    } else {
        (
            Decay::Exponential {
                beta: -expo.slope,
                gamma: expo.intercept.exp(),
            },
            expo.rms,
        )
    };
    Ok(SpectrumReport {
        eigenvalues,
        decay,
        fit_residual,
        polynomial_residual: poly.rms,
        exponential_residual: expo.rms,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "regime", rename_all = "lowercase")]
pub enum Regime {
    /// `n^p log n`
    Basic,
    /// `n^{2p/(1+p)} log n`
    Fast,
    /// `n^{min(2p, p(r+1)/(r(2-p-theta+theta p)+p))} log n` for source
    /// exponent `r` and Bernstein exponent `theta`.
    General { r: f64, theta: f64 },
}

/// Landmark count prescribed by the fitted decay; natural logarithms and
/// unit constants, clamped to `[1, n]`. Exponential decay gives `log^2 n`
/// in every regime.
pub fn suggest_subspace_size(n: usize, report: &SpectrumReport, regime: Regime) -> Result<usize> {
    if let Regime::General { r, theta } = regime {
        if !(r > 0.0 && r <= 1.0) || !(0.0..=1.0).contains(&theta) {
            return Err(Error::invalid(format!(
                "general regime needs r in (0, 1] and theta in [0, 1], got r={r}, theta={theta}"
            )));
        }
    }
    if n == 0 {
        return Err(Error::invalid("sample size must be positive"));
    }
    let ln_n = (n as f64).ln();
    let raw = match report.decay {
        Decay::None => return Err(Error::invalid("spectrum report has no fitted decay")),
        Decay::Exponential { .. } => ln_n * ln_n,
        Decay::Polynomial { p, .. } => {
            let exponent = match regime {
                Regime::Basic => p,
                Regime::Fast => 2.0 * p / (1.0 + p),
                Regime::General { r, theta } => {
                    let rate = p * (r + 1.0) / (r * (2.0 - p - theta + theta * p) + p);
                    (2.0 * p).min(rate)
                }
            };
            (n as f64).powf(exponent) * ln_n
        }
    };
    Ok((raw.ceil() as usize).clamp(1, n))
}

/// `ceil(c alpha^{-p} log n)`, the landmark count matched to a ridge level.
pub fn landmarks_for_alpha(alpha: f64, p: f64, n: usize, c: f64) -> usize {
    (c * alpha.powf(-p) * (n as f64).ln()).ceil() as usize
}

/// Inverse of [`landmarks_for_alpha`]: `(c log n / m)^{1/p}`.
pub fn alpha_for_landmarks(m: usize, p: f64, n: usize, c: f64) -> f64 {
    (c * (n as f64).ln() / m as f64).powf(1.0 / p)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRow {
    pub alpha: f64,
    pub effective_dim_2: f64,
    pub effective_dim_inf: f64,
    /// Residual of the supplied landmark set, if any.
    pub residual: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub dataset: String,
    pub n: usize,
    pub landmarks: Option<usize>,
    pub rows: Vec<DiagnosticsRow>,
    pub spectrum: Option<SpectrumReport>,
    pub suggested_basic: Option<usize>,
    pub suggested_fast: Option<usize>,
}

impl DiagnosticsReport {
    /// `alpha,d2,dinf,residual` rows.
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["alpha", "d_alpha_2", "d_alpha_inf", "residual"])?;
        for r in &self.rows {
            out.write_record([
                format!("{:e}", r.alpha),
                format!("{:.9e}", r.effective_dim_2),
                format!("{:.9e}", r.effective_dim_inf),
                r.residual.map(|v| format!("{v:.9e}")).unwrap_or_default(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Effective dimensions (and residuals for `landmarks`) over an alpha grid,
/// plus a spectrum fit when enough eigenvalues are positive.
pub fn diagnose(
    ds: &Dataset,
    spec: &KernelSpec,
    alphas: &[f64],
    landmarks: Option<&LandmarkSet>,
) -> Result<DiagnosticsReport> {
    if alphas.is_empty() {
        return Err(Error::invalid("alpha grid is empty"));
    }
    let probe = ResidualProbe::new(ds, spec)?;
    let k = probe.gram();
    let spectrum = covariance_spectrum(k)?;
    let residual = match landmarks {
        Some(lm) => {
            lm.check_against(ds.len())?;
            Some(probe.residual(lm)?)
        }
        None => None,
    };
    let rows = alphas
        .iter()
        .map(|&alpha| {
            Ok(DiagnosticsRow {
                alpha,
                effective_dim_2: {
                    check_alpha(alpha)?;
                    effective_dim_from_spectrum(&spectrum, alpha)
                },
                effective_dim_inf: effective_dim_inf(k, alpha)?,
                residual,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let fit = match fit_eigendecay(&spectrum) {
        Ok(r) => Some(r),
        Err(Error::InsufficientData(_)) => None,
        Err(e) => return Err(e),
    };
    let n = ds.len();
    let suggest = |regime| {
        fit.as_ref()
            .and_then(|r| suggest_subspace_size(n, r, regime).ok())
    };
    Ok(DiagnosticsReport {
        dataset: ds.name.clone(),
        n,
        landmarks: landmarks.map(LandmarkSet::len),
        rows,
        suggested_basic: suggest(Regime::Basic),
        suggested_fast: suggest(Regime::Fast),
        spectrum: fit,
    })
}
