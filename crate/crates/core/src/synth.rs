//! Synthetic classification data with a prescribed covariance spectrum and a
//! linear ground truth.
//!
//! Inputs are `x = D^{1/2} z` with `z` standard Gaussian and `D` diagonal,
//! `D_jj` proportional to `j^{-1/p}` or `e^{-beta j}` and scaled to unit
//! trace. Labels are `sign(<w*, x>)`, optionally flipped with a fixed
//! probability; a margin `tau` rejects points with `|<w*, x>| < tau`.

use rand::RngExt;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{dot, Points};
use crate::seeded_rng;

/// Margin used by the "easy" hard-margin configuration.
pub const DEFAULT_MARGIN: f64 = 0.1;

/// Rejection sampling gives up after this many draws per accepted point.
const MAX_REJECTIONS: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum SynthDecay {
    Polynomial { p: f64 },
    Exponential { beta: f64 },
}

impl std::str::FromStr for SynthDecay {
    type Err = Error;

    /// `polynomial:0.5` or `exponential:0.3`.
    fn from_str(s: &str) -> Result<Self> {
        let (family, value) = s
            .split_once(':')
            .ok_or_else(|| Error::invalid(format!("expected family:value, got {s:?}")))?;
        let v: f64 = value
            .parse()
            .map_err(|_| Error::invalid(format!("bad decay parameter {value:?}")))?;
        match family {
            "polynomial" | "poly" => Ok(SynthDecay::Polynomial { p: v }),
            "exponential" | "exp" => Ok(SynthDecay::Exponential { beta: v }),
            _ => Err(Error::invalid(format!("unknown decay family {family:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n: usize,
    pub d: usize,
    pub decay: SynthDecay,
    pub target_norm: f64,
    /// Label flip probability in `[0, 0.5)`.
    pub label_noise: f64,
    /// Minimum `|<w*, x>|` of accepted points.
    #[serde(default)]
    pub margin: Option<f64>,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(Error::invalid("n must be positive"));
        }
        if self.d < 2 {
            return Err(Error::invalid("d must be at least 2"));
        }
        match self.decay {
            SynthDecay::Polynomial { p } if !(p > 0.0 && p < 1.0) => {
                return Err(Error::invalid(format!("polynomial decay needs p in (0, 1), got {p}")))
            }
            SynthDecay::Exponential { beta } if !(beta > 0.0 && beta.is_finite()) => {
                return Err(Error::invalid(format!("exponential decay needs beta > 0, got {beta}")))
            }
            _ => {}
        }
        if !(self.target_norm > 0.0 && self.target_norm.is_finite()) {
            return Err(Error::invalid("target norm must be positive"));
        }
        if !(0.0..0.5).contains(&self.label_noise) {
            return Err(Error::invalid("label noise must lie in [0, 0.5)"));
        }
        if let Some(tau) = self.margin {
            if !(tau >= 0.0 && tau.is_finite()) {
                return Err(Error::invalid("margin must be non-negative"));
            }
        }
        Ok(())
    }
}

/// Unit-trace diagonal covariance.
pub fn covariance_diagonal(decay: SynthDecay, d: usize) -> Vec<f64> {
    let raw: Vec<f64> = (1..=d)
        .map(|j| {
            let j = j as f64;
            match decay {
                SynthDecay::Polynomial { p } => j.powf(-1.0 / p),
                SynthDecay::Exponential { beta } => (-beta * j).exp(),
            }
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

#[derive(Clone, Debug)]
pub struct SynthData {
    pub dataset: Dataset,
    pub target: Vec<f64>,
    pub covariance: Vec<f64>,
}

pub fn generate(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let mut rng = seeded_rng(spec.seed);
    let cov = covariance_diagonal(spec.decay, spec.d);
    let scale: Vec<f64> = cov.iter().map(|v| v.sqrt()).collect();

    let mut target: Vec<f64> = (0..spec.d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let tn = dot(&target, &target).sqrt();
    target.iter_mut().for_each(|v| *v *= spec.target_norm / tn);

    let tau = spec.margin.unwrap_or(0.0);
    let mut points = Points::zeros(spec.n, spec.d);
    let mut labels = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        let mut tries = 0;
        let score = loop {
            let row = points.row_mut(i);
            for (x, s) in row.iter_mut().zip(&scale) {
                *x = s * rng.sample::<f64, _>(StandardNormal);
            }
            let score = dot(&target, row);
            if score.abs() >= tau {
                break score;
            }
            tries += 1;
            if tries >= MAX_REJECTIONS {
                return Err(Error::invalid(format!(
                    "margin {tau} rejects nearly all points; reduce it or raise the target norm"
                )));
            }
        };
        let mut y = if score >= 0.0 { 1.0 } else { -1.0 };
        if spec.label_noise > 0.0 && rng.random::<f64>() < spec.label_noise {
            y = -y;
        }
        labels.push(y);
    }
    let name = match spec.decay {
        SynthDecay::Polynomial { p } => format!("synth-poly{p}-n{}-d{}-s{}", spec.n, spec.d, spec.seed),
        SynthDecay::Exponential { beta } => {
            format!("synth-exp{beta}-n{}-d{}-s{}", spec.n, spec.d, spec.seed)
        }
    };
    Ok(SynthData {
        dataset: Dataset::new(name, points, labels)?,
        target,
        covariance: cov,
    })
}
