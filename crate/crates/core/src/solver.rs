//! Regularized and norm-constrained empirical risk minimization in the
//! embedded space by stochastic subgradient descent.
//!
//! The penalized objective is `(1/n) sum_i loss(y_i, <a, x_i>) + lambda |a|^2`.
//! With the default schedule `eta_t = 1 / (2 lambda t)` each step is
//!
//! ```text
//! a <- a - eta_t (g_t y_i x_i + 2 lambda a),   g_t = d loss / d(y s)
//! ```
//!
//! followed by projection onto the ball of radius `sqrt(loss(y, 0) / lambda)`,
//! which contains the minimizer. The constrained variant drops the penalty
//! and projects onto a user-given radius instead.

use std::str::FromStr;

use rand::RngExt;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm, Points};
use crate::seeded_rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossFamily {
    Hinge,
    Logistic,
}

impl FromStr for LossFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hinge" => Ok(LossFamily::Hinge),
            "logistic" => Ok(LossFamily::Logistic),
            _ => Err(Error::invalid(format!("unknown loss {s:?}"))),
        }
    }
}

impl std::fmt::Display for LossFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LossFamily::Hinge => "hinge",
            LossFamily::Logistic => "logistic",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub family: LossFamily,
    /// Lipschitz constant in the score.
    pub lipschitz: f64,
    /// `loss(y, 0)`.
    pub ell0: f64,
    /// Clipping level `M`.
    pub clip: f64,
}

impl LossSpec {
    pub fn hinge() -> Self {
        LossSpec {
            family: LossFamily::Hinge,
            lipschitz: 1.0,
            ell0: 1.0,
            clip: 1.0,
        }
    }

    pub fn logistic(clip: f64) -> Self {
        LossSpec {
            family: LossFamily::Logistic,
            lipschitz: 1.0,
            ell0: std::f64::consts::LN_2,
            clip,
        }
    }

    pub fn new(family: LossFamily, clip: Option<f64>) -> Result<Self> {
        let mut spec = match family {
            LossFamily::Hinge => LossSpec::hinge(),
            LossFamily::Logistic => LossSpec::logistic(1.0),
        };
        if let Some(c) = clip {
            spec.clip = c;
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lipschitz > 0.0 && self.clip > 0.0) {
            return Err(Error::invalid("loss Lipschitz constant and clip level must be positive"));
        }
        Ok(())
    }
}

pub fn loss_value(loss: &LossSpec, y: f64, score: f64) -> f64 {
    let margin = y * score;
    match loss.family {
        LossFamily::Hinge => (1.0 - margin).max(0.0),
        // log(1 + e^{-z}) without overflow for large |z|
        LossFamily::Logistic => {
            if margin > 0.0 {
                (-margin).exp().ln_1p()
            } else {
                -margin + margin.exp().ln_1p()
            }
        }
    }
}

/// Derivative of the loss with respect to the margin `y * score`; the
/// subgradient with respect to the score is `y` times this value. The hinge
/// kink `y * score = 1` resolves to `-1`.
pub fn loss_subgradient(loss: &LossSpec, y: f64, score: f64) -> f64 {
    let margin = y * score;
    match loss.family {
        LossFamily::Hinge => {
            if margin <= 1.0 {
                -1.0
            } else {
                0.0
            }
        }
        LossFamily::Logistic => {
            // -1 / (1 + e^{z}), evaluated stably on both sides
            if margin > 0.0 {
                let e = (-margin).exp();
                -e / (1.0 + e)
            } else {
                -1.0 / (1.0 + margin.exp())
            }
        }
    }
}

/// Subgradient of `s -> loss(y, s)`.
pub fn score_subgradient(loss: &LossSpec, y: f64, score: f64) -> f64 {
    y * loss_subgradient(loss, y, score)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepSchedule {
    /// `1 / (2 lambda t)`. The constrained solver substitutes the default
    /// `InvSqrt` schedule.
    Pegasos,
    /// `scale / sqrt(t)`; `None` picks `R / (G max |x_i|)`.
    InvSqrt { scale: Option<f64> },
    Constant { eta: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateMode {
    /// One uniformly drawn sample per step, `n` steps per epoch.
    Stochastic,
    /// Full-batch subgradient, one step per epoch.
    FullBatch,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub epochs: usize,
    pub seed: u64,
    pub schedule: StepSchedule,
    pub mode: UpdateMode,
    /// Return the `t`-weighted average of the iterates instead of the last
    /// one.
    pub average: bool,
    /// Penalized solver: project onto the ball `sqrt(ell0 / lambda)`.
    pub project_ball: bool,
    /// Record the objective after every epoch.
    pub track_objective: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            epochs: 10,
            seed: 0,
            schedule: StepSchedule::Pegasos,
            mode: UpdateMode::Stochastic,
            average: false,
            project_ball: true,
            track_objective: false,
        }
    }
}

/// Solution of the subspace problem, independent of the embedding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedWeights {
    pub weights: Vec<f64>,
    /// Penalty level; 0 for the constrained problem.
    pub lambda: f64,
    /// Radius of the constrained problem.
    pub radius: Option<f64>,
    pub loss: LossSpec,
    pub epochs: usize,
    pub steps: u64,
    pub objective: f64,
    /// Objective after each epoch when tracking was requested.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub objective_trace: Vec<f64>,
}

/// `(1/n) sum loss(y_i, <a, x_i>) + lambda |a|^2`.
pub fn objective(embedded: &Points, labels: &[f64], loss: &LossSpec, lambda: f64, a: &[f64]) -> f64 {
    empirical_risk(embedded, labels, loss, a) + lambda * dot(a, a)
}

pub fn empirical_risk(embedded: &Points, labels: &[f64], loss: &LossSpec, a: &[f64]) -> f64 {
    if embedded.is_empty() {
        return 0.0;
    }
    let total: f64 = embedded
        .iter()
        .zip(labels)
        .map(|(x, &y)| loss_value(loss, y, dot(a, x)))
        .sum();
    total / embedded.len() as f64
}

fn check_problem(embedded: &Points, labels: &[f64], loss: &LossSpec, opts: &TrainOptions) -> Result<()> {
    loss.validate()?;
    if embedded.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} embedded points but {} labels",
            embedded.len(),
            labels.len()
        )));
    }
    if embedded.is_empty() {
        return Err(Error::invalid("no training points"));
    }
    if let Some(y) = labels.iter().find(|&&y| y != 1.0 && y != -1.0) {
        return Err(Error::invalid(format!("label {y} is not +1/-1")));
    }
    if opts.epochs < 1 {
        return Err(Error::invalid("at least one epoch is required"));
    }
    if let StepSchedule::Constant { eta } = opts.schedule {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::invalid("constant step size must be positive"));
        }
    }
    if let StepSchedule::InvSqrt { scale: Some(c) } = opts.schedule {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::invalid("step scale must be positive"));
        }
    }
    Ok(())
}

enum Problem {
    Penalized { lambda: f64, ball: Option<f64> },
    Constrained { radius: f64 },
}

pub fn train_penalized(
    embedded: &Points,
    labels: &[f64],
    loss: &LossSpec,
    lambda: f64,
    opts: &TrainOptions,
) -> Result<TrainedWeights> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("lambda must be positive, got {lambda}")));
    }
    check_problem(embedded, labels, loss, opts)?;
    let ball = opts.project_ball.then(|| (loss.ell0 / lambda).sqrt());
    run(embedded, labels, loss, Problem::Penalized { lambda, ball }, opts)
}

pub fn train_constrained(
    embedded: &Points,
    labels: &[f64],
    loss: &LossSpec,
    radius: f64,
    opts: &TrainOptions,
) -> Result<TrainedWeights> {
    if !(radius >= 0.0) {
        return Err(Error::invalid(format!("radius must be non-negative, got {radius}")));
    }
    check_problem(embedded, labels, loss, opts)?;
    // 1/(2 lambda t) is undefined without a penalty
    let mut opts = opts.clone();
    if opts.schedule == StepSchedule::Pegasos {
        opts.schedule = StepSchedule::InvSqrt { scale: None };
    }
    run(embedded, labels, loss, Problem::Constrained { radius }, &opts)
}

fn run(
    embedded: &Points,
    labels: &[f64],
    loss: &LossSpec,
    problem: Problem,
    opts: &TrainOptions,
) -> Result<TrainedWeights> {
    let n = embedded.len();
    let r = embedded.dim();
    let (lambda, radius) = match problem {
        Problem::Penalized { lambda, ball } => (lambda, ball),
        Problem::Constrained { radius } => (0.0, Some(radius)),
    };
    let max_norm = embedded.iter().map(norm).fold(0.0, f64::max);
    let step_size = |t: u64| -> f64 {
        let t = t as f64;
        match opts.schedule {
            StepSchedule::Pegasos => 1.0 / (2.0 * lambda * t),
            StepSchedule::InvSqrt { scale } => {
                let c = scale.unwrap_or_else(|| match radius {
                    Some(rad) if max_norm > 0.0 => rad / (loss.lipschitz * max_norm),
                    _ => 1.0,
                });
                c / t.sqrt()
            }
            StepSchedule::Constant { eta } => eta,
        }
    };

    let mut rng = seeded_rng(opts.seed);
    let mut a = vec![0.0; r];
    let mut avg = vec![0.0; r];
    let mut grad = vec![0.0; r];
    let mut trace = Vec::new();
    let mut t: u64 = 0;

    let project = |a: &mut [f64]| {
        if let Some(rad) = radius {
            let nrm = norm(a);
            if nrm > rad {
                let s = if nrm > 0.0 { rad / nrm } else { 0.0 };
                a.iter_mut().for_each(|v| *v *= s);
            }
        }
    };

    for _epoch in 0..opts.epochs {
        let inner = match opts.mode {
            UpdateMode::Stochastic => n,
            UpdateMode::FullBatch => 1,
        };
        for _ in 0..inner {
            t += 1;
            let eta = step_size(t);
            match opts.mode {
                UpdateMode::Stochastic => {
                    let i = rng.random_range(0..n);
                    let x = embedded.row(i);
                    let y = labels[i];
                    let g = loss_subgradient(loss, y, dot(&a, x));
                    let shrink = 1.0 - 2.0 * lambda * eta;
                    let push = -eta * g * y;
                    for (aj, xj) in a.iter_mut().zip(x) {
                        *aj = shrink * *aj + push * xj;
                    }
                }
                UpdateMode::FullBatch => {
                    grad.iter_mut().for_each(|v| *v = 0.0);
                    for (x, &y) in embedded.iter().zip(labels) {
                        let g = loss_subgradient(loss, y, dot(&a, x)) * y / n as f64;
                        if g != 0.0 {
                            for (gj, xj) in grad.iter_mut().zip(x) {
                                *gj += g * xj;
                            }
                        }
                    }
                    for (aj, gj) in a.iter_mut().zip(&grad) {
                        *aj -= eta * (gj + 2.0 * lambda * *aj);
                    }
                }
            }
            project(&mut a);
            if a.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence { step: t });
            }
            if opts.average {
                // weight proportional to t
                let w = 2.0 / (t as f64 + 1.0);
                for (m, v) in avg.iter_mut().zip(&a) {
                    *m += w * (v - *m);
                }
            }
        }
        if opts.track_objective {
            let current = if opts.average { &avg } else { &a };
            trace.push(objective(embedded, labels, loss, lambda, current));
        }
    }

    let weights = if opts.average { avg } else { a };
    let objective = objective(embedded, labels, loss, lambda, &weights);
    Ok(TrainedWeights {
        weights,
        lambda,
        radius: match problem {
            Problem::Constrained { radius } => Some(radius),
            Problem::Penalized { .. } => None,
        },
        loss: *loss,
        epochs: opts.epochs,
        steps: t,
        objective,
        objective_trace: trace,
    })
}

/// Scores `<a, x_i>` of already embedded points, optionally clipped to
/// `[-M, M]`.
pub fn predict_embedded(weights: &TrainedWeights, embedded: &Points, clip: bool) -> Result<Vec<f64>> {
    if embedded.dim() != weights.weights.len() && !embedded.is_empty() {
        return Err(Error::invalid(format!(
            "embedded points have dimension {}, model has {}",
            embedded.dim(),
            weights.weights.len()
        )));
    }
    let m = weights.loss.clip;
    Ok(embedded
        .iter()
        .map(|x| {
            let s = dot(&weights.weights, x);
            if clip {
                s.clamp(-m, m)
            } else {
                s
            }
        })
        .collect())
}

/// `sign(score)` with `sign(0) = +1`.
pub fn classify(scores: &[f64]) -> Vec<f64> {
    scores.iter().map(|&s| if s >= 0.0 { 1.0 } else { -1.0 }).collect()
}

/// Fraction of sign disagreements between predictions and labels.
pub fn classification_error(predictions: &[f64], labels: &[f64]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::invalid("no predictions to score"));
    }
    let wrong = classify(predictions)
        .iter()
        .zip(labels)
        .filter(|(p, y)| (**p > 0.0) != (**y > 0.0))
        .count();
    Ok(wrong as f64 / labels.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_values() {
        let h = LossSpec::hinge();
        assert_eq!(loss_value(&h, 1.0, 1.0), 0.0);
        assert_eq!(loss_value(&h, -1.0, 0.5), 1.5);
        let l = LossSpec::logistic(1.0);
        assert!((loss_value(&l, 1.0, 0.0) - 2f64.ln()).abs() < 1e-15);
        assert!((loss_value(&l, 1.0, 0.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(loss_value(&l, 1.0, 1000.0), 0.0);
        assert!((loss_value(&l, 1.0, -1000.0) - 1000.0).abs() < 1e-9);
        assert_eq!(l.ell0, loss_value(&l, -1.0, 0.0));
    }

    #[test]
    fn subgradients() {
        let h = LossSpec::hinge();
        assert_eq!(loss_subgradient(&h, 1.0, 2.0), 0.0);
        assert_eq!(loss_subgradient(&h, 1.0, 1.0), -1.0);
        assert_eq!(loss_subgradient(&h, -1.0, -1.0), -1.0);
        assert_eq!(score_subgradient(&h, -1.0, 0.0), 1.0);
        let l = LossSpec::logistic(1.0);
        assert!((loss_subgradient(&l, 1.0, 0.0) + 0.5).abs() < 1e-15);
        assert!(loss_subgradient(&l, 1.0, 800.0).abs() < 1e-300);
        assert_eq!(loss_subgradient(&l, 1.0, -800.0), -1.0);
    }

    #[test]
    fn logistic_derivative_matches_finite_difference() {
        let l = LossSpec::logistic(1.0);
        for &y in &[-1.0, 1.0] {
            for &s in &[-3.0, -0.2, 0.0, 0.7, 4.0] {
                let h = 1e-6;
                let fd = (loss_value(&l, y, s + h) - loss_value(&l, y, s - h)) / (2.0 * h);
                assert!((fd - score_subgradient(&l, y, s)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn classification_error_cases() {
        let y = vec![1.0, -1.0, 1.0, 1.0, -1.0, -1.0, 1.0, -1.0, 1.0, 1.0];
        assert_eq!(classification_error(&y, &y).unwrap(), 0.0);
        let flipped: Vec<f64> = y.iter().map(|v| -v).collect();
        assert_eq!(classification_error(&flipped, &y).unwrap(), 1.0);
        let mut three = y.clone();
        for v in three.iter_mut().take(3) {
            *v = -*v;
        }
        assert!((classification_error(&three, &y).unwrap() - 0.3).abs() < 1e-15);
        assert!(classification_error(&[], &[]).is_err());
        assert!(classification_error(&[1.0], &[1.0, 1.0]).is_err());
        // raw scores are thresholded with sign(0) = +1
        assert_eq!(classification_error(&[0.0, -0.1], &[1.0, -1.0]).unwrap(), 0.0);
    }

    #[test]
    fn zero_weights_predict_positive() {
        let w = TrainedWeights {
            weights: vec![0.0; 2],
            lambda: 1.0,
            radius: None,
            loss: LossSpec::hinge(),
            epochs: 1,
            steps: 0,
            objective: 1.0,
            objective_trace: vec![],
        };
        let x = Points::from_rows(&[vec![1.0, 2.0], vec![-3.0, 0.5]]).unwrap();
        let s = predict_embedded(&w, &x, false).unwrap();
        assert_eq!(s, vec![0.0, 0.0]);
        assert_eq!(classify(&s), vec![1.0, 1.0]);
    }

    #[test]
    fn clipping() {
        let mut w = TrainedWeights {
            weights: vec![3.7],
            lambda: 1.0,
            radius: None,
            loss: LossSpec::hinge(),
            epochs: 1,
            steps: 0,
            objective: 0.0,
            objective_trace: vec![],
        };
        let x = Points::from_rows(&[vec![1.0], vec![-1.0]]).unwrap();
        assert_eq!(predict_embedded(&w, &x, true).unwrap(), vec![1.0, -1.0]);
        assert_eq!(predict_embedded(&w, &x, false).unwrap(), vec![3.7, -3.7]);
        w.loss.clip = 2.0;
        assert_eq!(predict_embedded(&w, &x, true).unwrap(), vec![2.0, -2.0]);
    }

    #[test]
    fn invalid_training_inputs() {
        let x = Points::from_rows(&[vec![1.0], vec![-1.0]]).unwrap();
        let y = [1.0, -1.0];
        let h = LossSpec::hinge();
        let o = TrainOptions::default();
        assert!(train_penalized(&x, &y, &h, 0.0, &o).is_err());
        assert!(train_penalized(&x, &y, &h, -1.0, &o).is_err());
        assert!(train_penalized(&x, &[1.0], &h, 1.0, &o).is_err());
        assert!(train_penalized(&x, &[1.0, 0.0], &h, 1.0, &o).is_err());
        let zero_epochs = TrainOptions { epochs: 0, ..o.clone() };
        assert!(train_penalized(&x, &y, &h, 1.0, &zero_epochs).is_err());
        assert!(train_constrained(&x, &y, &h, -1.0, &o).is_err());
        assert!(train_constrained(&x, &y, &h, f64::NAN, &o).is_err());
    }

    #[test]
    fn divergence_is_reported_with_step() {
        let x = Points::from_rows(&[vec![1e200], vec![-1e200]]).unwrap();
        let y = [1.0, -1.0];
        let opts = TrainOptions {
            schedule: StepSchedule::Constant { eta: 1e200 },
            project_ball: false,
            ..TrainOptions::default()
        };
        match train_penalized(&x, &y, &LossSpec::hinge(), 1.0, &opts) {
            Err(Error::Divergence { step }) => assert!(step >= 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn zero_radius_stays_at_origin() {
        let x = Points::from_rows(&[vec![1.0, 0.0], vec![0.0, -2.0], vec![1.0, 1.0]]).unwrap();
        let y = [1.0, -1.0, 1.0];
        let opts = TrainOptions {
            schedule: StepSchedule::InvSqrt { scale: None },
            ..TrainOptions::default()
        };
        let w = train_constrained(&x, &y, &LossSpec::hinge(), 0.0, &opts).unwrap();
        assert!(w.weights.iter().all(|v| *v == 0.0));
        assert_eq!(w.objective, 1.0);
        assert_eq!(w.radius, Some(0.0));
    }
}
