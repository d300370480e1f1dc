//! Fitting of every distribution-dependent quantity.
//!
//! Thresholds come from weighted step functions over probability scores:
//!
//! | function | knots per sample | weight | threshold |
//! |----------|------------------|--------|-----------|
//! | `Ĝ`   | all `L` scores | `1/N` | `Ĝ⁻¹(k̄)` |
//! | `Ĥ`   | true-class score | `1/n'` | largest `t` with `Ĥ(t) ≥ 1 - ε̄` |
//! | `Ĝ_k` | top-`k` scores | `1/N` | `Ĝ_k⁻¹(k̄)` |
//! | `Ĥ_ε` | top-`k_ε(x)` scores `s` | `s/N` | largest `t` with `Ĥ_ε(t) ≥ 1 - ε̄` |
//!
//! The F-score threshold is the root of `θ ↦ β²θ - Σ_ℓ E(p_ℓ - θ)_+`.

pub mod step;
pub mod temperature;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{DomainError, LabelSet, ProbabilityVector, ScoreSet, TieBreakPolicy};
use crate::formulations::{
    pointwise_set_size, predict_fscore, predict_hybrid_error, predict_hybrid_size, predict_penalized,
    predict_pointwise_error, predict_top_k, predict_with_threshold, Formulation, FormulationError, FormulationSpec,
};
pub use step::{EmpiricalStepFunction, StepError};
pub use temperature::{fit_temperature, negative_log_likelihood, TemperatureFit, TEMPERATURE_MAX, TEMPERATURE_MIN};

use step::NeumaierSum;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CalibrationError {
    #[error(transparent)]
    Formulation(#[from] FormulationError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Step(StepError),
    #[error("calibration set is empty")]
    EmptyScoreSet,
    #[error("calibration requires labeled samples")]
    MissingLabels,
    #[error("calibration requires logits on every sample")]
    MissingLogits,
    #[error("kbar = {kbar} must lie in (0, {n_classes}]")]
    KbarOutOfRange { kbar: f64, n_classes: usize },
    #[error("ebar = {0} must lie in (0, 1)")]
    EbarOutOfRange(f64),
    #[error("parameters out of order: {0}")]
    ParameterOrderViolation(String),
    #[error("average size {u} is below the mass at the largest score; threshold saturates at {value}")]
    Saturated { u: f64, value: f64 },
    #[error("coverage 1 - ebar = {required} is unreachable: the point-wise rule covers at most {attainable}")]
    InfeasiblePair { required: f64, attainable: f64 },
    #[error("F-score root finding did not converge in {0} iterations")]
    NonConvergence(usize),
    #[error("invalid sample count n = {n} or class count L = {n_classes}")]
    InvalidCounts { n: usize, n_classes: usize },
    #[error("classifier expects {expected} classes, scores have {got}")]
    ClassCountMismatch { expected: usize, got: usize },
}

impl From<StepError> for CalibrationError {
    fn from(e: StepError) -> Self {
        match e {
            StepError::Saturated { u, value } => CalibrationError::Saturated { u, value },
            other => CalibrationError::Step(other),
        }
    }
}

/// Where a fitted classifier came from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub calibration_set_size: usize,
    pub seed: Option<u64>,
    /// Free-form run label; never filled from the clock so that model files
    /// stay reproducible.
    pub fitted_at: Option<String>,
    #[serde(default)]
    pub temperature_at_boundary: bool,
}

/// A formulation plus everything fitted for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibratedClassifier {
    pub n_classes: usize,
    pub spec: FormulationSpec,
    pub theta: Option<f64>,
    pub temperature: f64,
    pub offset: f64,
    pub provenance: Provenance,
}

impl CalibratedClassifier {
    /// Classifier for a formulation that needs no fitted threshold.
    pub fn unfitted(spec: FormulationSpec, n_classes: usize) -> Result<Self, CalibrationError> {
        spec.kind.validate(n_classes)?;
        if spec.kind.needs_threshold() {
            return Err(CalibrationError::EmptyScoreSet);
        }
        let offset = match spec.kind {
            Formulation::PointwiseError { offset, .. } => offset,
            _ => 0.0,
        };
        Ok(Self { n_classes, spec, theta: None, temperature: 1.0, offset, provenance: Provenance::default() })
    }

    /// Checks internal consistency, e.g. after deserialization.
    pub fn validate(&self) -> Result<(), CalibrationError> {
        self.spec.kind.validate(self.n_classes)?;
        if self.spec.kind.needs_threshold() != self.theta.is_some() {
            return Err(CalibrationError::ParameterOrderViolation(format!(
                "{} classifier {} a threshold",
                self.spec.kind.name(),
                if self.theta.is_some() { "must not carry" } else { "requires" }
            )));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(DomainError::InvalidTemperature(self.temperature).into());
        }
        if let Formulation::PointwiseError { eps, .. } = self.spec.kind {
            if !(self.offset >= 0.0 && self.offset <= eps) {
                return Err(FormulationError::InvalidOffset { offset: self.offset, eps }.into());
            }
        }
        Ok(())
    }

    /// Predicts from a probability vector that is already on this
    /// classifier's temperature scale.
    pub fn predict(&self, p: &ProbabilityVector) -> Result<LabelSet, CalibrationError> {
        if p.n_classes() != self.n_classes {
            return Err(CalibrationError::ClassCountMismatch { expected: self.n_classes, got: p.n_classes() });
        }
        let theta = self.theta.unwrap_or(0.0);
        let set = match self.spec.kind {
            Formulation::TopK { k } => predict_top_k(p, k)?,
            Formulation::PointwiseError { eps, .. } => predict_pointwise_error(p, eps, self.offset)?,
            Formulation::Penalized { lambda } => predict_penalized(p, lambda)?,
            Formulation::AverageSize { .. } | Formulation::AverageError { .. } => predict_with_threshold(p, theta),
            Formulation::HybridSize { k, .. } => predict_hybrid_size(p, theta, k)?,
            Formulation::HybridError { eps, mode, .. } => predict_hybrid_error(p, theta, eps, mode)?,
            Formulation::FScore { .. } => predict_fscore(p, theta),
        };
        Ok(set)
    }

    /// Applies the fitted temperature, then predicts every sample. Output
    /// order equals input order regardless of the rayon pool size.
    pub fn predict_scores(&self, scores: &ScoreSet) -> Result<Vec<LabelSet>, CalibrationError> {
        if scores.n_classes() != self.n_classes {
            return Err(CalibrationError::ClassCountMismatch { expected: self.n_classes, got: scores.n_classes() });
        }
        let scaled = scores.rescaled(self.temperature)?;
        scaled.samples().par_iter().map(|s| self.predict(&s.probs)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TemperatureMode {
    Fixed(f64),
    Fit { tol: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OffsetMode {
    /// Use the value carried by the formulation.
    FromSpec,
    Fixed(f64),
    /// `sqrt(L / n)` with `n` the training-set size (the calibration set size
    /// when unknown).
    Auto { n_train: Option<usize> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub temperature: TemperatureMode,
    pub offset: OffsetMode,
    pub fscore_tol: f64,
    pub seed: Option<u64>,
    pub fitted_at: Option<String>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            temperature: TemperatureMode::Fixed(1.0),
            offset: OffsetMode::FromSpec,
            fscore_tol: 1e-12,
            seed: None,
            fitted_at: None,
        }
    }
}

/// Fits `spec` on `calib` and returns a ready-to-use classifier.
pub fn calibrate(
    spec: &FormulationSpec,
    calib: &ScoreSet,
    opts: &FitOptions,
) -> Result<CalibratedClassifier, CalibrationError> {
    let n_classes = calib.n_classes();
    spec.kind.validate(n_classes)?;

    let mut provenance = Provenance {
        calibration_set_size: calib.len(),
        seed: opts.seed,
        fitted_at: opts.fitted_at.clone(),
        temperature_at_boundary: false,
    };
    let temperature = match opts.temperature {
        TemperatureMode::Fixed(t) => {
            if !(t.is_finite() && t > 0.0) {
                return Err(DomainError::InvalidTemperature(t).into());
            }
            t
        }
        TemperatureMode::Fit { tol } => {
            let fit = fit_temperature(calib, tol)?;
            provenance.temperature_at_boundary = fit.at_boundary;
            fit.temperature
        }
    };
    let scaled = calib.rescaled(temperature)?;

    let mut spec = *spec;
    let mut offset = 0.0;
    if let Formulation::PointwiseError { eps, offset: requested } = &mut spec.kind {
        offset = match opts.offset {
            OffsetMode::FromSpec => *requested,
            OffsetMode::Fixed(v) => v,
            OffsetMode::Auto { n_train } => pointwise_offset(n_train.unwrap_or(calib.len()), n_classes)?,
        };
        if !(offset >= 0.0 && offset <= *eps) {
            return Err(FormulationError::InvalidOffset { offset, eps: *eps }.into());
        }
        *requested = offset;
    }

    let theta = match spec.kind {
        Formulation::TopK { .. } | Formulation::PointwiseError { .. } | Formulation::Penalized { .. } => None,
        Formulation::AverageSize { kbar } => Some(average_size_threshold(&scaled, kbar)?),
        Formulation::AverageError { ebar } => Some(average_error_threshold(&scaled, ebar)?),
        Formulation::HybridSize { kbar, k } => Some(hybrid_size_threshold(&scaled, kbar, k)?),
        Formulation::HybridError { ebar, eps, .. } => Some(hybrid_error_threshold(&scaled, ebar, eps)?),
        Formulation::FScore { beta } => Some(fscore_threshold(&scaled, beta, opts.fscore_tol)?),
    };

    Ok(CalibratedClassifier { n_classes, spec, theta, temperature, offset, provenance })
}

fn fit_with_defaults(kind: Formulation, scores: &ScoreSet) -> Result<CalibratedClassifier, CalibrationError> {
    calibrate(&FormulationSpec { kind, tie: TieBreakPolicy::default() }, scores, &FitOptions::default())
}

/// Average size control: thresholds at `Ĝ⁻¹(k̄)`. Labels are ignored.
pub fn fit_average_size(scores: &ScoreSet, kbar: f64) -> Result<CalibratedClassifier, CalibrationError> {
    fit_with_defaults(Formulation::AverageSize { kbar }, scores)
}

/// Average error control: thresholds at the `⌈n'(1 - ε̄)⌉`-th largest
/// true-class score.
pub fn fit_average_error(scores: &ScoreSet, ebar: f64) -> Result<CalibratedClassifier, CalibrationError> {
    fit_with_defaults(Formulation::AverageError { ebar }, scores)
}

pub fn fit_hybrid_size(scores: &ScoreSet, kbar: f64, k: usize) -> Result<CalibratedClassifier, CalibrationError> {
    fit_with_defaults(Formulation::HybridSize { kbar, k }, scores)
}

/// Hybrid error control with the default combine mode.
pub fn fit_hybrid_error(scores: &ScoreSet, ebar: f64, eps: f64) -> Result<CalibratedClassifier, CalibrationError> {
    fit_with_defaults(Formulation::HybridError { ebar, eps, mode: Default::default() }, scores)
}

pub fn fit_fscore(scores: &ScoreSet, beta: f64, tol: f64) -> Result<CalibratedClassifier, CalibrationError> {
    let opts = FitOptions { fscore_tol: tol, ..FitOptions::default() };
    calibrate(&Formulation::FScore { beta }.into(), scores, &opts)
}

fn uniform_weights(scores: &ScoreSet) -> Result<Vec<(&ProbabilityVector, f64)>, CalibrationError> {
    if scores.is_empty() {
        return Err(CalibrationError::EmptyScoreSet);
    }
    let w = 1.0 / scores.len() as f64;
    Ok(scores.samples().iter().map(|s| (&s.probs, w)).collect())
}

/// `Ĝ(t) = Σ_i w_i Σ_ℓ 1{p_ℓ(x_i) ≥ t}`.
pub fn size_function(points: &[(&ProbabilityVector, f64)]) -> Result<EmpiricalStepFunction, StepError> {
    let knots = points
        .iter()
        .flat_map(|(p, w)| p.as_slice().iter().map(move |&s| (s, *w)))
        .collect();
    EmpiricalStepFunction::from_knots(knots)
}

/// `Ĝ_k(t) = Σ_i w_i Σ_{ℓ ≤ k} 1{p_(ℓ)(x_i) ≥ t}`.
pub fn hybrid_size_function(
    points: &[(&ProbabilityVector, f64)],
    k: usize,
) -> Result<EmpiricalStepFunction, StepError> {
    let knots = points
        .iter()
        .flat_map(|(p, w)| p.sorted_descending().into_iter().take(k).map(move |s| (s, *w)))
        .collect();
    EmpiricalStepFunction::from_knots(knots)
}

/// `Ĥ_ε(t) = Σ_i w_i Σ_{ℓ ≤ k_ε(x_i)} p_(ℓ)(x_i) 1{p_(ℓ)(x_i) ≥ t}`.
pub fn hybrid_error_function(
    points: &[(&ProbabilityVector, f64)],
    eps: f64,
) -> Result<EmpiricalStepFunction, CalibrationError> {
    let mut knots = Vec::new();
    for (p, w) in points {
        let k = pointwise_set_size(p, eps, 0.0)?;
        knots.extend(p.sorted_descending().into_iter().take(k).map(|s| (s, s * w)));
    }
    Ok(EmpiricalStepFunction::from_knots(knots)?)
}

/// `Ĥ(t) = (1/n') Σ_i 1{p_{y_i}(x_i) ≥ t}`.
pub fn error_function(scores: &ScoreSet) -> Result<EmpiricalStepFunction, CalibrationError> {
    if scores.is_empty() {
        return Err(CalibrationError::EmptyScoreSet);
    }
    let w = 1.0 / scores.len() as f64;
    let knots = scores
        .samples()
        .iter()
        .map(|s| s.label.map(|y| (s.probs.prob(y), w)).ok_or(CalibrationError::MissingLabels))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EmpiricalStepFunction::from_knots(knots)?)
}

pub fn average_size_threshold(scores: &ScoreSet, kbar: f64) -> Result<f64, CalibrationError> {
    let n_classes = scores.n_classes();
    if !(kbar > 0.0 && kbar <= n_classes as f64) {
        return Err(CalibrationError::KbarOutOfRange { kbar, n_classes });
    }
    let g = size_function(&uniform_weights(scores)?)?;
    Ok(g.generalized_inverse(kbar)?)
}

pub fn average_error_threshold(scores: &ScoreSet, ebar: f64) -> Result<f64, CalibrationError> {
    if !(ebar > 0.0 && ebar < 1.0) {
        return Err(CalibrationError::EbarOutOfRange(ebar));
    }
    if !scores.is_labeled() {
        return Err(CalibrationError::MissingLabels);
    }
    let h = error_function(scores)?;
    Ok(h.upper_level(1.0 - ebar)?)
}

pub fn hybrid_size_threshold(scores: &ScoreSet, kbar: f64, k: usize) -> Result<f64, CalibrationError> {
    let n_classes = scores.n_classes();
    if k == 0 || k > n_classes {
        return Err(DomainError::KOutOfRange { k, n_classes }.into());
    }
    if !(kbar > 0.0) {
        return Err(CalibrationError::KbarOutOfRange { kbar, n_classes });
    }
    if kbar >= k as f64 {
        return Err(CalibrationError::ParameterOrderViolation(format!("need kbar < k, got kbar = {kbar}, k = {k}")));
    }
    let g = hybrid_size_function(&uniform_weights(scores)?, k)?;
    Ok(g.generalized_inverse(kbar)?)
}

pub fn hybrid_error_threshold(scores: &ScoreSet, ebar: f64, eps: f64) -> Result<f64, CalibrationError> {
    if !(ebar >= 0.0 && ebar < eps && eps <= 1.0) {
        return Err(CalibrationError::ParameterOrderViolation(format!(
            "need 0 <= ebar < eps <= 1, got ebar = {ebar}, eps = {eps}"
        )));
    }
    let h = hybrid_error_function(&uniform_weights(scores)?, eps)?;
    let required = 1.0 - ebar;
    h.upper_level(required).map_err(|e| match e {
        StepError::Unreachable { total, .. } => CalibrationError::InfeasiblePair { required, attainable: total },
        other => other.into(),
    })
}

pub fn fscore_threshold(scores: &ScoreSet, beta: f64, tol: f64) -> Result<f64, CalibrationError> {
    fscore_root(&uniform_weights(scores)?, beta, tol)
}

/// `φ(θ) = β²θ - Σ_i w_i Σ_ℓ (p_ℓ(x_i) - θ)_+`.
pub fn fscore_objective(points: &[(&ProbabilityVector, f64)], beta: f64, theta: f64) -> f64 {
    let mut acc = NeumaierSum::default();
    for (p, w) in points {
        let excess: f64 = p.as_slice().iter().map(|&v| (v - theta).max(0.0)).sum();
        acc.add(w * excess);
    }
    beta * beta * theta - acc.value()
}

pub const FSCORE_MAX_ITERS: usize = 200;

/// Bisection on `[0, 1]`; `φ` is strictly increasing with `φ(0) = -Σw` and
/// `φ(1) = β²`, so the root is unique.
pub fn fscore_root(points: &[(&ProbabilityVector, f64)], beta: f64, tol: f64) -> Result<f64, CalibrationError> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(FormulationError::InvalidParameters { kind: "f-score", reason: format!("beta = {beta}") }.into());
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..FSCORE_MAX_ITERS {
        let mid = 0.5 * (lo + hi);
        let phi = fscore_objective(points, beta, mid);
        if phi.abs() <= tol {
            return Ok(mid);
        }
        if mid == lo || mid == hi {
            break;
        }
        if phi < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(CalibrationError::NonConvergence(FSCORE_MAX_ITERS))
}

/// Offset `r_{n,L} = sqrt(L / n)`, capped at 1. A heuristic, not a
/// finite-sample guarantee.
pub fn pointwise_offset(n: usize, n_classes: usize) -> Result<f64, CalibrationError> {
    if n == 0 || n_classes < 2 {
        return Err(CalibrationError::InvalidCounts { n, n_classes });
    }
    Ok((n_classes as f64 / n as f64).sqrt().min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Feasibility {
    /// Fraction of samples whose label is outside the top-`k` set.
    pub eps_k: f64,
    pub feasible: bool,
}

/// Whether "average error ≤ ε̄ with point-wise size ≤ k" can be satisfied:
/// it cannot when ε̄ is below the top-`k` error.
pub fn feasibility_check(scores: &ScoreSet, k: usize, ebar: f64) -> Result<Feasibility, CalibrationError> {
    let n_classes = scores.n_classes();
    if k == 0 || k > n_classes {
        return Err(DomainError::KOutOfRange { k, n_classes }.into());
    }
    if scores.is_empty() {
        return Err(CalibrationError::EmptyScoreSet);
    }
    let mut misses = 0usize;
    for s in scores.samples() {
        let y = s.label.ok_or(CalibrationError::MissingLabels)?;
        if !predict_top_k(&s.probs, k)?.contains(y) {
            misses += 1;
        }
    }
    let eps_k = misses as f64 / scores.len() as f64;
    Ok(Feasibility { eps_k, feasible: ebar >= eps_k })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Sample, DEFAULT_SUM_TOL};
    use crate::formulations::HybridErrorMode;

    fn pv(raw: &[f64]) -> ProbabilityVector {
        ProbabilityVector::new(raw.to_vec(), DEFAULT_SUM_TOL).unwrap()
    }

    fn scores(rows: &[(&[f64], Option<usize>)]) -> ScoreSet {
        let n = rows[0].0.len();
        let samples = rows
            .iter()
            .enumerate()
            .map(|(i, (p, y))| Sample { id: format!("s{i}"), probs: pv(p), logits: None, label: *y })
            .collect();
        ScoreSet::new(n, samples).unwrap()
    }

    /// Scores whose true-class probability is the given value (two classes).
    fn true_class_scores(values: &[f64]) -> ScoreSet {
        let rows: Vec<Vec<f64>> = values.iter().map(|&v| vec![v, 1.0 - v]).collect();
        let refs: Vec<(&[f64], Option<usize>)> = rows.iter().map(|r| (r.as_slice(), Some(1))).collect();
        scores(&refs)
    }

    #[test]
    fn average_size_examples() {
        let one = scores(&[(&[0.5, 0.3, 0.2], None)]);
        assert_eq!(fit_average_size(&one, 2.0).unwrap().theta, Some(0.3));
        let two = scores(&[(&[0.6, 0.4], None), (&[0.8, 0.2], None)]);
        assert_eq!(fit_average_size(&two, 1.0).unwrap().theta, Some(0.6));
        assert_eq!(fit_average_size(&one, 3.0).unwrap().theta, Some(0.0));
        assert!(matches!(fit_average_size(&one, 0.5), Err(CalibrationError::Saturated { .. })));
        assert!(fit_average_size(&one, 0.0).is_err());
        let empty = ScoreSet::new(3, vec![]).unwrap();
        assert_eq!(average_size_threshold(&empty, 1.0), Err(CalibrationError::EmptyScoreSet));
    }

    #[test]
    fn average_error_examples() {
        assert_eq!(fit_average_error(&true_class_scores(&[0.9, 0.7, 0.5, 0.1]), 0.25).unwrap().theta, Some(0.5));
        assert_eq!(fit_average_error(&true_class_scores(&[1.0, 1.0, 1.0]), 0.1).unwrap().theta, Some(1.0));
        assert_eq!(fit_average_error(&true_class_scores(&[0.9, 0.7]), 0.6).unwrap().theta, Some(0.9));
        let unlabeled = scores(&[(&[0.5, 0.5], None)]);
        assert_eq!(fit_average_error(&unlabeled, 0.1), Err(CalibrationError::MissingLabels));
    }

    #[test]
    fn hybrid_size_examples() {
        let one = scores(&[(&[0.5, 0.3, 0.2], None)]);
        assert_eq!(fit_hybrid_size(&one, 1.0, 2).unwrap().theta, Some(0.5));
        assert_eq!(fit_hybrid_size(&one, 1.5, 2).unwrap().theta, Some(0.5));
        assert_eq!(fit_hybrid_size(&one, 1.999, 2).unwrap().theta, Some(0.5));
        assert!(matches!(
            hybrid_size_threshold(&one, 2.0, 2),
            Err(CalibrationError::ParameterOrderViolation(_))
        ));
    }

    #[test]
    fn hybrid_error_examples() {
        let one = scores(&[(&[0.6, 0.4], None)]);
        assert_eq!(fit_hybrid_error(&one, 0.45, 0.5).unwrap().theta, Some(0.6));
        assert_eq!(fit_hybrid_error(&one, 0.5 - 1e-9, 0.5).unwrap().theta, Some(0.6));
        assert!(matches!(fit_hybrid_error(&one, 0.3, 0.5), Err(CalibrationError::InfeasiblePair { .. })));
        assert!(matches!(
            hybrid_error_threshold(&one, 0.5, 0.5),
            Err(CalibrationError::ParameterOrderViolation(_))
        ));
        let h = hybrid_error_function(&[(&pv(&[0.6, 0.4]), 1.0)], 0.5).unwrap();
        assert_eq!(h.knots().collect::<Vec<_>>(), vec![(0.6, 0.6)]);
    }

    #[test]
    fn hybrid_error_mode_is_kept() {
        let one = scores(&[(&[0.6, 0.4], None)]);
        let spec = Formulation::HybridError { ebar: 0.45, eps: 0.5, mode: HybridErrorMode::UnionWithPointwise };
        let c = calibrate(&spec.into(), &one, &FitOptions::default()).unwrap();
        assert_eq!(c.spec.kind, spec);
    }

    #[test]
    fn fscore_examples() {
        // φ(θ) = 2θ - 1 on (1, 0): root 1/2.
        let a = fit_fscore(&scores(&[(&[1.0, 0.0], None)]), 1.0, 1e-12).unwrap().theta.unwrap();
        assert!((a - 0.5).abs() < 1e-12);
        // φ(θ) = 3θ - 1 on (0.5, 0.5): root 1/3.
        let b = fit_fscore(&scores(&[(&[0.5, 0.5], None)]), 1.0, 1e-12).unwrap().theta.unwrap();
        assert!((b - 1.0 / 3.0).abs() < 1e-12);
        let pts = [(&pv(&[0.7, 0.2, 0.1]), 0.5), (&pv(&[0.3, 0.3, 0.4]), 0.5)];
        assert!((fscore_objective(&pts, 2.0, 0.0) + 1.0).abs() < 1e-15);
        assert!((fscore_objective(&pts, 2.0, 1.0) - 4.0).abs() < 1e-15);
    }

    #[test]
    fn offset_examples() {
        assert!((pointwise_offset(1000, 10).unwrap() - 0.1).abs() < 1e-15);
        assert_eq!(pointwise_offset(10, 10).unwrap(), 1.0);
        assert_eq!(pointwise_offset(3, 10).unwrap(), 1.0);
        assert!(pointwise_offset(4, 1).is_err());
        assert!(pointwise_offset(0, 3).is_err());
    }

    #[test]
    fn feasibility_examples() {
        let perfect = scores(&[(&[0.6, 0.3, 0.1], Some(1)), (&[0.2, 0.7, 0.1], Some(2))]);
        let f = feasibility_check(&perfect, 1, 0.0).unwrap();
        assert_eq!(f, Feasibility { eps_k: 0.0, feasible: true });
        let mixed = scores(&[(&[0.6, 0.3, 0.1], Some(1)), (&[0.6, 0.3, 0.1], Some(3))]);
        let f = feasibility_check(&mixed, 2, 0.1).unwrap();
        assert_eq!(f, Feasibility { eps_k: 0.5, feasible: false });
        assert!(feasibility_check(&mixed, 2, 0.5).unwrap().feasible);
        let unlabeled = scores(&[(&[0.6, 0.3, 0.1], None)]);
        assert_eq!(feasibility_check(&unlabeled, 1, 0.1), Err(CalibrationError::MissingLabels));
    }

    #[test]
    fn auto_offset_and_validation() {
        let set = scores(&[(&[0.6, 0.3, 0.1], Some(1))]);
        let spec = Formulation::PointwiseError { eps: 0.2, offset: 0.0 }.into();
        let opts = FitOptions { offset: OffsetMode::Auto { n_train: Some(300) }, ..FitOptions::default() };
        let c = calibrate(&spec, &set, &opts).unwrap();
        assert!((c.offset - 0.1).abs() < 1e-15);
        assert_eq!(c.spec.kind, Formulation::PointwiseError { eps: 0.2, offset: c.offset });
        let opts = FitOptions { offset: OffsetMode::Auto { n_train: Some(3) }, ..FitOptions::default() };
        assert!(matches!(calibrate(&spec, &set, &opts), Err(CalibrationError::Formulation(_))));
    }

    #[test]
    fn unfitted_classifier_rules() {
        assert!(CalibratedClassifier::unfitted(Formulation::TopK { k: 2 }.into(), 3).is_ok());
        assert!(CalibratedClassifier::unfitted(Formulation::AverageSize { kbar: 1.0 }.into(), 3).is_err());
        let mut c = CalibratedClassifier::unfitted(Formulation::TopK { k: 2 }.into(), 3).unwrap();
        c.theta = Some(0.3);
        assert!(c.validate().is_err());
    }

    #[test]
    fn hybrid_size_with_k_equal_l_is_average_size() {
        let set = scores(&[(&[0.5, 0.3, 0.2], None), (&[0.1, 0.6, 0.3], None), (&[0.25, 0.35, 0.4], None)]);
        for kbar in [0.4, 1.0, 1.3, 2.0, 2.7] {
            assert_eq!(
                hybrid_size_threshold(&set, kbar, 3).map_err(|e| e.to_string()),
                average_size_threshold(&set, kbar).map_err(|e| e.to_string())
            );
        }
    }
}
