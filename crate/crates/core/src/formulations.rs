//! Closed-form optimal set-valued classifiers.
//!
//! Every rule maps one probability vector (plus fitted parameters such as a
//! threshold) to a [`LabelSet`]. Fitting those parameters lives in
//! [`crate::calibration`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{threshold_set, top_indices, DomainError, LabelSet, ProbabilityVector, TieBreakPolicy};

/// Slack applied when comparing cumulative probability mass against a
/// coverage target, so that e.g. `0.5 + 0.3 ≥ 0.8` holds in floating point.
pub const COVERAGE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FormulationError {
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("epsilon must lie in [0, 1], got {0}")]
    InvalidEpsilon(f64),
    #[error("offset must lie in [0, eps = {eps}], got {offset}")]
    InvalidOffset { offset: f64, eps: f64 },
    #[error("lambda must be non-negative, got {0}")]
    NegativeLambda(f64),
    #[error("invalid parameters for {kind}: {reason}")]
    InvalidParameters { kind: &'static str, reason: String },
}

/// How the hybrid error rule combines its threshold with point-wise control.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HybridErrorMode {
    /// `{ℓ : p_ℓ ≥ θ}` exactly.
    #[default]
    LemmaThreshold,
    /// `{ℓ : p_ℓ ≥ θ} ∪ Γ_ε(x)`, which always meets the point-wise bound.
    UnionWithPointwise,
}

/// Which optimization problem a classifier solves, with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Formulation {
    /// Minimize error subject to `|Γ(x)| ≤ k` everywhere.
    TopK { k: usize },
    /// Minimize average size subject to point-wise error `≤ eps`, with the
    /// cumulative target raised by `offset`.
    PointwiseError { eps: f64, offset: f64 },
    /// Minimize `error + λ · size`.
    Penalized { lambda: f64 },
    /// Minimize error subject to average size `≤ kbar`.
    AverageSize { kbar: f64 },
    /// Minimize average size subject to average error `≤ ebar`.
    AverageError { ebar: f64 },
    /// Average size `≤ kbar` and point-wise size `≤ k`.
    HybridSize { kbar: f64, k: usize },
    /// Average error `≤ ebar` and point-wise error `≤ eps`.
    HybridError { ebar: f64, eps: f64, mode: HybridErrorMode },
    /// Maximize the set-valued F-beta score.
    FScore { beta: f64 },
}

impl Formulation {
    pub fn name(&self) -> &'static str {
        match self {
            Formulation::TopK { .. } => "top-k",
            Formulation::PointwiseError { .. } => "pointwise-error",
            Formulation::Penalized { .. } => "penalized",
            Formulation::AverageSize { .. } => "average-size",
            Formulation::AverageError { .. } => "average-error",
            Formulation::HybridSize { .. } => "hybrid-size",
            Formulation::HybridError { .. } => "hybrid-error",
            Formulation::FScore { .. } => "f-score",
        }
    }

    /// Whether the rule thresholds at a distribution-dependent value.
    pub fn needs_threshold(&self) -> bool {
        matches!(
            self,
            Formulation::AverageSize { .. }
                | Formulation::AverageError { .. }
                | Formulation::HybridSize { .. }
                | Formulation::HybridError { .. }
                | Formulation::FScore { .. }
        )
    }

    pub fn needs_labels(&self) -> bool {
        matches!(self, Formulation::AverageError { .. })
    }

    /// Checks the parameter domain against a class count.
    pub fn validate(&self, n_classes: usize) -> Result<(), FormulationError> {
        let bad = |reason: String| FormulationError::InvalidParameters { kind: self.name(), reason };
        match *self {
            Formulation::TopK { k } => {
                if k > n_classes {
                    return Err(DomainError::KOutOfRange { k, n_classes }.into());
                }
            }
            Formulation::PointwiseError { eps, offset } => check_eps_offset(eps, offset)?,
            Formulation::Penalized { lambda } => {
                if !(lambda >= 0.0) {
                    return Err(FormulationError::NegativeLambda(lambda));
                }
            }
            Formulation::AverageSize { kbar } => {
                if !(kbar > 0.0 && kbar <= n_classes as f64) {
                    return Err(bad(format!("kbar = {kbar} must lie in (0, {n_classes}]")));
                }
            }
            Formulation::AverageError { ebar } => {
                if !(ebar > 0.0 && ebar < 1.0) {
                    return Err(bad(format!("ebar = {ebar} must lie in (0, 1)")));
                }
            }
            Formulation::HybridSize { kbar, k } => {
                if k == 0 || k > n_classes {
                    return Err(DomainError::KOutOfRange { k, n_classes }.into());
                }
                if !(kbar > 0.0 && kbar < k as f64) {
                    return Err(bad(format!("need 0 < kbar < k, got kbar = {kbar}, k = {k}")));
                }
            }
            Formulation::HybridError { ebar, eps, .. } => {
                if !(ebar >= 0.0 && ebar < eps && eps <= 1.0) {
                    return Err(bad(format!("need 0 <= ebar < eps <= 1, got ebar = {ebar}, eps = {eps}")));
                }
            }
            Formulation::FScore { beta } => {
                if !(beta > 0.0 && beta.is_finite()) {
                    return Err(bad(format!("beta = {beta} must be positive")));
                }
            }
        }
        Ok(())
    }
}

/// A formulation together with the tie-breaking policy used by `Top`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FormulationSpec {
    #[serde(flatten)]
    pub kind: Formulation,
    #[serde(default)]
    pub tie: TieBreakPolicy,
}

impl FormulationSpec {
    pub fn new(kind: Formulation) -> Self {
        Self { kind, tie: TieBreakPolicy::default() }
    }
}

impl From<Formulation> for FormulationSpec {
    fn from(kind: Formulation) -> Self {
        Self::new(kind)
    }
}

fn check_eps_offset(eps: f64, offset: f64) -> Result<(), FormulationError> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(FormulationError::InvalidEpsilon(eps));
    }
    if !(offset >= 0.0 && offset <= eps) {
        return Err(FormulationError::InvalidOffset { offset, eps });
    }
    Ok(())
}

pub fn predict_top_k(p: &ProbabilityVector, k: usize) -> Result<LabelSet, FormulationError> {
    Ok(top_indices(p, k, TieBreakPolicy::AscendingLabelIndex)?)
}

/// Smallest `k` whose top-`k` mass reaches `1 - eps + offset`.
///
/// Returns `L` when the target exceeds the total mass, and `0` only when the
/// target is non-positive.
pub fn pointwise_set_size(p: &ProbabilityVector, eps: f64, offset: f64) -> Result<usize, FormulationError> {
    check_eps_offset(eps, offset)?;
    let target = 1.0 - eps + offset;
    if target <= 0.0 {
        return Ok(0);
    }
    let mut cumulative = 0.0;
    for (i, v) in p.sorted_descending().into_iter().enumerate() {
        cumulative += v;
        if cumulative >= target - COVERAGE_TOL {
            return Ok(i + 1);
        }
    }
    Ok(p.n_classes())
}

pub fn predict_pointwise_error(p: &ProbabilityVector, eps: f64, offset: f64) -> Result<LabelSet, FormulationError> {
    let k = pointwise_set_size(p, eps, offset)?;
    predict_top_k(p, k)
}

pub fn predict_penalized(p: &ProbabilityVector, lambda: f64) -> Result<LabelSet, FormulationError> {
    if !(lambda >= 0.0) {
        return Err(FormulationError::NegativeLambda(lambda));
    }
    Ok(threshold_set(p, lambda))
}

/// Thresholding at a calibrated value (average size, average error).
pub fn predict_with_threshold(p: &ProbabilityVector, theta: f64) -> LabelSet {
    threshold_set(p, theta)
}

pub fn predict_hybrid_size(p: &ProbabilityVector, theta: f64, k: usize) -> Result<LabelSet, FormulationError> {
    let n_classes = p.n_classes();
    if k == 0 || k > n_classes {
        return Err(DomainError::KOutOfRange { k, n_classes }.into());
    }
    Ok(threshold_set(p, theta).intersection(&predict_top_k(p, k)?))
}

pub fn predict_hybrid_error(
    p: &ProbabilityVector,
    theta: f64,
    eps: f64,
    mode: HybridErrorMode,
) -> Result<LabelSet, FormulationError> {
    let thresholded = threshold_set(p, theta);
    match mode {
        HybridErrorMode::LemmaThreshold => Ok(thresholded),
        HybridErrorMode::UnionWithPointwise => Ok(thresholded.union(&predict_pointwise_error(p, eps, 0.0)?)),
    }
}

pub fn predict_fscore(p: &ProbabilityVector, theta_star: f64) -> LabelSet {
    threshold_set(p, theta_star)
}
