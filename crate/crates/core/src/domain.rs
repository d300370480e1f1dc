//! Domain types shared by every formulation.
//!
//! Labels are 1-based on every public surface: a problem with `L` classes
//! has labels `1..=L`. Internally probability vectors are plain `Vec<f64>`
//! indexed from zero.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default absolute tolerance on `Σ p_ℓ = 1`.
pub const DEFAULT_SUM_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("probability vector is empty")]
    Empty,
    #[error("probability vector needs at least 2 classes, got {0}")]
    TooFewClasses(usize),
    #[error("entry {index} is negative ({value})")]
    NegativeEntry { index: usize, value: f64 },
    #[error("entry {index} is not finite")]
    NonFinite { index: usize },
    #[error("probabilities sum to {0}, outside tolerance")]
    SumOutOfTolerance(f64),
    #[error("k = {k} is outside [0, {n_classes}]")]
    KOutOfRange { k: usize, n_classes: usize },
    #[error("label {label} is outside [1, {n_classes}]")]
    LabelOutOfRange { label: usize, n_classes: usize },
    #[error("sample {id} has {got} classes, expected {expected}")]
    ClassCountMismatch { id: String, got: usize, expected: usize },
    #[error("sample {id}: probabilities do not match softmax(logits / {temperature})")]
    LogitMismatch { id: String, temperature: f64 },
    #[error("temperature must be positive and finite, got {0}")]
    InvalidTemperature(f64),
}

/// Conditional class probabilities `p(x)` of a single sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ProbabilityVector(Vec<f64>);

impl ProbabilityVector {
    /// Validates `raw` without renormalizing it.
    pub fn new(raw: Vec<f64>, tol: f64) -> Result<Self, DomainError> {
        if raw.is_empty() {
            return Err(DomainError::Empty);
        }
        if raw.len() < 2 {
            return Err(DomainError::TooFewClasses(raw.len()));
        }
        for (index, &value) in raw.iter().enumerate() {
            if !value.is_finite() {
                return Err(DomainError::NonFinite { index });
            }
            if value < 0.0 {
                return Err(DomainError::NegativeEntry { index, value });
            }
        }
        let sum: f64 = raw.iter().sum();
        if (sum - 1.0).abs() > tol {
            return Err(DomainError::SumOutOfTolerance(sum));
        }
        Ok(Self(raw))
    }

    /// Number of classes `L`.
    pub fn n_classes(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Probability of a 1-based label.
    pub fn prob(&self, label: usize) -> f64 {
        self.0[label - 1]
    }

    /// Zero-based class indices, most probable first; equal probabilities
    /// keep ascending index order.
    pub fn descending_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.0.len()).collect();
        order.sort_by(|&a, &b| descending(self.0[a], self.0[b]).then(a.cmp(&b)));
        order
    }

    /// Probabilities sorted in decreasing order, `p_(1) ≥ … ≥ p_(L)`.
    pub fn sorted_descending(&self) -> Vec<f64> {
        self.descending_order().into_iter().map(|i| self.0[i]).collect()
    }

    /// Total probability mass carried by `set`.
    pub fn mass(&self, set: &LabelSet) -> f64 {
        set.iter().map(|l| self.prob(l)).sum()
    }
}

impl<'de> Deserialize<'de> for ProbabilityVector {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let raw = Vec::<f64>::deserialize(de)?;
        ProbabilityVector::new(raw, DEFAULT_SUM_TOL).map_err(serde::de::Error::custom)
    }
}

fn descending(a: f64, b: f64) -> Ordering {
    b.partial_cmp(&a).unwrap_or(Ordering::Equal)
}

pub fn validate_probability_vector(raw: &[f64], tol: f64) -> Result<ProbabilityVector, DomainError> {
    ProbabilityVector::new(raw.to_vec(), tol)
}

/// A predicted subset of `[L]`, stored as sorted distinct 1-based labels.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabelSet {
    labels: Vec<usize>,
    n_classes: usize,
}

impl LabelSet {
    pub fn empty(n_classes: usize) -> Self {
        Self { labels: Vec::new(), n_classes }
    }

    pub fn full(n_classes: usize) -> Self {
        Self { labels: (1..=n_classes).collect(), n_classes }
    }

    /// Builds a set from arbitrary 1-based labels; duplicates are dropped.
    pub fn from_labels(
        labels: impl IntoIterator<Item = usize>,
        n_classes: usize,
    ) -> Result<Self, DomainError> {
        let mut labels: Vec<usize> = labels.into_iter().collect();
        if let Some(&label) = labels.iter().find(|&&l| l == 0 || l > n_classes) {
            return Err(DomainError::LabelOutOfRange { label, n_classes });
        }
        labels.sort_unstable();
        labels.dedup();
        Ok(Self { labels, n_classes })
    }

    /// Set whose bit `ℓ - 1` of `mask` marks label `ℓ`.
    pub fn from_mask(mask: u64, n_classes: usize) -> Self {
        let labels = (1..=n_classes).filter(|l| mask & (1 << (l - 1)) != 0).collect();
        Self { labels, n_classes }
    }

    pub fn to_mask(&self) -> u64 {
        self.labels.iter().fold(0, |m, l| m | 1 << (l - 1))
    }

    fn from_sorted(labels: Vec<usize>, n_classes: usize) -> Self {
        Self { labels, n_classes }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn contains(&self, label: usize) -> bool {
        self.labels.binary_search(&label).is_ok()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.labels.iter().copied()
    }

    pub fn is_subset(&self, other: &LabelSet) -> bool {
        self.labels.iter().all(|&l| other.contains(l))
    }

    pub fn intersection(&self, other: &LabelSet) -> LabelSet {
        let labels = self.iter().filter(|&l| other.contains(l)).collect();
        Self::from_sorted(labels, self.n_classes)
    }

    pub fn union(&self, other: &LabelSet) -> LabelSet {
        let mut labels: Vec<usize> = self.iter().chain(other.iter()).collect();
        labels.sort_unstable();
        labels.dedup();
        Self::from_sorted(labels, self.n_classes)
    }
}

impl fmt::Display for LabelSet {
    /// Semicolon-joined ascending labels; the empty set renders as "".
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, l) in self.labels.iter().enumerate() {
            if i > 0 {
                f.write_str(";")?;
            }
            write!(f, "{l}")?;
        }
        Ok(())
    }
}

/// How equal probabilities are ordered. Only one mode exists; it is kept as
/// an explicit value so that serialized models record it.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TieBreakPolicy {
    #[default]
    AscendingLabelIndex,
}

/// `Top_p(x, k)`: the `k` most probable labels.
pub fn top_indices(p: &ProbabilityVector, k: usize, _tie: TieBreakPolicy) -> Result<LabelSet, DomainError> {
    let n_classes = p.n_classes();
    if k > n_classes {
        return Err(DomainError::KOutOfRange { k, n_classes });
    }
    let mut labels: Vec<usize> = p.descending_order().into_iter().take(k).map(|i| i + 1).collect();
    labels.sort_unstable();
    Ok(LabelSet::from_sorted(labels, n_classes))
}

/// `{ℓ : p_ℓ ≥ θ}` with a non-strict comparison.
pub fn threshold_set(p: &ProbabilityVector, theta: f64) -> LabelSet {
    let labels = p
        .as_slice()
        .iter()
        .enumerate()
        .filter(|(_, &v)| v >= theta)
        .map(|(i, _)| i + 1)
        .collect();
    LabelSet::from_sorted(labels, p.n_classes())
}

/// Numerically stable softmax of `logits / temperature`.
pub fn softmax(logits: &[f64], temperature: f64) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| ((z - max) / temperature).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// One scored sample; `label` is 1-based when present.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub probs: ProbabilityVector,
    pub logits: Option<Vec<f64>>,
    pub label: Option<usize>,
}

/// A collection of scored samples sharing one class count.
///
/// `temperature` records the scaling used to derive `probs` from `logits`
/// (1 when the scores are uncalibrated).
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet {
    n_classes: usize,
    samples: Vec<Sample>,
    temperature: f64,
}

impl ScoreSet {
    pub fn new(n_classes: usize, samples: Vec<Sample>) -> Result<Self, DomainError> {
        Self::with_temperature(n_classes, samples, 1.0)
    }

    pub fn with_temperature(
        n_classes: usize,
        samples: Vec<Sample>,
        temperature: f64,
    ) -> Result<Self, DomainError> {
        if n_classes < 2 {
            return Err(DomainError::TooFewClasses(n_classes));
        }
        if !(temperature.is_finite() && temperature > 0.0) {
            return Err(DomainError::InvalidTemperature(temperature));
        }
        for s in &samples {
            if s.probs.n_classes() != n_classes {
                return Err(DomainError::ClassCountMismatch {
                    id: s.id.clone(),
                    got: s.probs.n_classes(),
                    expected: n_classes,
                });
            }
            if let Some(label) = s.label {
                if label == 0 || label > n_classes {
                    return Err(DomainError::LabelOutOfRange { label, n_classes });
                }
            }
            if let Some(z) = &s.logits {
                if z.len() != n_classes {
                    return Err(DomainError::ClassCountMismatch {
                        id: s.id.clone(),
                        got: z.len(),
                        expected: n_classes,
                    });
                }
                let expected = softmax(z, temperature);
                let consistent = expected
                    .iter()
                    .zip(s.probs.as_slice())
                    .all(|(a, b)| (a - b).abs() <= DEFAULT_SUM_TOL);
                if !consistent {
                    return Err(DomainError::LogitMismatch { id: s.id.clone(), temperature });
                }
            }
        }
        Ok(Self { n_classes, samples, temperature })
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn is_labeled(&self) -> bool {
        self.samples.iter().all(|s| s.label.is_some())
    }

    pub fn has_logits(&self) -> bool {
        self.samples.iter().all(|s| s.logits.is_some())
    }

    /// Recomputes every probability vector as `softmax(z / temperature)`.
    ///
    /// Samples without logits use `ln p · T_current` as their logits, which
    /// agrees with the true logits up to a per-sample additive constant.
    pub fn rescaled(&self, temperature: f64) -> Result<ScoreSet, DomainError> {
        if !(temperature.is_finite() && temperature > 0.0) {
            return Err(DomainError::InvalidTemperature(temperature));
        }
        if temperature == self.temperature {
            return Ok(self.clone());
        }
        let samples = self
            .samples
            .iter()
            .map(|s| {
                let probs = match &s.logits {
                    Some(z) => softmax(z, temperature),
                    None => {
                        let z: Vec<f64> = s.probs.as_slice().iter().map(|p| p.ln() * self.temperature).collect();
                        softmax(&z, temperature)
                    }
                };
                Sample {
                    id: s.id.clone(),
                    probs: ProbabilityVector(probs),
                    logits: s.logits.clone(),
                    label: s.label,
                }
            })
            .collect();
        Ok(ScoreSet { n_classes: self.n_classes, samples, temperature })
    }

    /// A new set made of the samples at `indices` (repetitions allowed).
    pub fn subset(&self, indices: &[usize]) -> ScoreSet {
        ScoreSet {
            n_classes: self.n_classes,
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            temperature: self.temperature,
        }
    }
}
