//! Weighted right-tail step functions `f(t) = Σ { w_i : s_i ≥ t }`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Slack used when comparing a step-function level against a target.
pub const LEVEL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StepError {
    #[error("level u must be non-negative, got {0}")]
    NegativeU(f64),
    #[error("level {u} is below the value at the largest knot; saturated at {value}")]
    Saturated { u: f64, value: f64 },
    #[error("level {u} exceeds the total mass {total}")]
    Unreachable { u: f64, total: f64 },
    #[error("knot has invalid score {score} or weight {weight}")]
    InvalidKnot { score: f64, weight: f64 },
}

/// Non-increasing, left-continuous step function built from `(score, weight)`
/// knots. Knots with equal scores are merged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalStepFunction {
    /// Distinct scores, strictly decreasing.
    scores: Vec<f64>,
    /// `cumulative[i] = f(scores[i])`, non-decreasing in `i`.
    cumulative: Vec<f64>,
}

impl EmpiricalStepFunction {
    pub fn from_knots(mut knots: Vec<(f64, f64)>) -> Result<Self, StepError> {
        if let Some(&(score, weight)) = knots
            .iter()
            .find(|(s, w)| !s.is_finite() || !w.is_finite() || *w < 0.0)
        {
            return Err(StepError::InvalidKnot { score, weight });
        }
        knots.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut scores = Vec::new();
        let mut cumulative = Vec::new();
        let mut acc = NeumaierSum::default();
        for (i, &(score, weight)) in knots.iter().enumerate() {
            acc.add(weight);
            let last_of_run = knots.get(i + 1).is_none_or(|next| next.0 != score);
            if last_of_run {
                scores.push(score);
                cumulative.push(acc.value());
            }
        }
        Ok(Self { scores, cumulative })
    }

    /// `f(t)`.
    pub fn value(&self, t: f64) -> f64 {
        let n_at_or_above = self.scores.partition_point(|&s| s >= t);
        match n_at_or_above {
            0 => 0.0,
            n => self.cumulative[n - 1],
        }
    }

    /// `f(-∞)`, the total weight.
    pub fn total(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    /// Distinct knot scores, largest first, with the function value at each.
    pub fn knots(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.scores.iter().copied().zip(self.cumulative.iter().copied())
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Generalized inverse `inf{t : f(t) ≤ u}` restricted to knot scores.
    ///
    /// Returns 0 when `f(0) ≤ u`; otherwise the smallest knot score `s` with
    /// `f(s) ≤ u`. When even the largest knot leaves `f` above `u` the result
    /// is [`StepError::Saturated`] carrying the largest knot score.
    pub fn generalized_inverse(&self, u: f64) -> Result<f64, StepError> {
        if !(u >= 0.0) {
            return Err(StepError::NegativeU(u));
        }
        let slack = LEVEL_TOL * u.max(1.0);
        if self.value(0.0) <= u + slack {
            return Ok(0.0);
        }
        let n_within = self.cumulative.partition_point(|&c| c <= u + slack);
        match n_within {
            0 => Err(StepError::Saturated { u, value: self.scores[0] }),
            n => Ok(self.scores[n - 1]),
        }
    }

    /// Largest knot score `s` with `f(s) ≥ u`: the highest threshold that
    /// still retains mass `u`.
    pub fn upper_level(&self, u: f64) -> Result<f64, StepError> {
        if !(u >= 0.0) {
            return Err(StepError::NegativeU(u));
        }
        let slack = LEVEL_TOL * u.max(1.0);
        let idx = self.cumulative.partition_point(|&c| c < u - slack);
        match self.scores.get(idx) {
            Some(&s) => Ok(s),
            None => Err(StepError::Unreachable { u, total: self.total() }),
        }
    }
}

/// Compensated summation; the result does not depend on thread count since
/// it is only ever fed in a fixed order.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.comp
    }
}
