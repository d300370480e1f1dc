//! Temperature scaling: a single scalar `T` dividing the logits, fitted by
//! minimizing the negative log-likelihood on labeled held-out data.

use serde::{Deserialize, Serialize};

use super::CalibrationError;
use crate::domain::ScoreSet;

pub const TEMPERATURE_MIN: f64 = 0.05;
pub const TEMPERATURE_MAX: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemperatureFit {
    pub temperature: f64,
    pub nll: f64,
    /// The optimum sits on an end of the search interval.
    pub at_boundary: bool,
}

/// Mean negative log-likelihood of `softmax(z / T)` at the true labels.
pub fn negative_log_likelihood(scores: &ScoreSet, temperature: f64) -> Result<f64, CalibrationError> {
    let mut total = 0.0;
    for s in scores.samples() {
        let z = s.logits.as_ref().ok_or(CalibrationError::MissingLogits)?;
        let y = s.label.ok_or(CalibrationError::MissingLabels)?;
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = z.iter().map(|v| ((v - max) / temperature).exp()).sum::<f64>().ln();
        total += lse - (z[y - 1] - max) / temperature;
    }
    Ok(total / scores.len() as f64)
}

/// Golden-section search over `[0.05, 20]`.
///
/// The NLL is convex in `1/T`, hence unimodal in `T`, so the bracket shrinks
/// onto the unique minimizer until it is narrower than `tol`.
pub fn fit_temperature(scores: &ScoreSet, tol: f64) -> Result<TemperatureFit, CalibrationError> {
    if scores.is_empty() {
        return Err(CalibrationError::EmptyScoreSet);
    }
    if !scores.has_logits() {
        return Err(CalibrationError::MissingLogits);
    }
    if !scores.is_labeled() {
        return Err(CalibrationError::MissingLabels);
    }
    let tol = tol.max(1e-12);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (TEMPERATURE_MIN, TEMPERATURE_MAX);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = negative_log_likelihood(scores, c)?;
    let mut fd = negative_log_likelihood(scores, d)?;
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = negative_log_likelihood(scores, c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = negative_log_likelihood(scores, d)?;
        }
    }
    let mut temperature = 0.5 * (a + b);
    let mut nll = negative_log_likelihood(scores, temperature)?;
    // The bracket never contains the endpoints themselves; compare with them.
    for edge in [TEMPERATURE_MIN, TEMPERATURE_MAX] {
        let f_edge = negative_log_likelihood(scores, edge)?;
        if f_edge < nll {
            temperature = edge;
            nll = f_edge;
        }
    }
    let at_boundary = temperature - TEMPERATURE_MIN <= tol || TEMPERATURE_MAX - temperature <= tol;
    Ok(TemperatureFit { temperature, nll, at_boundary })
}
