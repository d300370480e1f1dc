//! Set-valued multi-class classification.
//!
//! Turns per-sample class probabilities into label sets under eight
//! optimization formulations (top-k, point-wise error, penalized, average
//! size, average error, two hybrids and F-beta), fits the thresholds those
//! rules depend on, and evaluates error/size trade-offs.
//!
//! - [`domain`]: probability vectors, label sets, score sets, `Top` and
//!   thresholding primitives.
//! - [`formulations`]: the closed-form prediction rules.
//! - [`calibration`]: thresholds, temperature, offset, feasibility.
//! - [`evaluation`]: metrics, per-class violation summaries, sweeps.
//! - [`oracle`]: finite distributions with known conditionals and
//!   brute-force solvers used to verify the rules.
//! - [`io`] and [`cli`]: file formats and the command-line front end.

// `!(x >= 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod cli;
pub mod domain;
pub mod evaluation;
pub mod formulations;
pub mod io;
pub mod oracle;

pub use calibration::{calibrate, CalibratedClassifier, CalibrationError, FitOptions};
pub use domain::{LabelSet, ProbabilityVector, Sample, ScoreSet, TieBreakPolicy};
pub use formulations::{Formulation, FormulationSpec, HybridErrorMode};
