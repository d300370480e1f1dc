//! Error/size metrics, per-class violation summaries, sweep curves and
//! per-class size/error histograms.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::{calibrate, CalibratedClassifier, CalibrationError, FitOptions};
use crate::domain::{LabelSet, ScoreSet};
use crate::formulations::{Formulation, FormulationSpec};

/// Percentiles reported for per-class error distributions.
pub const VIOLATION_PERCENTILES: [u8; 5] = [10, 25, 50, 75, 90];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error("evaluation requires labeled samples")]
    MissingLabels,
    #[error("evaluation set is empty")]
    EmptyTestSet,
    #[error("sweep grid is empty")]
    EmptyGrid,
    #[error("sweep grid must be sorted ascending")]
    UnsortedGrid,
    #[error("histogram needs at least two edges per axis, sorted ascending")]
    EmptyBins,
    #[error("{formulation} parameter must be an integer, got {value}")]
    NonIntegerParameter { formulation: &'static str, value: f64 },
    #[error("repeats must be at least 1")]
    NoRepeats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n_samples: usize,
    pub n_classes: usize,
    pub beta: f64,
    pub avg_error: f64,
    pub avg_size: f64,
    /// Absent when no set was predicted at all.
    pub precision: Option<f64>,
    pub recall: f64,
    pub f_beta: f64,
    pub empty_set_rate: f64,
    /// Keyed by true label; classes absent from the test set are omitted.
    pub per_class_error: BTreeMap<usize, f64>,
    pub per_class_avg_size: BTreeMap<usize, f64>,
    pub per_class_support: BTreeMap<usize, usize>,
}

fn labels_of(test: &ScoreSet) -> Result<Vec<usize>, EvalError> {
    test.samples().iter().map(|s| s.label.ok_or(EvalError::MissingLabels)).collect()
}

/// Metrics of precomputed predictions against true labels.
pub fn metrics_from_predictions(
    predictions: &[LabelSet],
    labels: &[usize],
    n_classes: usize,
    beta: f64,
) -> Result<MetricsReport, EvalError> {
    let n = predictions.len();
    if n == 0 {
        return Err(EvalError::EmptyTestSet);
    }
    let mut misses = 0usize;
    let mut total_size = 0usize;
    let mut empties = 0usize;
    let mut class_misses: BTreeMap<usize, usize> = BTreeMap::new();
    let mut class_size: BTreeMap<usize, usize> = BTreeMap::new();
    let mut support: BTreeMap<usize, usize> = BTreeMap::new();
    for (set, &y) in predictions.iter().zip(labels) {
        let miss = !set.contains(y);
        misses += miss as usize;
        total_size += set.len();
        empties += set.is_empty() as usize;
        *support.entry(y).or_default() += 1;
        *class_misses.entry(y).or_default() += miss as usize;
        *class_size.entry(y).or_default() += set.len();
    }
    let nf = n as f64;
    let avg_error = misses as f64 / nf;
    let avg_size = total_size as f64 / nf;
    let recall = (n - misses) as f64 / nf;
    let precision = (total_size > 0).then(|| (n - misses) as f64 / total_size as f64);
    let b2 = beta * beta;
    let f_beta = (1.0 + b2) * recall / (b2 + avg_size);
    let per_class_error = support.iter().map(|(&y, &c)| (y, class_misses[&y] as f64 / c as f64)).collect();
    let per_class_avg_size = support.iter().map(|(&y, &c)| (y, class_size[&y] as f64 / c as f64)).collect();
    Ok(MetricsReport {
        n_samples: n,
        n_classes,
        beta,
        avg_error,
        avg_size,
        precision,
        recall,
        f_beta,
        empty_set_rate: empties as f64 / nf,
        per_class_error,
        per_class_avg_size,
        per_class_support: support,
    })
}

pub fn evaluate(classifier: &CalibratedClassifier, test: &ScoreSet, beta: f64) -> Result<MetricsReport, EvalError> {
    let labels = labels_of(test)?;
    let predictions = classifier.predict_scores(test)?;
    metrics_from_predictions(&predictions, &labels, test.n_classes(), beta)
}

/// Linear-interpolation quantile of ascending `sorted` values, `q ∈ [0, 1]`.
pub fn quantile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64))
}

/// Class-conditional error rates, used as the observable stand-in for the
/// point-wise error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub eps: f64,
    pub per_class_error: BTreeMap<usize, f64>,
    pub quantiles: BTreeMap<u8, f64>,
    /// Classes whose error rate exceeds `eps`.
    pub violating_classes: Vec<usize>,
}

impl ViolationReport {
    pub fn from_class_errors(per_class_error: BTreeMap<usize, f64>, eps: f64) -> Self {
        let mut rates: Vec<f64> = per_class_error.values().copied().collect();
        rates.sort_by(f64::total_cmp);
        let quantiles = VIOLATION_PERCENTILES
            .iter()
            .filter_map(|&pct| quantile(&rates, pct as f64 / 100.0).map(|v| (pct, v)))
            .collect();
        let violating_classes = per_class_error.iter().filter(|(_, &r)| r > eps).map(|(&y, _)| y).collect();
        Self { eps, per_class_error, quantiles, violating_classes }
    }

    /// Fraction of represented classes that violate the bound.
    pub fn violation_rate(&self) -> f64 {
        if self.per_class_error.is_empty() {
            0.0
        } else {
            self.violating_classes.len() as f64 / self.per_class_error.len() as f64
        }
    }
}

pub fn per_class_violation(
    classifier: &CalibratedClassifier,
    test: &ScoreSet,
    eps: f64,
) -> Result<ViolationReport, EvalError> {
    let report = evaluate(classifier, test, 1.0)?;
    Ok(ViolationReport::from_class_errors(report.per_class_error, eps))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "reason", rename_all = "kebab-case")]
pub enum PointStatus {
    Ok,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub param: f64,
    pub status: PointStatus,
    pub mean_error: f64,
    pub std_error: f64,
    pub mean_size: f64,
    pub std_size: f64,
    pub violation_quantiles: Option<BTreeMap<u8, f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCurve {
    pub formulation: String,
    pub points: Vec<SweepPoint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOptions {
    /// Bootstrap resamples of the calibration set per grid value.
    pub repeats: usize,
    pub seed: u64,
    pub fit: FitOptions,
    /// Record per-class violation quantiles against this bound.
    pub violation_eps: Option<f64>,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self { repeats: 10, seed: 0, fit: FitOptions::default(), violation_eps: None }
    }
}

/// Replaces the swept parameter of `template` by `value`: `k` for top-k,
/// `eps`, `lambda`, `kbar`, `ebar`, `kbar`, `ebar` and `beta` for the others.
pub fn with_parameter(template: &FormulationSpec, value: f64) -> Result<FormulationSpec, EvalError> {
    let mut spec = *template;
    spec.kind = match template.kind {
        Formulation::TopK { .. } => {
            if value.fract() != 0.0 || value < 0.0 {
                return Err(EvalError::NonIntegerParameter { formulation: "top-k", value });
            }
            Formulation::TopK { k: value as usize }
        }
        Formulation::PointwiseError { offset, .. } => Formulation::PointwiseError { eps: value, offset },
        Formulation::Penalized { .. } => Formulation::Penalized { lambda: value },
        Formulation::AverageSize { .. } => Formulation::AverageSize { kbar: value },
        Formulation::AverageError { .. } => Formulation::AverageError { ebar: value },
        Formulation::HybridSize { k, .. } => Formulation::HybridSize { kbar: value, k },
        Formulation::HybridError { eps, mode, .. } => Formulation::HybridError { ebar: value, eps, mode },
        Formulation::FScore { .. } => Formulation::FScore { beta: value },
    };
    Ok(spec)
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Bootstrap indices for repeat `r`; shared by every grid value.
fn bootstrap_indices(n: usize, seed: u64, r: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(r as u64);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Refits and evaluates `template` at each grid value over bootstrap
/// resamples of `calib`. Failed fits mark the point instead of aborting.
pub fn sweep(
    template: &FormulationSpec,
    grid: &[f64],
    calib: &ScoreSet,
    test: &ScoreSet,
    opts: &SweepOptions,
) -> Result<SweepCurve, EvalError> {
    if grid.is_empty() {
        return Err(EvalError::EmptyGrid);
    }
    if grid.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(EvalError::UnsortedGrid);
    }
    if opts.repeats == 0 {
        return Err(EvalError::NoRepeats);
    }
    let labels = labels_of(test)?;
    let resamples: Vec<ScoreSet> =
        (0..opts.repeats).map(|r| calib.subset(&bootstrap_indices(calib.len(), opts.seed, r))).collect();

    let mut points = Vec::with_capacity(grid.len());
    for &param in grid {
        let outcome = (|| -> Result<SweepPoint, EvalError> {
            let spec = with_parameter(template, param)?;
            let mut errors = Vec::new();
            let mut sizes = Vec::new();
            let mut quantiles: Vec<BTreeMap<u8, f64>> = Vec::new();
            for resample in &resamples {
                let classifier = calibrate(&spec, resample, &opts.fit)?;
                let predictions = classifier.predict_scores(test)?;
                let report = metrics_from_predictions(&predictions, &labels, test.n_classes(), 1.0)?;
                errors.push(report.avg_error);
                sizes.push(report.avg_size);
                if let Some(eps) = opts.violation_eps {
                    quantiles.push(ViolationReport::from_class_errors(report.per_class_error, eps).quantiles);
                }
            }
            let (mean_error, std_error) = mean_std(&errors);
            let (mean_size, std_size) = mean_std(&sizes);
            let violation_quantiles = opts.violation_eps.map(|_| {
                VIOLATION_PERCENTILES
                    .iter()
                    .map(|pct| {
                        let vals: Vec<f64> = quantiles.iter().filter_map(|q| q.get(pct).copied()).collect();
                        (*pct, mean_std(&vals).0)
                    })
                    .collect()
            });
            Ok(SweepPoint {
                param,
                status: PointStatus::Ok,
                mean_error,
                std_error,
                mean_size,
                std_size,
                violation_quantiles,
            })
        })();
        points.push(outcome.unwrap_or_else(|e| SweepPoint {
            param,
            status: PointStatus::Failed(e.to_string()),
            mean_error: f64::NAN,
            std_error: f64::NAN,
            mean_size: f64::NAN,
            std_size: f64::NAN,
            violation_quantiles: None,
        }));
    }
    Ok(SweepCurve { formulation: template.kind.name().to_string(), points })
}

/// Counts of classes by (mean set size bucket, error rate bucket).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeErrorHistogram {
    pub size_edges: Vec<f64>,
    pub error_edges: Vec<f64>,
    /// `counts[size_bucket][error_bucket]`.
    pub counts: Vec<Vec<usize>>,
}

impl SizeErrorHistogram {
    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    /// Class counts per size bucket, summed over error buckets.
    pub fn size_marginal(&self) -> Vec<usize> {
        self.counts.iter().map(|row| row.iter().sum()).collect()
    }
}

/// Bucket `i` covers `[edges[i], edges[i+1])`; the last bucket is closed and
/// values outside the edges are clamped into the end buckets.
fn bucket(edges: &[f64], v: f64) -> usize {
    let n_buckets = edges.len() - 1;
    edges[1..n_buckets].partition_point(|&e| e <= v)
}

pub fn size_error_histogram(
    classifier: &CalibratedClassifier,
    test: &ScoreSet,
    size_edges: &[f64],
    error_edges: &[f64],
) -> Result<SizeErrorHistogram, EvalError> {
    let sorted = |e: &[f64]| e.len() >= 2 && e.windows(2).all(|w| w[0] < w[1]);
    if !sorted(size_edges) || !sorted(error_edges) {
        return Err(EvalError::EmptyBins);
    }
    let report = evaluate(classifier, test, 1.0)?;
    let mut counts = vec![vec![0usize; error_edges.len() - 1]; size_edges.len() - 1];
    for (y, err) in &report.per_class_error {
        let size = report.per_class_avg_size[y];
        counts[bucket(size_edges, size)][bucket(error_edges, *err)] += 1;
    }
    Ok(SizeErrorHistogram { size_edges: size_edges.to_vec(), error_edges: error_edges.to_vec(), counts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{ProbabilityVector, Sample, DEFAULT_SUM_TOL};

    fn labeled(rows: &[(&[f64], usize)]) -> ScoreSet {
        let samples = rows
            .iter()
            .enumerate()
            .map(|(i, (p, y))| Sample {
                id: format!("s{i}"),
                probs: ProbabilityVector::new(p.to_vec(), DEFAULT_SUM_TOL).unwrap(),
                logits: None,
                label: Some(*y),
            })
            .collect();
        ScoreSet::new(rows[0].0.len(), samples).unwrap()
    }

    fn fixed(kind: Formulation, n: usize) -> CalibratedClassifier {
        CalibratedClassifier::unfitted(kind.into(), n).unwrap()
    }

    fn argmax_set() -> ScoreSet {
        labeled(&[(&[0.7, 0.2, 0.1], 1), (&[0.1, 0.8, 0.1], 2), (&[0.2, 0.2, 0.6], 3), (&[0.5, 0.3, 0.2], 1)])
    }

    #[test]
    fn top1_on_argmax_labels() {
        let r = evaluate(&fixed(Formulation::TopK { k: 1 }, 3), &argmax_set(), 1.0).unwrap();
        assert_eq!((r.avg_error, r.avg_size, r.precision, r.recall), (0.0, 1.0, Some(1.0), 1.0));
        assert_eq!(r.f_beta, 1.0);
        assert_eq!(r.per_class_error.len(), 3);
    }

    #[test]
    fn full_and_empty_sets() {
        let full = evaluate(&fixed(Formulation::Penalized { lambda: 0.0 }, 3), &argmax_set(), 1.0).unwrap();
        assert_eq!((full.avg_error, full.avg_size), (0.0, 3.0));
        assert!((full.precision.unwrap() - 1.0 / 3.0).abs() < 1e-15);
        let empty = evaluate(&fixed(Formulation::Penalized { lambda: 1.5 }, 3), &argmax_set(), 1.0).unwrap();
        assert_eq!((empty.avg_error, empty.avg_size, empty.precision), (1.0, 0.0, None));
        assert_eq!(empty.empty_set_rate, 1.0);
        assert_eq!(empty.f_beta, 0.0);
    }

    #[test]
    fn f_beta_harmonic_form() {
        // Recall 3/4 and average size 5/4 at beta = 2.
        let set = labeled(&[(&[0.6, 0.4], 1), (&[0.6, 0.4], 1), (&[0.45, 0.55], 1), (&[0.6, 0.4], 2)]);
        let r = evaluate(&fixed(Formulation::Penalized { lambda: 0.42 }, 2), &set, 2.0).unwrap();
        assert_eq!((r.recall, r.avg_size), (0.75, 1.25));
        let prec = r.precision.unwrap();
        let harmonic = 1.0 / ((1.0 / 5.0) / prec + (4.0 / 5.0) / r.recall);
        assert!((r.f_beta - harmonic).abs() < 1e-15);
        assert_eq!(r.recall + r.avg_error, 1.0);
    }

    #[test]
    fn missing_labels_rejected() {
        let mut set = argmax_set().samples().to_vec();
        set[0].label = None;
        let set = ScoreSet::new(3, set).unwrap();
        assert_eq!(evaluate(&fixed(Formulation::TopK { k: 1 }, 3), &set, 1.0), Err(EvalError::MissingLabels));
    }

    #[test]
    fn quantiles_interpolate() {
        let v = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.5), Some(2.0));
        assert_eq!(quantile(&v, 0.1), Some(0.4));
        assert_eq!(quantile(&v, 0.9), Some(3.6));
        assert_eq!(quantile(&[], 0.5), None);
    }

    #[test]
    fn violation_support_rule() {
        // Class 3 never appears as a label.
        let set = labeled(&[(&[0.7, 0.2, 0.1], 1), (&[0.1, 0.8, 0.1], 2), (&[0.6, 0.3, 0.1], 2)]);
        let v = per_class_violation(&fixed(Formulation::TopK { k: 1 }, 3), &set, 0.1).unwrap();
        assert_eq!(v.per_class_error.keys().copied().collect::<Vec<_>>(), vec![1, 2]);
        assert_eq!(v.per_class_error[&2], 0.5);
        assert_eq!(v.violating_classes, vec![2]);
        assert_eq!(v.violation_rate(), 0.5);
        let perfect = per_class_violation(&fixed(Formulation::TopK { k: 3 }, 3), &set, 0.1).unwrap();
        assert!(perfect.quantiles.values().all(|&q| q == 0.0));
        assert_eq!(perfect.quantiles.len(), 5);
    }

    #[test]
    fn sweep_contracts() {
        let set = argmax_set();
        let template = Formulation::TopK { k: 1 }.into();
        assert_eq!(sweep(&template, &[], &set, &set, &SweepOptions::default()), Err(EvalError::EmptyGrid));
        assert_eq!(sweep(&template, &[2.0, 1.0], &set, &set, &SweepOptions::default()), Err(EvalError::UnsortedGrid));
        let one = SweepOptions { repeats: 1, ..SweepOptions::default() };
        let curve = sweep(&template, &[2.0], &set, &set, &one).unwrap();
        assert_eq!(curve.points.len(), 1);
        assert_eq!((curve.points[0].std_error, curve.points[0].std_size), (0.0, 0.0));
        let curve = sweep(&template, &[1.5], &set, &set, &one).unwrap();
        assert!(matches!(curve.points[0].status, PointStatus::Failed(_)));
        let avg = Formulation::AverageSize { kbar: 1.0 }.into();
        let curve = sweep(&avg, &[0.01, 1.0], &set, &set, &one).unwrap();
        assert!(matches!(curve.points[0].status, PointStatus::Failed(_)));
        assert_eq!(curve.points[1].status, PointStatus::Ok);
    }

    #[test]
    fn histogram_contracts() {
        let set = argmax_set();
        let top2 = fixed(Formulation::TopK { k: 2 }, 3);
        let h = size_error_histogram(&top2, &set, &[0.0, 1.5, 2.5, 3.5], &[0.0, 0.5, 1.0]).unwrap();
        assert_eq!(h.size_marginal(), vec![0, 3, 0]);
        assert_eq!(h.total(), 3);
        let full = fixed(Formulation::Penalized { lambda: 0.0 }, 3);
        let h = size_error_histogram(&full, &set, &[0.0, 1.5, 2.5, 3.5], &[0.0, 0.5, 1.0]).unwrap();
        assert_eq!(h.counts, vec![vec![0, 0], vec![0, 0], vec![3, 0]]);
        assert_eq!(size_error_histogram(&full, &set, &[0.0], &[0.0, 1.0]), Err(EvalError::EmptyBins));
        assert_eq!(size_error_histogram(&full, &set, &[1.0, 0.0], &[0.0, 1.0]), Err(EvalError::EmptyBins));
    }
}
