//! File formats: score CSVs, TOML model files, prediction CSVs and JSON.
//!
//! Score files have the header `id,label,p_1,...,p_L` optionally followed by
//! `z_1,...,z_L`. An empty label marks an unlabeled row. Floats are written
//! with Rust's shortest round-trip formatting.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::CalibratedClassifier;
use crate::domain::{DomainError, LabelSet, ProbabilityVector, Sample, ScoreSet, DEFAULT_SUM_TOL};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File { path: String, source: std::io::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("line {line}: {reason}")]
    Parse { line: u64, reason: String },
    #[error("bad header: {0}")]
    Header(String),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("model file: {0}")]
    ModelDecode(#[from] toml::de::Error),
    #[error("model file: {0}")]
    ModelEncode(#[from] toml::ser::Error),
    #[error("unsupported model format version {0}")]
    UnsupportedVersion(u32),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn open(path: &Path) -> Result<fs::File, IoError> {
    fs::File::open(path).map_err(|source| IoError::File { path: path.display().to_string(), source })
}

fn create(path: &Path) -> Result<fs::File, IoError> {
    fs::File::create(path).map_err(|source| IoError::File { path: path.display().to_string(), source })
}

/// Column layout inferred from the header.
struct Layout {
    n_classes: usize,
    has_logits: bool,
}

fn parse_header(header: &csv::StringRecord) -> Result<Layout, IoError> {
    let cols: Vec<&str> = header.iter().collect();
    if cols.len() < 2 || cols[0] != "id" || cols[1] != "label" {
        return Err(IoError::Header("expected leading columns id,label".into()));
    }
    let rest = &cols[2..];
    let n_classes = rest.iter().take_while(|c| c.starts_with("p_")).count();
    for (i, c) in rest[..n_classes].iter().enumerate() {
        if *c != format!("p_{}", i + 1) {
            return Err(IoError::Header(format!("column {c} out of order")));
        }
    }
    let tail = &rest[n_classes..];
    let has_logits = match tail.len() {
        0 => false,
        n if n == n_classes => {
            for (i, c) in tail.iter().enumerate() {
                if *c != format!("z_{}", i + 1) {
                    return Err(IoError::Header(format!("expected z_{}, found {c}", i + 1)));
                }
            }
            true
        }
        _ => return Err(IoError::Header("logit columns must mirror probability columns".into())),
    };
    if n_classes < 2 {
        return Err(IoError::Header(format!("{n_classes} probability columns")));
    }
    Ok(Layout { n_classes, has_logits })
}

fn parse_f64(field: &str, line: u64) -> Result<f64, IoError> {
    field.trim().parse().map_err(|_| IoError::Parse { line, reason: format!("not a number: {field:?}") })
}

/// Reads a score file. Probabilities are validated, never renormalized.
pub fn read_scores_from<R: Read>(reader: R) -> Result<ScoreSet, IoError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let layout = parse_header(rdr.headers()?)?;
    let l = layout.n_classes;
    let mut samples = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let line = record.position().map_or(i as u64 + 2, |p| p.line());
        let expected = 2 + l * (1 + layout.has_logits as usize);
        if record.len() != expected {
            return Err(IoError::Parse { line, reason: format!("{} fields, expected {expected}", record.len()) });
        }
        let id = record[0].to_string();
        let label = match record[1].trim() {
            "" => None,
            s => Some(s.parse::<usize>().map_err(|_| IoError::Parse { line, reason: format!("bad label {s:?}") })?),
        };
        let probs: Vec<f64> = (0..l).map(|j| parse_f64(&record[2 + j], line)).collect::<Result<_, _>>()?;
        let probs = ProbabilityVector::new(probs, DEFAULT_SUM_TOL)
            .map_err(|e| IoError::Parse { line, reason: e.to_string() })?;
        let logits = if layout.has_logits {
            Some((0..l).map(|j| parse_f64(&record[2 + l + j], line)).collect::<Result<Vec<_>, _>>()?)
        } else {
            None
        };
        samples.push(Sample { id, probs, logits, label });
    }
    Ok(ScoreSet::new(l, samples)?)
}

pub fn read_scores(path: &Path) -> Result<ScoreSet, IoError> {
    read_scores_from(open(path)?)
}

pub fn write_scores_to<W: Write>(writer: W, scores: &ScoreSet) -> Result<(), IoError> {
    let l = scores.n_classes();
    let logits = scores.has_logits();
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["id".to_string(), "label".to_string()];
    header.extend((1..=l).map(|j| format!("p_{j}")));
    if logits {
        header.extend((1..=l).map(|j| format!("z_{j}")));
    }
    wtr.write_record(&header)?;
    for s in scores.samples() {
        let mut row = vec![s.id.clone(), s.label.map(|y| y.to_string()).unwrap_or_default()];
        row.extend(s.probs.as_slice().iter().map(f64::to_string));
        if let (true, Some(z)) = (logits, &s.logits) {
            row.extend(z.iter().map(f64::to_string));
        }
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_scores(path: &Path, scores: &ScoreSet) -> Result<(), IoError> {
    write_scores_to(create(path)?, scores)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub classifier: CalibratedClassifier,
}

pub fn model_to_string(classifier: &CalibratedClassifier) -> Result<String, IoError> {
    let file = ModelFile { format_version: MODEL_FORMAT_VERSION, classifier: classifier.clone() };
    Ok(toml::to_string(&file)?)
}

pub fn model_from_str(text: &str) -> Result<CalibratedClassifier, IoError> {
    let file: ModelFile = toml::from_str(text)?;
    if file.format_version != MODEL_FORMAT_VERSION {
        return Err(IoError::UnsupportedVersion(file.format_version));
    }
    file.classifier.validate().map_err(|e| IoError::InvalidModel(e.to_string()))?;
    Ok(file.classifier)
}

pub fn save_model(path: &Path, classifier: &CalibratedClassifier) -> Result<(), IoError> {
    create(path)?.write_all(model_to_string(classifier)?.as_bytes())?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<CalibratedClassifier, IoError> {
    let mut text = String::new();
    open(path)?.read_to_string(&mut text)?;
    model_from_str(&text)
}

/// `id,labels,size` rows in input order.
pub fn write_predictions_to<W: Write>(writer: W, scores: &ScoreSet, sets: &[LabelSet]) -> Result<(), IoError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["id", "labels", "size"])?;
    for (s, set) in scores.samples().iter().zip(sets) {
        wtr.write_record([s.id.as_str(), &set.to_string(), &set.len().to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut f = create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, IoError> {
    Ok(serde_json::from_reader(std::io::BufReader::new(open(path)?))?)
}
