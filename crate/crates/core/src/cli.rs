//! Command-line front end.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::calibration::{calibrate, FitOptions, OffsetMode, TemperatureMode};
use crate::evaluation::{evaluate, sweep, PointStatus, SweepOptions, ViolationReport, MetricsReport};
use crate::formulations::{Formulation, FormulationSpec, HybridErrorMode};
use crate::io;
use crate::oracle::synth::{random_distinct_distribution, sample_from, generate_distribution, Template};
use crate::oracle::{equivalence_suite, DiscreteDistribution, EquivalenceCheck};

/// Exit status when a gated constraint or an oracle check fails.
pub const EXIT_CHECK_FAILED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "setvalued", version, about = "Set-valued classification: calibrate, predict, evaluate")]
pub struct Cli {
    /// Worker threads for prediction (default: all cores). Output does not
    /// depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a formulation on a calibration score file and write a model file.
    Calibrate(CalibrateArgs),
    /// Predict label sets for a score file.
    Predict(PredictArgs),
    /// Compute metrics of a model on a labeled score file.
    Evaluate(EvaluateArgs),
    /// Refit over a parameter grid with bootstrap repeats.
    Sweep(SweepArgs),
    /// Generate synthetic score files with a known distribution.
    Synth(SynthArgs),
    /// Compare closed-form rules against brute force on finite distributions.
    OracleCheck(OracleCheckArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormulationKind {
    TopK,
    PointwiseError,
    Penalized,
    AverageSize,
    AverageError,
    HybridSize,
    HybridError,
    FScore,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum HybridModeArg {
    LemmaThreshold,
    UnionWithPointwise,
}

#[derive(Debug, Clone, Args)]
pub struct FormulationArgs {
    #[arg(long, value_enum)]
    pub formulation: FormulationKind,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub ebar: Option<f64>,
    #[arg(long)]
    pub kbar: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long, value_enum, default_value = "lemma-threshold")]
    pub hybrid_mode: HybridModeArg,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    /// Point-wise error offset: `auto` for sqrt(L/n) or a value.
    #[arg(long)]
    pub offset: Option<String>,
    /// Training-set size used by `--offset auto` (defaults to the
    /// calibration-set size).
    #[arg(long)]
    pub train_size: Option<usize>,
    /// `fit` to fit on the calibration logits, or a fixed value.
    #[arg(long, default_value = "1")]
    pub temperature: String,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Free-form label stored in the model provenance.
    #[arg(long)]
    pub stamp: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub formulation: FormulationArgs,
    #[command(flatten)]
    pub fit: FitArgs,
}

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub scores: PathBuf,
    /// Defaults to standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub scores: PathBuf,
    /// Metrics JSON; defaults to standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// CSV with one row per class.
    #[arg(long)]
    pub per_class: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    /// Report classes whose error rate exceeds this bound.
    #[arg(long)]
    pub violation_eps: Option<f64>,
    /// Fail when the average error exceeds this value plus `--slack`.
    #[arg(long)]
    pub max_avg_error: Option<f64>,
    /// Fail when the average size exceeds this value plus `--slack`.
    #[arg(long)]
    pub max_avg_size: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    pub slack: f64,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub calib: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[command(flatten)]
    pub formulation: FormulationArgs,
    #[command(flatten)]
    pub fit: FitArgs,
    /// Comma-separated, non-decreasing values of the swept parameter.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub grid: Vec<f64>,
    #[arg(long, default_value_t = 10)]
    pub repeats: usize,
    #[arg(long)]
    pub violation_eps: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value = "two-regime")]
    pub template: Template,
    #[arg(long)]
    pub classes: usize,
    #[arg(long)]
    pub samples: usize,
    #[arg(long, default_value_t = 200)]
    pub support: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Logit perturbation; 0 writes the true conditional probabilities.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// Percentages for train, calibration and test.
    #[arg(long, value_delimiter = ',', default_value = "60,20,20")]
    pub split: Vec<u32>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct OracleCheckArgs {
    /// Truth file written by `synth`, or a bare distribution.
    #[arg(long, conflicts_with = "random")]
    pub truth: Option<PathBuf>,
    /// Check this many random distributions instead.
    #[arg(long)]
    pub random: Option<usize>,
    #[arg(long, default_value_t = 4)]
    pub classes: usize,
    #[arg(long, default_value_t = 3)]
    pub support: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON report.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Embedded truth of a synthetic data set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruthFixture {
    pub template: Template,
    pub seed: u64,
    pub noise: f64,
    pub distribution: DiscreteDistribution,
    /// Sample id to support point id.
    pub samples: BTreeMap<String, String>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum TruthInput {
    Fixture(Box<TruthFixture>),
    Bare(DiscreteDistribution),
}

fn need<T>(v: Option<T>, flag: &str, kind: &str) -> Result<T> {
    v.with_context(|| format!("--{flag} is required for --formulation {kind}"))
}

impl FormulationArgs {
    pub fn spec(&self) -> Result<FormulationSpec> {
        use FormulationKind as K;
        let kind = match self.formulation {
            K::TopK => Formulation::TopK { k: need(self.k, "k", "top-k")? },
            K::PointwiseError => Formulation::PointwiseError { eps: need(self.eps, "eps", "pointwise-error")?, offset: 0.0 },
            K::Penalized => Formulation::Penalized { lambda: need(self.lambda, "lambda", "penalized")? },
            K::AverageSize => Formulation::AverageSize { kbar: need(self.kbar, "kbar", "average-size")? },
            K::AverageError => Formulation::AverageError { ebar: need(self.ebar, "ebar", "average-error")? },
            K::HybridSize => Formulation::HybridSize {
                kbar: need(self.kbar, "kbar", "hybrid-size")?,
                k: need(self.k, "k", "hybrid-size")?,
            },
            K::HybridError => Formulation::HybridError {
                ebar: need(self.ebar, "ebar", "hybrid-error")?,
                eps: need(self.eps, "eps", "hybrid-error")?,
                mode: match self.hybrid_mode {
                    HybridModeArg::LemmaThreshold => HybridErrorMode::LemmaThreshold,
                    HybridModeArg::UnionWithPointwise => HybridErrorMode::UnionWithPointwise,
                },
            },
            K::FScore => Formulation::FScore { beta: need(self.beta, "beta", "f-score")? },
        };
        Ok(kind.into())
    }
}

impl FitArgs {
    pub fn options(&self) -> Result<FitOptions> {
        let temperature = match self.temperature.as_str() {
            "fit" => TemperatureMode::Fit { tol: 1e-9 },
            v => TemperatureMode::Fixed(v.parse().with_context(|| format!("--temperature: {v:?} is neither `fit` nor a number"))?),
        };
        let offset = match self.offset.as_deref() {
            None => OffsetMode::FromSpec,
            Some("auto") => OffsetMode::Auto { n_train: self.train_size },
            Some(v) => OffsetMode::Fixed(v.parse().with_context(|| format!("--offset: {v:?} is neither `auto` nor a number"))?),
        };
        Ok(FitOptions { temperature, offset, seed: self.seed, fitted_at: self.stamp.clone(), ..FitOptions::default() })
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit status. Errors are printed to standard error.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

pub fn run(cli: Cli) -> Result<i32> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().context("building thread pool")?;
    pool.install(|| match cli.command {
        Command::Calibrate(a) => cmd_calibrate(&a),
        Command::Predict(a) => cmd_predict(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::Synth(a) => cmd_synth(&a),
        Command::OracleCheck(a) => cmd_oracle_check(&a),
    })
}

fn read_scores(path: &Path) -> Result<crate::ScoreSet> {
    io::read_scores(path).with_context(|| format!("reading scores from {}", path.display()))
}

fn cmd_calibrate(a: &CalibrateArgs) -> Result<i32> {
    let spec = a.formulation.spec()?;
    let opts = a.fit.options()?;
    let calib = read_scores(&a.scores)?;
    spec.kind.validate(calib.n_classes())?;
    let model = calibrate(&spec, &calib, &opts)?;
    io::save_model(&a.out, &model)?;

    println!("formulation: {}", spec.kind.name());
    match model.theta {
        Some(theta) => println!("theta: {theta}"),
        None => println!("theta: none"),
    }
    println!("temperature: {}", model.temperature);
    if let Formulation::PointwiseError { .. } = spec.kind {
        println!("offset: {}", model.offset);
    }
    if model.provenance.temperature_at_boundary {
        println!("warning: fitted temperature is at the edge of the search interval");
    }
    let sets = model.predict_scores(&calib)?;
    let n = sets.len() as f64;
    println!("calibration avg size: {}", sets.iter().map(|s| s.len() as f64).sum::<f64>() / n);
    if calib.is_labeled() {
        let missed = sets.iter().zip(calib.samples()).filter(|(s, x)| !s.contains(x.label.unwrap_or(0))).count();
        println!("calibration avg error: {}", missed as f64 / n);
    }
    Ok(0)
}

fn cmd_predict(a: &PredictArgs) -> Result<i32> {
    let model = io::load_model(&a.model)?;
    let scores = read_scores(&a.scores)?;
    let sets = model.predict_scores(&scores)?;
    match &a.out {
        Some(path) => io::write_predictions_to(fs::File::create(path)?, &scores, &sets)?,
        None => io::write_predictions_to(std::io::stdout().lock(), &scores, &sets)?,
    }
    Ok(0)
}

#[derive(Serialize)]
struct EvaluateOutput {
    #[serde(flatten)]
    metrics: MetricsReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    violation: Option<ViolationReport>,
}

fn cmd_evaluate(a: &EvaluateArgs) -> Result<i32> {
    let model = io::load_model(&a.model)?;
    let test = read_scores(&a.scores)?;
    let metrics = evaluate(&model, &test, a.beta)?;
    let violation = a.violation_eps.map(|eps| ViolationReport::from_class_errors(metrics.per_class_error.clone(), eps));

    if let Some(path) = &a.per_class {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["class", "support", "error", "avg_size"])?;
        for (y, support) in &metrics.per_class_support {
            w.write_record([
                y.to_string(),
                support.to_string(),
                metrics.per_class_error[y].to_string(),
                metrics.per_class_avg_size[y].to_string(),
            ])?;
        }
        w.flush()?;
    }

    let mut code = 0;
    if let Some(max) = a.max_avg_error {
        if metrics.avg_error > max + a.slack {
            eprintln!("constraint violated: avg error {} > {max} + {}", metrics.avg_error, a.slack);
            code = EXIT_CHECK_FAILED;
        }
    }
    if let Some(max) = a.max_avg_size {
        if metrics.avg_size > max + a.slack {
            eprintln!("constraint violated: avg size {} > {max} + {}", metrics.avg_size, a.slack);
            code = EXIT_CHECK_FAILED;
        }
    }

    let out = EvaluateOutput { metrics, violation };
    match &a.out {
        Some(path) => io::write_json(path, &out)?,
        None => writeln!(std::io::stdout().lock(), "{}", serde_json::to_string_pretty(&out)?)?,
    }
    Ok(code)
}

fn cmd_sweep(a: &SweepArgs) -> Result<i32> {
    if a.grid.is_empty() {
        bail!("--grid must not be empty");
    }
    let spec = a.formulation.spec()?;
    let fit = a.fit.options()?;
    let calib = read_scores(&a.calib)?;
    let test = read_scores(&a.test)?;
    let opts = SweepOptions { repeats: a.repeats, seed: a.fit.seed.unwrap_or(0), fit, violation_eps: a.violation_eps };
    let curve = sweep(&spec, &a.grid, &calib, &test, &opts)?;

    let sink: Box<dyn Write> = match &a.out {
        Some(path) => Box::new(fs::File::create(path)?),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    let quantile_cols: Vec<u8> = curve
        .points
        .iter()
        .find_map(|p| p.violation_quantiles.as_ref())
        .map(|q| q.keys().copied().collect())
        .unwrap_or_default();
    let mut header: Vec<String> =
        ["param", "status", "reason", "mean_error", "std_error", "mean_size", "std_size"].map(String::from).to_vec();
    header.extend(quantile_cols.iter().map(|q| format!("violation_q{q}")));
    w.write_record(&header)?;
    for p in &curve.points {
        let (status, reason) = match &p.status {
            PointStatus::Ok => ("ok", String::new()),
            PointStatus::Failed(r) => ("failed", r.clone()),
        };
        let mut row = vec![
            p.param.to_string(),
            status.to_string(),
            reason,
            p.mean_error.to_string(),
            p.std_error.to_string(),
            p.mean_size.to_string(),
            p.std_size.to_string(),
        ];
        for q in &quantile_cols {
            row.push(p.violation_quantiles.as_ref().and_then(|m| m.get(q)).map(f64::to_string).unwrap_or_default());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(0)
}

/// Sizes of the three splits; the last absorbs rounding.
pub fn split_sizes(n: usize, split: &[u32]) -> Result<[usize; 3]> {
    if split.len() != 3 || split.iter().sum::<u32>() != 100 {
        bail!("--split needs three percentages summing to 100");
    }
    let a = n * split[0] as usize / 100;
    let b = n * split[1] as usize / 100;
    Ok([a, b, n - a - b])
}

fn cmd_synth(a: &SynthArgs) -> Result<i32> {
    let sizes = split_sizes(a.samples, &a.split)?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let truth = generate_distribution(a.template, a.classes, a.support, &mut rng)?;
    let (scores, support_index) = sample_from(&truth, a.samples, a.noise, "s", &mut rng)?;
    fs::create_dir_all(&a.out_dir)?;
    let mut start = 0;
    for (name, size) in ["train", "calib", "test"].iter().zip(sizes) {
        let part = scores.subset(&(start..start + size).collect::<Vec<_>>());
        io::write_scores(&a.out_dir.join(format!("{name}.csv")), &part)?;
        start += size;
    }
    let samples = scores
        .samples()
        .iter()
        .zip(&support_index)
        .map(|(s, &j)| (s.id.clone(), truth.points()[j].x_id.clone()))
        .collect();
    let fixture = TruthFixture { template: a.template, seed: a.seed, noise: a.noise, distribution: truth, samples };
    io::write_json(&a.out_dir.join("truth.json"), &fixture)?;
    println!("train: {}, calib: {}, test: {}", sizes[0], sizes[1], sizes[2]);
    Ok(0)
}

fn print_checks(label: &str, checks: &[EquivalenceCheck]) -> bool {
    let mut ok = true;
    for c in checks {
        let verdict = match (c.informational, c.passed) {
            (true, _) => "info",
            (false, true) => "pass",
            (false, false) => "FAIL",
        };
        ok &= c.informational || c.passed;
        println!(
            "{label} {verdict} {}: closed-form {} brute-force {} constraints {}",
            c.name,
            c.closed_form,
            c.brute_force,
            if c.constraint_ok { "ok" } else { "violated" }
        );
    }
    ok
}

fn cmd_oracle_check(a: &OracleCheckArgs) -> Result<i32> {
    let mut report = Vec::new();
    match (&a.truth, a.random) {
        (Some(path), _) => {
            let dist = match io::read_json::<TruthInput>(path)? {
                TruthInput::Fixture(f) => f.distribution,
                TruthInput::Bare(d) => d,
            };
            report.push(("fixture".to_string(), equivalence_suite(&dist)?));
        }
        (None, Some(count)) => {
            let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
            for i in 0..count {
                let dist = random_distinct_distribution(a.classes, a.support, &mut rng)?;
                report.push((format!("random-{i}"), equivalence_suite(&dist)?));
            }
        }
        (None, None) => bail!("pass --truth <file> or --random <count>"),
    }
    let mut all_ok = true;
    for (label, checks) in &report {
        all_ok &= print_checks(label, checks);
    }
    if let Some(path) = &a.out {
        let map: BTreeMap<&str, &Vec<EquivalenceCheck>> = report.iter().map(|(l, c)| (l.as_str(), c)).collect();
        io::write_json(path, &map)?;
    }
    println!("{}", if all_ok { "all checks passed" } else { "some checks failed" });
    Ok(if all_ok { 0 } else { EXIT_CHECK_FAILED })
}
