//! Synthetic score sets drawn from a known finite distribution.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{DiscreteDistribution, OracleError, SupportPoint};
use crate::domain::{softmax, ProbabilityVector, Sample, ScoreSet, DEFAULT_SUM_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Template {
    /// Half the support nearly deterministic (dominant class in the lower
    /// half of the labels), half nearly uniform.
    TwoRegime,
    /// Conditional probabilities drawn from a symmetric Dirichlet(0.5).
    DirichletLike,
    /// One dominant class per point with 1-10% of the mass spread elsewhere.
    NearDeterministic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub template: Template,
    pub n_classes: usize,
    pub n_samples: usize,
    pub support_size: usize,
    pub seed: u64,
    /// 0 gives scores equal to the true conditional probabilities. Larger
    /// values sharpen and perturb the logits.
    pub noise: f64,
}

impl SynthConfig {
    pub fn new(template: Template, n_classes: usize, n_samples: usize, seed: u64) -> Self {
        Self { template, n_classes, n_samples, support_size: 200, seed, noise: 0.0 }
    }
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub scores: ScoreSet,
    pub truth: DiscreteDistribution,
    /// Index into `truth.points()` for each sample.
    pub support_index: Vec<usize>,
}

fn dirichlet(rng: &mut ChaCha8Rng, alpha: f64, n: usize) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("positive shape");
    let raw: Vec<f64> = (0..n).map(|_| gamma.sample(rng).max(1e-12)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

fn normalized(mut v: Vec<f64>) -> Vec<f64> {
    let total: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= total);
    v
}

fn concentrated(rng: &mut ChaCha8Rng, n: usize, dominant: usize, spread: f64) -> Vec<f64> {
    let rest = dirichlet(rng, 1.0, n - 1);
    let mut p = Vec::with_capacity(n);
    let mut it = rest.into_iter();
    for i in 0..n {
        p.push(if i == dominant { 1.0 - spread } else { spread * it.next().expect("n - 1 entries") });
    }
    normalized(p)
}

fn conditional(rng: &mut ChaCha8Rng, template: Template, n: usize, index: usize) -> Vec<f64> {
    match template {
        Template::DirichletLike => dirichlet(rng, 0.5, n),
        Template::NearDeterministic => {
            let dominant = rng.random_range(0..n);
            let spread = rng.random_range(0.01..0.1);
            concentrated(rng, n, dominant, spread)
        }
        Template::TwoRegime => {
            if index.is_multiple_of(2) {
                let dominant = rng.random_range(0..n.div_ceil(2));
                let spread = rng.random_range(0.001..0.01);
                concentrated(rng, n, dominant, spread)
            } else {
                normalized((0..n).map(|_| 1.0 + rng.random_range(-0.05..0.05)).collect())
            }
        }
    }
}

/// A random distribution with the template's conditional shapes.
/// Two-regime supports get uniform marginals; the others Dirichlet(1).
pub fn generate_distribution(
    template: Template,
    n_classes: usize,
    support_size: usize,
    rng: &mut ChaCha8Rng,
) -> Result<DiscreteDistribution, OracleError> {
    if support_size == 0 {
        return Err(OracleError::InvalidDistribution("empty support".into()));
    }
    let marginals = match template {
        Template::TwoRegime => vec![1.0 / support_size as f64; support_size],
        _ => dirichlet(rng, 1.0, support_size),
    };
    let mut points = Vec::with_capacity(support_size);
    for (i, m) in marginals.into_iter().enumerate() {
        let p = conditional(rng, template, n_classes, i);
        let cond_probs = ProbabilityVector::new(p, DEFAULT_SUM_TOL)
            .map_err(|e| OracleError::InvalidDistribution(e.to_string()))?;
        points.push(SupportPoint { x_id: format!("x{i:05}"), marginal_prob: m, cond_probs });
    }
    renormalize_marginals(&mut points);
    DiscreteDistribution::new(n_classes, points)
}

/// Pushes the floating-point residue of the marginal sum onto the largest
/// entry so the total is 1 to within a few ulps.
fn renormalize_marginals(points: &mut [SupportPoint]) {
    let total: f64 = points.iter().map(|p| p.marginal_prob).sum();
    let biggest = (0..points.len())
        .max_by(|&a, &b| points[a].marginal_prob.total_cmp(&points[b].marginal_prob))
        .expect("non-empty");
    points[biggest].marginal_prob += 1.0 - total;
}

/// Small random distribution whose conditional entries are all distinct, for
/// exhaustive checks. Marginals are Dirichlet(1).
pub fn random_distinct_distribution(
    n_classes: usize,
    support_size: usize,
    rng: &mut ChaCha8Rng,
) -> Result<DiscreteDistribution, OracleError> {
    loop {
        let dist = generate_distribution(Template::DirichletLike, n_classes, support_size, rng)?;
        let mut all: Vec<f64> = dist.points().iter().flat_map(|p| p.cond_probs.as_slice().to_vec()).collect();
        all.sort_by(f64::total_cmp);
        let distinct = all.windows(2).all(|w| w[1] - w[0] > 1e-9);
        let marginals_ok = dist.points().iter().all(|p| p.marginal_prob > 1e-6);
        if distinct && marginals_ok {
            return Ok(dist);
        }
    }
}

/// Draws `x ~ P(x)`, `y ~ p(x)` and the scores.
pub fn sample_from(
    dist: &DiscreteDistribution,
    n_samples: usize,
    noise: f64,
    id_prefix: &str,
    rng: &mut ChaCha8Rng,
) -> Result<(ScoreSet, Vec<usize>), OracleError> {
    let marginal = WeightedIndex::new(dist.points().iter().map(|p| p.marginal_prob))
        .map_err(|e| OracleError::InvalidDistribution(e.to_string()))?;
    let labels: Vec<WeightedIndex<f64>> = dist
        .points()
        .iter()
        .map(|p| WeightedIndex::new(p.cond_probs.as_slice().iter().copied()))
        .collect::<Result<_, _>>()
        .map_err(|e| OracleError::InvalidDistribution(e.to_string()))?;
    let mut samples = Vec::with_capacity(n_samples);
    let mut support_index = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        let j = marginal.sample(rng);
        let truth = &dist.points()[j].cond_probs;
        let y = labels[j].sample(rng) + 1;
        let log_p: Vec<f64> = truth.as_slice().iter().map(|v| v.ln()).collect();
        let (probs, logits) = if noise == 0.0 {
            (truth.clone(), log_p)
        } else {
            let z: Vec<f64> = log_p
                .iter()
                .map(|v| (1.0 + noise) * v + noise * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let p = ProbabilityVector::new(softmax(&z, 1.0), DEFAULT_SUM_TOL)
                .map_err(|e| OracleError::InvalidDistribution(e.to_string()))?;
            (p, z)
        };
        samples.push(Sample { id: format!("{id_prefix}{i:07}"), probs, logits: Some(logits), label: Some(y) });
        support_index.push(j);
    }
    let scores = ScoreSet::new(dist.n_classes(), samples)
        .map_err(|e| OracleError::InvalidDistribution(e.to_string()))?;
    Ok((scores, support_index))
}

pub fn synth_generate(config: &SynthConfig) -> Result<SynthOutput, OracleError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let truth = generate_distribution(config.template, config.n_classes, config.support_size, &mut rng)?;
    let (scores, support_index) = sample_from(&truth, config.n_samples, config.noise, "s", &mut rng)?;
    Ok(SynthOutput { scores, truth, support_index })
}
