//! Ground truth for verification on finite distributions.
//!
//! A [`DiscreteDistribution`] carries exact conditional probabilities on a
//! small support, so error and size of any assignment are exact sums and the
//! constrained optimum of every formulation can be found by enumeration.

pub mod synth;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::{fscore_root, CalibrationError, EmpiricalStepFunction, StepError};
use crate::domain::{LabelSet, ProbabilityVector};
use crate::formulations::{
    predict_hybrid_error, predict_hybrid_size, predict_penalized, predict_pointwise_error, predict_top_k,
    predict_with_threshold, Formulation, FormulationError, FormulationSpec, HybridErrorMode, COVERAGE_TOL,
};

/// Slack on constraint checks and objective comparisons.
pub const ORACLE_TOL: f64 = 1e-12;

/// Largest number of joint assignments enumerated for average constraints.
pub const MAX_JOINT_ASSIGNMENTS: f64 = 1e7;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("{0:.3e} joint assignments exceed the brute-force limit")]
    TooLargeForBruteForce(f64),
    #[error("no assignment satisfies the constraints")]
    Infeasible,
    #[error("assignment has no set for point {0}")]
    MissingAssignment(String),
    #[error(transparent)]
    Formulation(#[from] FormulationError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    Step(#[from] StepError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportPoint {
    pub x_id: String,
    pub marginal_prob: f64,
    pub cond_probs: ProbabilityVector,
}

/// A joint law of `(X, Y)` on a finite support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDistribution")]
pub struct DiscreteDistribution {
    n_classes: usize,
    points: Vec<SupportPoint>,
}

#[derive(Deserialize)]
struct RawDistribution {
    n_classes: usize,
    points: Vec<SupportPoint>,
}

impl TryFrom<RawDistribution> for DiscreteDistribution {
    type Error = OracleError;

    fn try_from(raw: RawDistribution) -> Result<Self, Self::Error> {
        DiscreteDistribution::new(raw.n_classes, raw.points)
    }
}

impl DiscreteDistribution {
    pub fn new(n_classes: usize, points: Vec<SupportPoint>) -> Result<Self, OracleError> {
        let bad = |m: String| Err(OracleError::InvalidDistribution(m));
        if points.is_empty() {
            return bad("empty support".into());
        }
        if !(2..=63).contains(&n_classes) {
            return bad(format!("unsupported class count {n_classes}"));
        }
        let mut total = 0.0;
        for pt in &points {
            if pt.cond_probs.n_classes() != n_classes {
                return bad(format!("point {} has {} classes", pt.x_id, pt.cond_probs.n_classes()));
            }
            if !(pt.marginal_prob >= 0.0) {
                return bad(format!("point {} has negative mass", pt.x_id));
            }
            total += pt.marginal_prob;
        }
        if (total - 1.0).abs() > 1e-12 {
            return bad(format!("marginal probabilities sum to {total}"));
        }
        let mut ids: Vec<&str> = points.iter().map(|p| p.x_id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return bad("duplicate x_id".into());
        }
        Ok(Self { n_classes, points })
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn points(&self) -> &[SupportPoint] {
        &self.points
    }

    /// `(p(x), P(x))` pairs in support order.
    pub fn weighted(&self) -> Vec<(&ProbabilityVector, f64)> {
        self.points.iter().map(|p| (&p.cond_probs, p.marginal_prob)).collect()
    }

    /// `Σ_x P(x) (1 - max_ℓ p_ℓ(x))`.
    pub fn bayes_error(&self) -> f64 {
        self.points
            .iter()
            .map(|p| p.marginal_prob * (1.0 - p.cond_probs.as_slice().iter().copied().fold(0.0, f64::max)))
            .sum()
    }
}

/// An arbitrary set-valued classifier on the support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentClassifier {
    pub assignment: BTreeMap<String, LabelSet>,
}

impl AssignmentClassifier {
    /// Applies `rule` at every support point.
    pub fn from_rule<E>(
        dist: &DiscreteDistribution,
        mut rule: impl FnMut(&ProbabilityVector) -> Result<LabelSet, E>,
    ) -> Result<Self, E> {
        let mut assignment = BTreeMap::new();
        for pt in dist.points() {
            assignment.insert(pt.x_id.clone(), rule(&pt.cond_probs)?);
        }
        Ok(Self { assignment })
    }

    fn from_masks(dist: &DiscreteDistribution, masks: &[u64]) -> Self {
        let assignment = dist
            .points()
            .iter()
            .zip(masks)
            .map(|(pt, &m)| (pt.x_id.clone(), LabelSet::from_mask(m, dist.n_classes())))
            .collect();
        Self { assignment }
    }

    pub fn get(&self, x_id: &str) -> Result<&LabelSet, OracleError> {
        self.assignment.get(x_id).ok_or_else(|| OracleError::MissingAssignment(x_id.to_string()))
    }
}

/// `P(Y ∉ Γ(X)) = Σ_x P(x) (1 - Σ_{ℓ∈Γ(x)} p_ℓ(x))`.
pub fn exact_error(dist: &DiscreteDistribution, g: &AssignmentClassifier) -> Result<f64, OracleError> {
    let mut total = 0.0;
    for pt in dist.points() {
        let set = g.get(&pt.x_id)?;
        total += pt.marginal_prob * (1.0 - pt.cond_probs.mass(set));
    }
    Ok(total)
}

/// `E|Γ(X)| = Σ_x P(x) |Γ(x)|`.
pub fn exact_size(dist: &DiscreteDistribution, g: &AssignmentClassifier) -> Result<f64, OracleError> {
    let mut total = 0.0;
    for pt in dist.points() {
        total += pt.marginal_prob * g.get(&pt.x_id)?.len() as f64;
    }
    Ok(total)
}

/// Largest point-wise error `1 - Σ_{ℓ∈Γ(x)} p_ℓ(x)` over the support.
pub fn max_pointwise_error(dist: &DiscreteDistribution, g: &AssignmentClassifier) -> Result<f64, OracleError> {
    let mut worst: f64 = 0.0;
    for pt in dist.points() {
        worst = worst.max(1.0 - pt.cond_probs.mass(g.get(&pt.x_id)?));
    }
    Ok(worst)
}

/// Population threshold functions of a distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactThresholdFunctions {
    /// `G(t) = Σ_ℓ P(p_ℓ(X) ≥ t)`.
    pub g: EmpiricalStepFunction,
    /// `H(t) = P(p_Y(X) ≥ t)`.
    pub h: EmpiricalStepFunction,
    /// `g_k[k - 1]` is `G_k(t) = Σ_{ℓ ≤ k} P(p_(ℓ)(X) ≥ t)`.
    pub g_k: Vec<EmpiricalStepFunction>,
    /// `H_ε(t) = E Σ_{ℓ ≤ k_ε(X)} p_(ℓ)(X) 1{p_(ℓ)(X) ≥ t}` for the requested ε.
    pub h_eps: Option<(f64, EmpiricalStepFunction)>,
}

fn descending(p: &ProbabilityVector) -> Vec<f64> {
    let mut v = p.as_slice().to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

pub fn exact_threshold_functions(
    dist: &DiscreteDistribution,
    eps: Option<f64>,
) -> Result<ExactThresholdFunctions, OracleError> {
    let mut g = Vec::new();
    let mut h = Vec::new();
    for pt in dist.points() {
        for &v in pt.cond_probs.as_slice() {
            g.push((v, pt.marginal_prob));
            h.push((v, pt.marginal_prob * v));
        }
    }
    let g_k = (1..=dist.n_classes())
        .map(|k| {
            let knots = dist
                .points()
                .iter()
                .flat_map(|pt| descending(&pt.cond_probs).into_iter().take(k).map(|v| (v, pt.marginal_prob)))
                .collect();
            EmpiricalStepFunction::from_knots(knots)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let h_eps = match eps {
        None => None,
        Some(eps) => {
            let mut knots = Vec::new();
            for pt in dist.points() {
                let mut covered = 0.0;
                for v in descending(&pt.cond_probs) {
                    if covered >= 1.0 - eps - COVERAGE_TOL {
                        break;
                    }
                    covered += v;
                    knots.push((v, pt.marginal_prob * v));
                }
            }
            Some((eps, EmpiricalStepFunction::from_knots(knots)?))
        }
    };
    Ok(ExactThresholdFunctions {
        g: EmpiricalStepFunction::from_knots(g)?,
        h: EmpiricalStepFunction::from_knots(h)?,
        g_k,
        h_eps,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BruteForceSolution {
    pub assignment: AssignmentClassifier,
    /// Error for error-minimizing problems, size for size-minimizing ones,
    /// `error + λ size` for the penalized problem, and F-beta for F-score.
    pub objective: f64,
    pub error: f64,
    pub size: f64,
}

/// Problems the brute-force solver understands: the eight formulations plus
/// "average error with point-wise size".
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Problem {
    Formulation(Formulation),
    AverageErrorPointwiseSize { ebar: f64, k: usize },
}

struct Candidate {
    mask: u64,
    coverage: f64,
    size: usize,
}

fn candidates(p: &ProbabilityVector, allowed: impl Fn(f64, usize) -> bool) -> Vec<Candidate> {
    let n = p.n_classes();
    (0u64..1 << n)
        .filter_map(|mask| {
            let coverage: f64 = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| p.as_slice()[i]).sum();
            let size = mask.count_ones() as usize;
            allowed(coverage, size).then_some(Candidate { mask, coverage, size })
        })
        .collect()
}

/// `(primary, secondary)`; lower is better, compared with [`ORACLE_TOL`].
fn better(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0 < b.0 - ORACLE_TOL || ((a.0 - b.0).abs() <= ORACLE_TOL && a.1 < b.1 - ORACLE_TOL)
}

/// Exhaustive constrained optimum.
///
/// Point-wise problems are solved independently per point; problems with an
/// average constraint enumerate all joint assignments, refusing when there
/// are more than [`MAX_JOINT_ASSIGNMENTS`]. Objective ties go to the better
/// secondary quantity (higher coverage when minimizing size, smaller size
/// otherwise), then to the lexicographically smallest sequence of per-point
/// label bitmasks.
pub fn brute_force_optimal(dist: &DiscreteDistribution, spec: &FormulationSpec) -> Result<BruteForceSolution, OracleError> {
    brute_force_problem(dist, Problem::Formulation(spec.kind))
}

pub fn brute_force_problem(dist: &DiscreteDistribution, problem: Problem) -> Result<BruteForceSolution, OracleError> {
    let n = dist.n_classes();
    if let Problem::Formulation(kind) = problem {
        kind.validate(n)?;
    }
    let any = |_: f64, _: usize| true;
    match problem {
        Problem::Formulation(Formulation::TopK { k }) => {
            per_point(dist, |c, s| s <= k && any(c, s), |c, s| (1.0 - c, s as f64), Objective::Error)
        }
        Problem::Formulation(Formulation::PointwiseError { eps, offset }) => {
            let target = 1.0 - eps + offset;
            per_point(dist, |c, _| c >= target - COVERAGE_TOL, |c, s| (s as f64, -c), Objective::Size)
        }
        Problem::Formulation(Formulation::Penalized { lambda }) => per_point(
            dist,
            any,
            |c, s| ((1.0 - c) + lambda * s as f64, s as f64),
            Objective::Penalized(lambda),
        ),
        Problem::Formulation(Formulation::AverageSize { kbar }) => {
            joint(dist, any, |_, size| size <= kbar + ORACLE_TOL, |e, s| (e, s), Objective::Error)
        }
        Problem::Formulation(Formulation::AverageError { ebar }) => {
            joint(dist, any, |err, _| err <= ebar + ORACLE_TOL, |e, s| (s, e), Objective::Size)
        }
        Problem::Formulation(Formulation::HybridSize { kbar, k }) => joint(
            dist,
            |_, s| s <= k,
            |_, size| size <= kbar + ORACLE_TOL,
            |e, s| (e, s),
            Objective::Error,
        ),
        Problem::Formulation(Formulation::HybridError { ebar, eps, .. }) => joint(
            dist,
            |c, _| c >= 1.0 - eps - COVERAGE_TOL,
            |err, _| err <= ebar + ORACLE_TOL,
            |e, s| (s, e),
            Objective::Size,
        ),
        Problem::Formulation(Formulation::FScore { beta }) => {
            let b2 = beta * beta;
            joint(dist, any, |_, _| true, |e, s| (-(1.0 + b2) * (1.0 - e) / (b2 + s), s), Objective::FScore(beta))
        }
        Problem::AverageErrorPointwiseSize { ebar, k } => {
            joint(dist, |_, s| s <= k, |err, _| err <= ebar + ORACLE_TOL, |e, s| (s, e), Objective::Size)
        }
    }
}

#[derive(Clone, Copy)]
enum Objective {
    Error,
    Size,
    Penalized(f64),
    FScore(f64),
}

fn solution(dist: &DiscreteDistribution, masks: &[u64], objective: Objective) -> Result<BruteForceSolution, OracleError> {
    let assignment = AssignmentClassifier::from_masks(dist, masks);
    let error = exact_error(dist, &assignment)?;
    let size = exact_size(dist, &assignment)?;
    let objective = match objective {
        Objective::Error => error,
        Objective::Size => size,
        Objective::Penalized(lambda) => error + lambda * size,
        Objective::FScore(beta) => (1.0 + beta * beta) * (1.0 - error) / (beta * beta + size),
    };
    Ok(BruteForceSolution { assignment, objective, error, size })
}

fn per_point(
    dist: &DiscreteDistribution,
    allowed: impl Fn(f64, usize) -> bool + Copy,
    key: impl Fn(f64, usize) -> (f64, f64),
    objective: Objective,
) -> Result<BruteForceSolution, OracleError> {
    let mut masks = Vec::with_capacity(dist.points().len());
    for pt in dist.points() {
        let mut best: Option<(&Candidate, (f64, f64))> = None;
        let cands = candidates(&pt.cond_probs, allowed);
        for c in &cands {
            let k = key(c.coverage, c.size);
            if best.as_ref().is_none_or(|(_, bk)| better(k, *bk)) {
                best = Some((c, k));
            }
        }
        masks.push(best.ok_or(OracleError::Infeasible)?.0.mask);
    }
    solution(dist, &masks, objective)
}

fn joint(
    dist: &DiscreteDistribution,
    allowed: impl Fn(f64, usize) -> bool + Copy,
    feasible: impl Fn(f64, f64) -> bool,
    key: impl Fn(f64, f64) -> (f64, f64),
    objective: Objective,
) -> Result<BruteForceSolution, OracleError> {
    let m = dist.points().len();
    let combinations = 2f64.powi((dist.n_classes() * m) as i32);
    if combinations > MAX_JOINT_ASSIGNMENTS {
        return Err(OracleError::TooLargeForBruteForce(combinations));
    }
    let tables: Vec<Vec<Candidate>> = dist.points().iter().map(|pt| candidates(&pt.cond_probs, allowed)).collect();
    if tables.iter().any(Vec::is_empty) {
        return Err(OracleError::Infeasible);
    }
    let weights: Vec<f64> = dist.points().iter().map(|p| p.marginal_prob).collect();

    // Mixed-radix counter, last point fastest, so assignments are visited in
    // lexicographic order of their mask sequences.
    let mut idx = vec![0usize; m];
    let mut best: Option<(Vec<usize>, (f64, f64))> = None;
    loop {
        let mut err = 0.0;
        let mut size = 0.0;
        for (i, table) in tables.iter().enumerate() {
            let c = &table[idx[i]];
            err += weights[i] * (1.0 - c.coverage);
            size += weights[i] * c.size as f64;
        }
        if feasible(err, size) {
            let k = key(err, size);
            if best.as_ref().is_none_or(|(_, bk)| better(k, *bk)) {
                best = Some((idx.clone(), k));
            }
        }
        let mut pos = m;
        loop {
            if pos == 0 {
                let (idx, _) = best.ok_or(OracleError::Infeasible)?;
                let masks: Vec<u64> = idx.iter().zip(&tables).map(|(&i, t)| t[i].mask).collect();
                return solution(dist, &masks, objective);
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < tables[pos].len() {
                break;
            }
            idx[pos] = 0;
        }
    }
}

/// One closed-form versus brute-force comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceCheck {
    pub name: String,
    pub closed_form: f64,
    pub brute_force: f64,
    /// The closed-form assignment satisfies the problem's constraints.
    pub constraint_ok: bool,
    /// For point-wise problems: identical sets at every point.
    pub same_sets: Option<bool>,
    /// Reported for information only; not part of `passed`.
    pub informational: bool,
    pub passed: bool,
}

impl EquivalenceCheck {
    fn new(name: String, closed_form: f64, brute_force: f64, constraint_ok: bool, same_sets: Option<bool>) -> Self {
        let passed = (closed_form - brute_force).abs() <= ORACLE_TOL && constraint_ok && same_sets.unwrap_or(true);
        Self { name, closed_form, brute_force, constraint_ok, same_sets, informational: false, passed }
    }
}

/// Up to `n` evenly spaced items of `v`.
fn spread<T: Copy>(v: &[T], n: usize) -> Vec<T> {
    if v.len() <= n {
        return v.to_vec();
    }
    (0..n).map(|i| v[i * (v.len() - 1) / (n - 1)]).collect()
}

/// Runs the closed-form rules at exact population thresholds against the
/// brute-force optimum.
///
/// Average-constraint levels are taken from the values the population
/// functions actually attain (`k̄ = G(s)`, `1 - ε̄ = H(s)` at knots `s`); at
/// other levels no deterministic threshold rule can exhaust the budget.
pub fn equivalence_suite(dist: &DiscreteDistribution) -> Result<Vec<EquivalenceCheck>, OracleError> {
    let n = dist.n_classes();
    let exact = exact_threshold_functions(dist, None)?;
    let mut checks = Vec::new();

    let same = |a: &AssignmentClassifier, b: &AssignmentClassifier| a == b;

    for k in 1..=n {
        let rule = AssignmentClassifier::from_rule(dist, |p| predict_top_k(p, k))?;
        let bf = brute_force_problem(dist, Problem::Formulation(Formulation::TopK { k }))?;
        let ok = rule.assignment.values().all(|s| s.len() <= k);
        checks.push(EquivalenceCheck::new(
            format!("top-k k={k}"),
            exact_error(dist, &rule)?,
            bf.objective,
            ok,
            Some(same(&rule, &bf.assignment)),
        ));
    }

    for (eps, offset) in [(0.05, 0.0), (0.2, 0.0), (0.5, 0.0), (0.3, 0.1)] {
        let rule = AssignmentClassifier::from_rule(dist, |p| predict_pointwise_error(p, eps, offset))?;
        let bf = brute_force_problem(dist, Problem::Formulation(Formulation::PointwiseError { eps, offset }))?;
        let ok = max_pointwise_error(dist, &rule)? <= eps - offset + ORACLE_TOL;
        checks.push(EquivalenceCheck::new(
            format!("pointwise-error eps={eps} offset={offset}"),
            exact_size(dist, &rule)?,
            bf.objective,
            ok,
            Some(same(&rule, &bf.assignment)),
        ));
    }

    for lambda in [0.1, 0.25, 0.4] {
        let rule = AssignmentClassifier::from_rule(dist, |p| predict_penalized(p, lambda))?;
        let bf = brute_force_problem(dist, Problem::Formulation(Formulation::Penalized { lambda }))?;
        let value = exact_error(dist, &rule)? + lambda * exact_size(dist, &rule)?;
        checks.push(EquivalenceCheck::new(
            format!("penalized lambda={lambda}"),
            value,
            bf.objective,
            true,
            Some(same(&rule, &bf.assignment)),
        ));
    }

    let joint = 2f64.powi((n * dist.points().len()) as i32);
    if joint > MAX_JOINT_ASSIGNMENTS {
        checks.push(EquivalenceCheck {
            name: format!("average-constraint checks skipped: {joint:.3e} joint assignments"),
            closed_form: f64::NAN,
            brute_force: f64::NAN,
            constraint_ok: true,
            same_sets: None,
            informational: true,
            passed: false,
        });
        return Ok(checks);
    }

    let size_levels: Vec<f64> = exact.g.knots().map(|(_, v)| v).filter(|&v| v > 0.0 && v < n as f64).collect();
    for kbar in spread(&size_levels, 4) {
        let theta = exact.g.generalized_inverse(kbar)?;
        let rule = AssignmentClassifier::from_rule(dist, |p| Ok::<_, OracleError>(predict_with_threshold(p, theta)))?;
        let bf = brute_force_problem(dist, Problem::Formulation(Formulation::AverageSize { kbar }))?;
        checks.push(EquivalenceCheck::new(
            format!("average-size kbar={kbar:.6}"),
            exact_error(dist, &rule)?,
            bf.objective,
            exact_size(dist, &rule)? <= kbar + ORACLE_TOL,
            None,
        ));
    }

    let coverage_levels: Vec<f64> = exact.h.knots().map(|(_, v)| v).filter(|&v| v > 0.0 && v < 1.0).collect();
    for level in spread(&coverage_levels, 4) {
        let ebar = 1.0 - level;
        let theta = exact.h.upper_level(1.0 - ebar)?;
        let rule = AssignmentClassifier::from_rule(dist, |p| Ok::<_, OracleError>(predict_with_threshold(p, theta)))?;
        let bf = brute_force_problem(dist, Problem::Formulation(Formulation::AverageError { ebar }))?;
        checks.push(EquivalenceCheck::new(
            format!("average-error ebar={ebar:.6}"),
            exact_size(dist, &rule)?,
            bf.objective,
            exact_error(dist, &rule)? <= ebar + ORACLE_TOL,
            None,
        ));
    }

    for k in 1..=n {
        let gk = &exact.g_k[k - 1];
        let levels: Vec<f64> = gk.knots().map(|(_, v)| v).filter(|&v| v > 0.0 && v < k as f64).collect();
        for kbar in spread(&levels, 3) {
            let theta = gk.generalized_inverse(kbar)?;
            let rule = AssignmentClassifier::from_rule(dist, |p| predict_hybrid_size(p, theta, k))?;
            let bf = brute_force_problem(dist, Problem::Formulation(Formulation::HybridSize { kbar, k }))?;
            let ok = exact_size(dist, &rule)? <= kbar + ORACLE_TOL && rule.assignment.values().all(|s| s.len() <= k);
            checks.push(EquivalenceCheck::new(
                format!("hybrid-size k={k} kbar={kbar:.6}"),
                exact_error(dist, &rule)?,
                bf.objective,
                ok,
                None,
            ));
        }
    }

    for k in 1..n {
        let top = AssignmentClassifier::from_rule(dist, |p| predict_top_k(p, k))?;
        let eps_k = exact_error(dist, &top)?;
        for (label, ebar, expect_feasible) in [("below", eps_k * 0.5, false), ("above", eps_k + (1.0 - eps_k) * 0.5, true)] {
            if !expect_feasible && eps_k <= ORACLE_TOL {
                continue;
            }
            let outcome = brute_force_problem(dist, Problem::AverageErrorPointwiseSize { ebar, k });
            let feasible = match outcome {
                Ok(_) => true,
                Err(OracleError::Infeasible) => false,
                Err(e) => return Err(e),
            };
            let agree = feasible == expect_feasible;
            checks.push(EquivalenceCheck {
                name: format!("infeasibility k={k} ebar {label} eps_k={eps_k:.6}"),
                closed_form: expect_feasible as u8 as f64,
                brute_force: feasible as u8 as f64,
                constraint_ok: agree,
                same_sets: None,
                informational: false,
                passed: agree,
            });
        }
    }

    let weighted = dist.weighted();
    for beta in [0.5, 1.0, 2.0] {
        let theta = fscore_root(&weighted, beta, 1e-14)?;
        let rule = AssignmentClassifier::from_rule(dist, |p| Ok::<_, OracleError>(predict_with_threshold(p, theta)))?;
        let b2 = beta * beta;
        let f = (1.0 + b2) * (1.0 - exact_error(dist, &rule)?) / (b2 + exact_size(dist, &rule)?);
        let bf = brute_force_problem(dist, Problem::Formulation(Formulation::FScore { beta }))?;
        checks.push(EquivalenceCheck::new(format!("f-score beta={beta}"), f, bf.objective, true, None));
    }

    checks.extend(hybrid_error_report(dist, 0.3)?);
    Ok(checks)
}

/// Both hybrid-error combine modes at population thresholds taken from
/// attained levels of `H_ε`, against the brute-force optimum. Informational:
/// `constraint_ok` says whether a mode met both constraints.
pub fn hybrid_error_report(dist: &DiscreteDistribution, eps: f64) -> Result<Vec<EquivalenceCheck>, OracleError> {
    let exact = exact_threshold_functions(dist, Some(eps))?;
    let (_, h_eps) = exact.h_eps.expect("requested");
    let levels: Vec<f64> = h_eps.knots().map(|(_, v)| v).filter(|&v| v > 1.0 - eps && v < 1.0).collect();
    let mut out = Vec::new();
    for level in spread(&levels, 2) {
        let ebar = 1.0 - level;
        let theta = h_eps.upper_level(level)?;
        let bf = brute_force_problem(dist, Problem::Formulation(Formulation::HybridError { ebar, eps, mode: HybridErrorMode::default() }));
        let bf_objective = match bf {
            Ok(s) => s.objective,
            Err(OracleError::Infeasible) => f64::NAN,
            Err(e) => return Err(e),
        };
        for mode in [HybridErrorMode::LemmaThreshold, HybridErrorMode::UnionWithPointwise] {
            let rule = AssignmentClassifier::from_rule(dist, |p| predict_hybrid_error(p, theta, eps, mode))?;
            let ok = exact_error(dist, &rule)? <= ebar + ORACLE_TOL
                && max_pointwise_error(dist, &rule)? <= eps + ORACLE_TOL;
            let closed = exact_size(dist, &rule)?;
            out.push(EquivalenceCheck {
                name: format!("hybrid-error {mode:?} eps={eps} ebar={ebar:.6}"),
                closed_form: closed,
                brute_force: bf_objective,
                constraint_ok: ok,
                same_sets: None,
                informational: true,
                passed: ok && (closed - bf_objective).abs() <= ORACLE_TOL,
            });
        }
    }
    Ok(out)
}
