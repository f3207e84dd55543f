//! KL divergence, executable checks of the KL-reduction bounds, and
//! accuracy / correction-uplift metrics.
//!
//! Two regimes are supported. In the exact-update regime the policy is set
//! to the single-sample target after every turn, so the per-turn change in
//! `KL(π_user ‖ π)` is exactly `log Z_k − (r_k/β)·π_user(y_k)`. In the
//! linearized regime a real [`InteractionSession`] produces the trace and
//! the approximation term `(L/2)·Σ‖Δθ_k‖²` absorbs linearization error.

use std::fmt;

use rand::Rng;

use crate::engine::InteractionSession;
use crate::error::{ensure_index, Error, Result};
use crate::oracle::FeedbackOracle;
use crate::policy::sample_index;
use crate::target::{check_distribution, partition_single, practical_target_distribution};

/// Slack allowed when deciding whether a bound holds.
pub const BOUND_SLACK: f64 = 1e-9;

/// `KL(p ‖ q) = Σ p_i ln(p_i / q_i)` with `0·ln 0 = 0`.
///
/// Returns [`Error::InfiniteDivergence`] when `p_i > 0` and `q_i = 0`.
pub fn kl(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch {
            expected: p.len(),
            got: q.len(),
        });
    }
    check_distribution(p)?;
    check_distribution(q)?;
    let mut total = 0.0;
    for (i, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            return Err(Error::InfiniteDivergence { index: i });
        }
        total += pi * (pi.ln() - qi.ln());
    }
    // Gibbs: rounding can leave a tiny negative value for p ≈ q
    Ok(total.max(0.0))
}

/// `log Z_k − (r/β)·π_user(y_k)` with the single-sample partition function.
pub fn predicted_delta_kl(user: &[f64], prev: &[f64], y_k: usize, r: f64, beta: f64) -> Result<f64> {
    check_distribution(user)?;
    check_distribution(prev)?;
    ensure_index("response", y_k, prev.len())?;
    if user.len() != prev.len() {
        return Err(Error::LengthMismatch {
            expected: prev.len(),
            got: user.len(),
        });
    }
    let z = partition_single(prev[y_k], r, beta)?;
    Ok(z.ln() - r / beta * user[y_k])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TheoremId {
    /// One-step reduction `ΔKL ≤ −π_user(y_k)/β`.
    Monotonic,
    /// `KL_K ≤ KL_0 − Σ π_user(y_k)/β` under exact updates.
    Cumulative,
    /// `KL_K ≤ KL_0 − Σ π_user(y_k)/β + (L/2)·Σ‖Δθ_k‖²` for real updates.
    Unified,
    /// `KL(u‖π_k) − KL(u‖π̃*_k) ≤ KL(π̃*_k‖π_k)`, the step used to bound
    /// the inexact-update error.
    InexactUpdate,
}

impl TheoremId {
    pub fn name(self) -> &'static str {
        match self {
            TheoremId::Monotonic => "monotonic",
            TheoremId::Cumulative => "cumulative",
            TheoremId::Unified => "unified",
            TheoremId::InexactUpdate => "inexact-update",
        }
    }
}

impl fmt::Display for TheoremId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-turn sides of an inequality `lhs ≤ rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub theorem: TheoremId,
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
    pub holds: Vec<bool>,
    /// `rhs − lhs`
    pub slack: Vec<f64>,
}

impl BoundReport {
    pub fn new(theorem: TheoremId) -> Self {
        BoundReport {
            theorem,
            lhs: Vec::new(),
            rhs: Vec::new(),
            holds: Vec::new(),
            slack: Vec::new(),
        }
    }

    pub fn push(&mut self, lhs: f64, rhs: f64) {
        self.lhs.push(lhs);
        self.rhs.push(rhs);
        self.holds.push(lhs <= rhs + BOUND_SLACK);
        self.slack.push(rhs - lhs);
    }

    pub fn all_hold(&self) -> bool {
        self.holds.iter().all(|&h| h)
    }

    pub fn min_slack(&self) -> f64 {
        self.slack.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn len(&self) -> usize {
        self.lhs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lhs.is_empty()
    }
}

/// Outcome of one exact-update step check.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicCheck {
    /// `KL(u ‖ π_new) − KL(u ‖ π_prev)`
    pub measured: f64,
    pub predicted: f64,
    /// `|measured − predicted| ≤ 1e-10`
    pub identity_holds: bool,
    /// Single-entry report of `measured ≤ −π_user(y_k)/β`.
    pub inequality: BoundReport,
    /// The inequality is only claimed for `r = +1`.
    pub proof_convention: bool,
}

/// Tolerance for the exact-update KL identity.
pub const IDENTITY_TOLERANCE: f64 = 1e-10;

/// Exact update `π_new = π̃*` followed by both checks.
pub fn check_monotonic(user: &[f64], prev: &[f64], y_k: usize, r: f64, beta: f64) -> Result<MonotonicCheck> {
    let predicted = predicted_delta_kl(user, prev, y_k, r, beta)?;
    let next = practical_target_distribution(prev, y_k, r, beta)?;
    let measured = kl(user, &next)? - kl(user, prev)?;
    let mut inequality = BoundReport::new(TheoremId::Monotonic);
    inequality.push(measured, -user[y_k] / beta);
    Ok(MonotonicCheck {
        measured,
        predicted,
        identity_holds: (measured - predicted).abs() <= IDENTITY_TOLERANCE,
        inequality,
        proof_convention: r == 1.0,
    })
}

/// Feedback sequence applied with exact updates from an initial policy.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactTrace {
    pub initial: Vec<f64>,
    /// `(y_k, r_k)` for every update turn.
    pub steps: Vec<(usize, f64)>,
}

impl ExactTrace {
    /// `π_0, π_1, …, π_K`.
    pub fn policies(&self, beta: f64) -> Result<Vec<Vec<f64>>> {
        let mut out = vec![self.initial.clone()];
        for &(y, r) in &self.steps {
            let prev = out.last().expect("non-empty");
            let next = practical_target_distribution(prev, y, r, beta)?;
            out.push(next);
        }
        Ok(out)
    }
}

/// How a simulated exact-update trace assigns rewards.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceConvention {
    /// Sample from the current policy; `r = +1` iff the user policy puts
    /// mass on the response. Failures update, the first success ends the
    /// trace without an update.
    FeedbackLoop,
    /// Sample from the user policy with `r = +1` and update every turn.
    UserSamplesRewarded,
}

/// Simulates up to `turns` exact updates.
pub fn simulate_exact_trace<R: Rng + ?Sized>(
    initial: &[f64],
    user: &[f64],
    beta: f64,
    turns: usize,
    convention: TraceConvention,
    rng: &mut R,
) -> Result<ExactTrace> {
    check_distribution(initial)?;
    check_distribution(user)?;
    let mut current = initial.to_vec();
    let mut steps = Vec::with_capacity(turns);
    for _ in 0..turns {
        let (y, r) = match convention {
            TraceConvention::FeedbackLoop => {
                let y = sample_index(&current, rng)?;
                if user[y] > 0.0 {
                    break;
                }
                (y, -1.0)
            }
            TraceConvention::UserSamplesRewarded => (sample_index(user, rng)?, 1.0),
        };
        current = practical_target_distribution(&current, y, r, beta)?;
        steps.push((y, r));
    }
    Ok(ExactTrace {
        initial: initial.to_vec(),
        steps,
    })
}

/// Cumulative bound at every prefix `K = 0..=len`.
pub fn check_cumulative(trace: &ExactTrace, user: &[f64], beta: f64) -> Result<BoundReport> {
    let policies = trace.policies(beta)?;
    let kl0 = kl(user, &policies[0])?;
    let mut report = BoundReport::new(TheoremId::Cumulative);
    let mut improvement = 0.0;
    for (k, pi) in policies.iter().enumerate() {
        if k > 0 {
            improvement += user[trace.steps[k - 1].0] / beta;
        }
        report.push(kl(user, pi)?, kl0 - improvement);
    }
    Ok(report)
}

/// Result of the empirical smoothness estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzEstimate {
    /// `max 2·KL(π_θ ‖ π_θ') / ‖θ − θ'‖²` over used pairs.
    pub max_ratio: f64,
    /// `max_ratio × safety_factor`.
    pub estimate: f64,
    pub pairs_used: usize,
    pub pairs_skipped: usize,
}

/// A sampled pair of parameter vectors evaluated at one context.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamPair {
    pub theta: Vec<f64>,
    pub theta_prime: Vec<f64>,
    pub context: usize,
}

/// Default inflation applied to the sampled maximum.
pub const LIPSCHITZ_SAFETY: f64 = 2.0;

/// Estimates `L` in `KL(π_θ ‖ π_θ') ≤ (L/2)·‖θ − θ'‖²` from `n ≥ 100` pairs.
///
/// Pairs closer than `1e-12` are skipped.
pub fn estimate_lipschitz<D, S>(dist: D, mut sampler: S, n: usize) -> Result<LipschitzEstimate>
where
    D: Fn(&[f64], usize) -> Result<Vec<f64>>,
    S: FnMut() -> ParamPair,
{
    if n < 100 {
        return Err(Error::InvalidArgument(format!("need at least 100 samples, got {n}")));
    }
    let mut max_ratio = 0.0f64;
    let mut used = 0;
    let mut skipped = 0;
    for _ in 0..n {
        let pair = sampler();
        let dist_sq: f64 = pair
            .theta
            .iter()
            .zip(&pair.theta_prime)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        if dist_sq.sqrt() < 1e-12 {
            skipped += 1;
            continue;
        }
        let p = dist(&pair.theta, pair.context)?;
        let q = dist(&pair.theta_prime, pair.context)?;
        max_ratio = max_ratio.max(2.0 * kl(&p, &q)? / dist_sq);
        used += 1;
    }
    Ok(LipschitzEstimate {
        max_ratio,
        estimate: max_ratio * LIPSCHITZ_SAFETY,
        pairs_used: used,
        pairs_skipped: skipped,
    })
}

/// Policies and step sizes from a real (linearized) session.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedTrace {
    /// `π_0, …, π_K` at the task context.
    pub policies: Vec<Vec<f64>>,
    /// `(y_k, r_k)` for each update turn.
    pub steps: Vec<(usize, f64)>,
    pub delta_norms: Vec<f64>,
    /// Adapted parameter vector before the first and after every update turn.
    pub iterates: Vec<Vec<f64>>,
}

/// Plays `session` to completion, keeping the turns that changed parameters.
pub fn linearized_trace<O, R>(
    session: &mut InteractionSession<'_>,
    oracle: &mut O,
    rng: &mut R,
) -> Result<LinearizedTrace>
where
    O: FeedbackOracle + ?Sized,
    R: Rng + ?Sized,
{
    let mut trace = LinearizedTrace {
        policies: vec![session.distribution()?],
        steps: Vec::new(),
        delta_norms: Vec::new(),
        iterates: vec![session.adapted().to_vec()],
    };
    let updates_on_success = session.config().positive_updates;
    while !session.is_finished() {
        let record = match session.play_turn(oracle, rng) {
            Ok(r) => r,
            Err(Error::Aborted(_)) => break,
            Err(e) => return Err(e),
        };
        if record.reward == 1.0 && !updates_on_success {
            continue;
        }
        trace.policies.push(session.distribution()?);
        trace.steps.push((record.response, record.reward));
        trace.delta_norms.push(record.delta_norm);
        trace.iterates.push(session.adapted().to_vec());
    }
    Ok(trace)
}

/// Unified bound at every prefix, plus the per-turn inexact-update relation.
pub fn check_unified(
    trace: &LinearizedTrace,
    user: &[f64],
    beta: f64,
    lipschitz: f64,
) -> Result<(BoundReport, BoundReport)> {
    let kl0 = kl(user, &trace.policies[0])?;
    let mut unified = BoundReport::new(TheoremId::Unified);
    let mut inexact = BoundReport::new(TheoremId::InexactUpdate);
    let mut improvement = 0.0;
    let mut approx = 0.0;
    unified.push(kl0, kl0);
    for (k, &(y, r)) in trace.steps.iter().enumerate() {
        let prev = &trace.policies[k];
        let next = &trace.policies[k + 1];
        improvement += user[y] / beta;
        approx += 0.5 * lipschitz * trace.delta_norms[k].powi(2);
        let kl_next = kl(user, next)?;
        unified.push(kl_next, kl0 - improvement + approx);

        let target = practical_target_distribution(prev, y, r, beta)?;
        inexact.push(kl_next - kl(user, &target)?, kl(&target, next)?);
    }
    Ok((unified, inexact))
}

/// Per-task result used by the metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TaskOutcome {
    pub task_id: usize,
    /// Turn (1-based) of the first success.
    pub solved_turn: Option<usize>,
    pub turns_played: usize,
}

impl TaskOutcome {
    fn solved_by(&self, k: usize) -> bool {
        self.solved_turn.is_some_and(|t| t <= k)
    }
}

fn ensure_outcomes(outcomes: &[TaskOutcome]) -> Result<()> {
    if outcomes.is_empty() {
        return Err(Error::InvalidArgument("empty task set".into()));
    }
    if let Some(o) = outcomes.iter().find(|o| o.turns_played == 0) {
        return Err(Error::InvalidArgument(format!(
            "task {} has no recorded turn",
            o.task_id
        )));
    }
    Ok(())
}

/// Fraction of tasks solved at any turn `≤ k`.
pub fn accuracy(outcomes: &[TaskOutcome], k: usize) -> Result<f64> {
    ensure_outcomes(outcomes)?;
    let solved = outcomes.iter().filter(|o| o.solved_by(k)).count();
    Ok(solved as f64 / outcomes.len() as f64)
}

/// Percentage of first-turn failures solved by turn `k`; `None` without
/// first-turn failures.
pub fn correction_uplift(outcomes: &[TaskOutcome], k: usize) -> Result<Option<f64>> {
    ensure_outcomes(outcomes)?;
    let failed: Vec<_> = outcomes.iter().filter(|o| o.solved_turn != Some(1)).collect();
    if failed.is_empty() {
        return Ok(None);
    }
    let recovered = failed.iter().filter(|o| o.solved_by(k)).count();
    Ok(Some(recovered as f64 / failed.len() as f64 * 100.0))
}

/// Count of tasks first solved at each turn `1..=k`.
pub fn newly_solved(outcomes: &[TaskOutcome], k: usize) -> Vec<usize> {
    let mut counts = vec![0; k];
    for t in outcomes.iter().filter_map(|o| o.solved_turn) {
        if (1..=k).contains(&t) {
            counts[t - 1] += 1;
        }
    }
    counts
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsSummary {
    pub accuracy: f64,
    pub correction_uplift: Option<f64>,
    pub newly_solved: Vec<usize>,
    pub mean_turns_to_solve: Option<f64>,
}

pub fn summarize(outcomes: &[TaskOutcome], k: usize) -> Result<MetricsSummary> {
    let solved: Vec<f64> = outcomes
        .iter()
        .filter(|o| o.solved_by(k))
        .filter_map(|o| o.solved_turn.map(|t| t as f64))
        .collect();
    Ok(MetricsSummary {
        accuracy: accuracy(outcomes, k)?,
        correction_uplift: correction_uplift(outcomes, k)?,
        newly_solved: newly_solved(outcomes, k),
        mean_turns_to_solve: (!solved.is_empty()).then(|| solved.iter().sum::<f64>() / solved.len() as f64),
    })
}
