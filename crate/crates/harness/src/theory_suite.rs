//! Batch runs of the KL-reduction checks with holds-rates per check.
//!
//! Gated checks are the ones the bounds actually claim. Diagnostic rows
//! (the cumulative bound under always-rewarded user samples and the
//! inexact-update relation) are measured and reported without a verdict.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rosa_core::engine::{InteractionSession, SessionConfig};
use rosa_core::oracle::{RuleOracle, TaskInstance};
use rosa_core::theory::{
    check_cumulative, check_monotonic, check_unified, estimate_lipschitz, kl, linearized_trace, simulate_exact_trace,
    BoundReport, LipschitzEstimate, ParamPair, TraceConvention,
};
use rosa_core::PolicyModel;

use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::output::{fmt_f64, header, OutputSet};
use crate::seeds::{stream, Domain};

/// Aggregate of one check family.
#[derive(Debug, Clone, PartialEq)]
pub struct HoldsRate {
    pub check: &'static str,
    /// Whether the check is a claimed bound rather than a diagnostic.
    pub gated: bool,
    /// Number of units (instances, traces or sessions).
    pub units: usize,
    /// Units where every row held.
    pub units_holding: usize,
    pub min_slack: f64,
}

impl HoldsRate {
    fn new(check: &'static str, gated: bool) -> Self {
        HoldsRate {
            check,
            gated,
            units: 0,
            units_holding: 0,
            min_slack: f64::INFINITY,
        }
    }

    fn add(&mut self, holds: bool, slack: f64) {
        self.units += 1;
        self.units_holding += usize::from(holds);
        self.min_slack = self.min_slack.min(slack);
    }

    pub fn rate(&self) -> f64 {
        if self.units == 0 {
            return 0.0;
        }
        self.units_holding as f64 / self.units as f64
    }
}

/// One single-step instance.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRow {
    pub instance: usize,
    pub block: StepBlock,
    pub responses: usize,
    pub y_k: usize,
    pub r: f64,
    pub beta: f64,
    pub user_mass: f64,
    pub measured: f64,
    pub predicted: f64,
    pub identity_holds: bool,
    /// Bound `−user[y_k]/β` (monotonic) or `0` (zero-mass strict decrease).
    pub rhs: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundRow {
    pub check: &'static str,
    pub unit: usize,
    pub k: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionLipschitz {
    pub session: usize,
    pub estimate: LipschitzEstimate,
    /// Worst slack of the unified bound over the session.
    pub min_slack: f64,
    /// Worst slack of `(L̂/2)‖Δθ‖² − KL(π_k ‖ π_{k+1})` along the visited steps.
    pub assumption_slack: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TheoryReport {
    pub rates: Vec<HoldsRate>,
    pub steps: Vec<StepRow>,
    pub bounds: Vec<BoundRow>,
    pub lipschitz: Vec<SessionLipschitz>,
}

impl TheoryReport {
    pub fn rate(&self, check: &str) -> Option<&HoldsRate> {
        self.rates.iter().find(|r| r.check == check)
    }
}

pub const IDENTITY: &str = "identity";
pub const MONOTONIC: &str = "monotonic";
pub const ZERO_MASS_DECREASE: &str = "zero-mass-decrease";
pub const CUMULATIVE: &str = "cumulative";
pub const CUMULATIVE_USER_REWARDED: &str = "cumulative-user-rewarded";
pub const UNIFIED: &str = "unified";
pub const INEXACT_UPDATE: &str = "inexact-update";

fn random_distribution<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

/// Distribution supported on a random subset; `exclude` is kept at zero.
fn sparse_distribution<R: Rng>(n: usize, exclude: Option<usize>, rng: &mut R) -> Vec<f64> {
    loop {
        let w: Vec<f64> = (0..n)
            .map(|i| {
                if Some(i) == exclude || rng.random_bool(0.4) {
                    0.0
                } else {
                    rng.random_range(0.01..1.0)
                }
            })
            .collect();
        let s: f64 = w.iter().sum();
        if s > 0.0 {
            return w.into_iter().map(|x| x / s).collect();
        }
    }
}

/// Random single-step instance: `(user, prev, y_k, β)`.
pub fn random_step<R: Rng>(zero_mass: bool, rng: &mut R) -> (Vec<f64>, Vec<f64>, usize, f64) {
    let n = rng.random_range(2..=10);
    let prev = random_distribution(n, rng);
    let y = rng.random_range(0..n);
    let user = if zero_mass {
        sparse_distribution(n, Some(y), rng)
    } else {
        sparse_distribution(n, None, rng)
    };
    (user, prev, y, rng.random_range(0.25..1.75))
}

/// Which claim a single-step instance exercises.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepBlock {
    /// Both reward signs, identity only.
    Identity,
    /// `r = +1`, inequality `ΔKL ≤ −user[y_k]/β`.
    Monotonic,
    /// `r = −1` on a response without user mass, strict decrease.
    ZeroMass,
}

/// Single-step instances: identity, monotonic and zero-mass blocks of
/// `theory.instances` each.
pub fn step_checks(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<StepRow>> {
    let n = cfg.theory.instances;
    (0..3 * n)
        .into_par_iter()
        .map(|i| {
            let block = [StepBlock::Identity, StepBlock::Monotonic, StepBlock::ZeroMass][i / n];
            let mut rng = stream(seed, Domain::Theory, i as u64);
            let (user, prev, y, beta) = random_step(block == StepBlock::ZeroMass, &mut rng);
            let r = match block {
                StepBlock::Identity if i % 2 == 1 => 1.0,
                StepBlock::Monotonic => 1.0,
                _ => -1.0,
            };
            let check = check_monotonic(&user, &prev, y, r, beta)?;
            let (rhs, holds) = match block {
                StepBlock::ZeroMass => (0.0, check.measured < 0.0),
                _ => (check.inequality.rhs[0], check.inequality.holds[0]),
            };
            Ok(StepRow {
                instance: i,
                block,
                responses: prev.len(),
                y_k: y,
                r,
                beta,
                user_mass: user[y],
                measured: check.measured,
                predicted: check.predicted,
                identity_holds: check.identity_holds,
                rhs,
                holds,
            })
        })
        .collect()
}

fn bound_rows(check: &'static str, unit: usize, report: &BoundReport) -> Vec<BoundRow> {
    (0..report.len())
        .map(|k| BoundRow {
            check,
            unit,
            k,
            lhs: report.lhs[k],
            rhs: report.rhs[k],
            holds: report.holds[k],
            slack: report.slack[k],
        })
        .collect()
}

/// Exact-update traces under both reward conventions.
pub fn cumulative_checks(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<BoundRow>> {
    let offset = 3 * cfg.theory.instances as u64;
    let rows = (0..cfg.theory.traces)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream(seed, Domain::Theory, offset + t as u64);
            let n = rng.random_range(2..=10);
            let initial = random_distribution(n, &mut rng);
            let user = sparse_distribution(n, None, &mut rng);
            let beta = rng.random_range(0.25..1.75);
            let mut rows = Vec::new();
            for (name, convention) in [
                (CUMULATIVE, TraceConvention::FeedbackLoop),
                (CUMULATIVE_USER_REWARDED, TraceConvention::UserSamplesRewarded),
            ] {
                let trace = simulate_exact_trace(&initial, &user, beta, cfg.theory.trace_turns, convention, &mut rng)?;
                rows.extend(bound_rows(name, t, &check_cumulative(&trace, &user, beta)?));
            }
            Ok(rows)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(rows.concat())
}

/// Pairs around the visited iterates: `θ` is an iterate plus uniform noise
/// of width `0.1`, `θ'` moves from `θ` along a random direction by up to twice
/// the largest recorded step.
fn region_sampler<'a>(
    iterates: &'a [Vec<f64>],
    max_step: f64,
    rng: &'a mut ChaCha8Rng,
) -> impl FnMut() -> ParamPair + 'a {
    let reach = 2.0 * max_step.max(1e-3);
    move || {
        let base = &iterates[rng.random_range(0..iterates.len())];
        let theta: Vec<f64> = base.iter().map(|t| t + rng.random_range(-0.1..0.1)).collect();
        let dir: Vec<f64> = theta.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm = dir.iter().map(|d| d * d).sum::<f64>().sqrt().max(1e-300);
        let len = rng.random_range(0.0..reach);
        let theta_prime = theta.iter().zip(&dir).map(|(t, d)| t + d / norm * len).collect();
        ParamPair {
            theta,
            theta_prime,
            context: 0,
        }
    }
}

/// Linearized MLP sessions with a per-session Lipschitz estimate.
pub fn unified_checks(cfg: &ExperimentConfig, seed: u64) -> Result<(Vec<BoundRow>, Vec<SessionLipschitz>)> {
    let offset = 3 * cfg.theory.instances as u64 + cfg.theory.traces as u64;
    let results = (0..cfg.theory.sessions)
        .into_par_iter()
        .map(|s| {
            let mut rng = stream(seed, Domain::Theory, offset + s as u64);
            let (feature_dim, hidden, responses) = (3, 6, 5);
            let features: Vec<f64> = (0..feature_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let model = PolicyModel::mlp(features, feature_dim, hidden, responses)?;
            let base = model.init_params(&mut rng);
            let truth = rng.random_range(0..responses);
            let mut user = vec![0.0; responses];
            user[truth] = 1.0;
            let task = TaskInstance::new(s, 0, responses, truth)?.with_user_policy(user.clone())?;
            let beta = 1.0;
            let sc = SessionConfig {
                beta,
                max_turns: cfg.turns,
                solver: cfg.solver,
                target_mode: cfg.target_mode,
                ..SessionConfig::default()
            };
            let mut session = InteractionSession::new(task, &model, base, sc)?;
            let trace = linearized_trace(&mut session, &mut RuleOracle, &mut rng)?;
            let max_step = trace.delta_norms.iter().copied().fold(0.0, f64::max);
            let estimate = {
                let sampler = region_sampler(&trace.iterates, max_step, &mut rng);
                estimate_lipschitz(|t, x| model.distribution(t, x), sampler, cfg.theory.lipschitz_samples)?
            };
            let (unified, inexact) = check_unified(&trace, &user, beta, estimate.estimate)?;
            let mut assumption_slack = f64::INFINITY;
            for w in trace.iterates.windows(2) {
                let step: f64 = w[0].iter().zip(&w[1]).map(|(a, b)| (a - b) * (a - b)).sum();
                let d = kl(&model.distribution(&w[0], 0)?, &model.distribution(&w[1], 0)?)?;
                assumption_slack = assumption_slack.min(0.5 * estimate.estimate * step - d);
            }
            let mut rows = bound_rows(UNIFIED, s, &unified);
            rows.extend(bound_rows(INEXACT_UPDATE, s, &inexact));
            Ok((
                rows,
                SessionLipschitz {
                    session: s,
                    estimate,
                    min_slack: unified.min_slack(),
                    assumption_slack,
                },
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let (rows, lips): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    Ok((rows.concat(), lips))
}

/// A unit holds when every one of its rows holds.
pub fn unit_rates(check: &'static str, gated: bool, rows: &[BoundRow]) -> HoldsRate {
    let mut rate = HoldsRate::new(check, gated);
    let mut current: Option<(usize, bool, f64)> = None;
    for row in rows.iter().filter(|r| r.check == check) {
        match &mut current {
            Some((unit, holds, slack)) if *unit == row.unit => {
                *holds &= row.holds;
                *slack = slack.min(row.slack);
            }
            _ => {
                if let Some((_, h, s)) = current.take() {
                    rate.add(h, s);
                }
                current = Some((row.unit, row.holds, row.slack));
            }
        }
    }
    if let Some((_, h, s)) = current {
        rate.add(h, s);
    }
    rate
}

/// Identity, monotonic and zero-mass rates from single-step rows.
pub fn step_rates(steps: &[StepRow]) -> Vec<HoldsRate> {
    let mut identity = HoldsRate::new(IDENTITY, true);
    let mut monotonic = HoldsRate::new(MONOTONIC, true);
    let mut zero_mass = HoldsRate::new(ZERO_MASS_DECREASE, true);
    for row in steps {
        match row.block {
            // recorded slack is minus the identity error
            StepBlock::Identity => identity.add(row.identity_holds, -(row.measured - row.predicted).abs()),
            StepBlock::Monotonic => monotonic.add(row.holds, row.rhs - row.measured),
            StepBlock::ZeroMass => zero_mass.add(row.holds, -row.measured),
        }
    }
    vec![identity, monotonic, zero_mass]
}

/// Runs every check family without touching the filesystem.
pub fn simulate_theory(cfg: &ExperimentConfig) -> Result<TheoryReport> {
    cfg.validate()?;
    let seed = cfg.seeds[0];
    let steps = step_checks(cfg, seed)?;
    let mut bounds = cumulative_checks(cfg, seed)?;
    let (unified, lipschitz) = unified_checks(cfg, seed)?;
    bounds.extend(unified);

    let mut rates = step_rates(&steps);
    rates.extend([
        unit_rates(CUMULATIVE, true, &bounds),
        unit_rates(CUMULATIVE_USER_REWARDED, false, &bounds),
        unit_rates(UNIFIED, true, &bounds),
        unit_rates(INEXACT_UPDATE, false, &bounds),
    ]);
    Ok(TheoryReport {
        rates,
        steps,
        bounds,
        lipschitz,
    })
}

/// Runs the checks and writes the theory CSVs into `cfg.out`.
pub fn run_theory_suite(cfg: &ExperimentConfig) -> Result<TheoryReport> {
    let report = simulate_theory(cfg)?;
    let mut set = OutputSet::create(&cfg.out)?;
    set.write_csv(
        "theory_steps.csv",
        &header(&[
            "instance",
            "block",
            "responses",
            "y_k",
            "reward",
            "beta",
            "user_mass",
            "measured_delta_kl",
            "predicted_delta_kl",
            "identity_holds",
            "rhs",
            "holds",
        ]),
        report.steps.iter().map(|r| {
            vec![
                r.instance.to_string(),
                format!("{:?}", r.block).to_lowercase(),
                r.responses.to_string(),
                r.y_k.to_string(),
                fmt_f64(r.r),
                fmt_f64(r.beta),
                fmt_f64(r.user_mass),
                fmt_f64(r.measured),
                fmt_f64(r.predicted),
                r.identity_holds.to_string(),
                fmt_f64(r.rhs),
                r.holds.to_string(),
            ]
        }),
    )?;
    set.write_csv(
        "theory_bounds.csv",
        &header(&["check", "unit", "k", "lhs", "rhs", "holds", "slack"]),
        report.bounds.iter().map(|r| {
            vec![
                r.check.to_string(),
                r.unit.to_string(),
                r.k.to_string(),
                fmt_f64(r.lhs),
                fmt_f64(r.rhs),
                r.holds.to_string(),
                fmt_f64(r.slack),
            ]
        }),
    )?;
    set.write_csv(
        "theory_lipschitz.csv",
        &header(&[
            "session",
            "max_ratio",
            "estimate",
            "pairs_used",
            "pairs_skipped",
            "min_slack",
            "assumption_slack",
        ]),
        report.lipschitz.iter().map(|l| {
            vec![
                l.session.to_string(),
                fmt_f64(l.estimate.max_ratio),
                fmt_f64(l.estimate.estimate),
                l.estimate.pairs_used.to_string(),
                l.estimate.pairs_skipped.to_string(),
                fmt_f64(l.min_slack),
                fmt_f64(l.assumption_slack),
            ]
        }),
    )?;
    set.write_csv(
        "theory_summary.csv",
        &header(&["check", "gated", "units", "units_holding", "holds_rate", "min_slack"]),
        report.rates.iter().map(|r| {
            vec![
                r.check.to_string(),
                r.gated.to_string(),
                r.units.to_string(),
                r.units_holding.to_string(),
                fmt_f64(r.rate()),
                fmt_f64(r.min_slack),
            ]
        }),
    )?;
    set.commit();
    Ok(report)
}
