//! Turn-wise adaptation: sample, receive feedback, build the re-weighted
//! target, and take one linearized least-squares step toward it.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{ensure_len, Error, Result};
use crate::oracle::{FeedbackOracle, TaskInstance};
use crate::policy::{argmax, dot, sample_index, ParameterVector, PolicyFamily, PolicyModel};
use crate::solver::{solve_normal_equations, FnOperator, RowOperator, SolverConfig};
use crate::target::{practical_target, practical_target_distribution, residual, RewardSignal};
use crate::theory::kl;

/// Which coordinates a turn is allowed to change.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UpdateMechanism {
    /// Every policy parameter.
    FullParameter,
    /// Low-rank factors `A (d×rank)`, `B (rank×|Y|)` added to the head as
    /// `(alpha/rank)·A·B`.
    LowRankHead { rank: usize, alpha: f64 },
    /// Additive shift on the hidden activation feeding the head (mlp only).
    HiddenShift,
}

impl UpdateMechanism {
    pub const DEFAULT_RANK: usize = 1;
    pub const DEFAULT_ALPHA: f64 = 8.0;

    pub fn low_rank_default() -> Self {
        UpdateMechanism::LowRankHead {
            rank: Self::DEFAULT_RANK,
            alpha: Self::DEFAULT_ALPHA,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            UpdateMechanism::FullParameter => "full-parameter",
            UpdateMechanism::LowRankHead { .. } => "low-rank-head",
            UpdateMechanism::HiddenShift => "hidden-shift",
        }
    }

    /// Checks that the mechanism can be applied to `model`.
    pub fn validate(&self, model: &PolicyModel) -> Result<()> {
        match *self {
            UpdateMechanism::FullParameter => Ok(()),
            UpdateMechanism::LowRankHead { rank, alpha } => {
                if rank == 0 || !alpha.is_finite() {
                    return Err(Error::Config(format!(
                        "low-rank head needs rank >= 1 and finite alpha (rank {rank}, alpha {alpha})"
                    )));
                }
                if model.head_input_dim().is_none() {
                    return Err(Error::Config(format!(
                        "low-rank head requires a linear head, {} has none",
                        model.family()
                    )));
                }
                Ok(())
            }
            UpdateMechanism::HiddenShift => {
                if model.family() != PolicyFamily::MlpSoftmax {
                    return Err(Error::Config(format!(
                        "hidden-shift requires mlp-softmax, got {}",
                        model.family()
                    )));
                }
                Ok(())
            }
        }
    }

    /// Length of the adapted vector for `model`.
    pub fn adapted_dim(&self, model: &PolicyModel) -> Result<usize> {
        self.validate(model)?;
        Ok(match *self {
            UpdateMechanism::FullParameter => model.param_count(),
            UpdateMechanism::LowRankHead { rank, .. } => {
                let d = model.head_input_dim().unwrap_or(0);
                rank * (d + model.response_count())
            }
            UpdateMechanism::HiddenShift => model.hidden_dim(),
        })
    }
}

impl fmt::Display for UpdateMechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for UpdateMechanism {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full-parameter" | "full" => Ok(UpdateMechanism::FullParameter),
            "low-rank-head" | "low-rank" | "lora" => Ok(UpdateMechanism::low_rank_default()),
            "hidden-shift" => Ok(UpdateMechanism::HiddenShift),
            other => Err(Error::Config(format!("unknown update mechanism `{other}`"))),
        }
    }
}

/// Parameters actually used for a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveParams {
    pub params: ParameterVector,
    pub hidden_shift: Option<Vec<f64>>,
}

/// Combines the frozen base with the adapted vector.
///
/// Full-parameter replaces the base; low-rank adds `(alpha/rank)·A·B` to
/// `head.weight`; hidden-shift leaves the base untouched and carries the shift.
pub fn effective_params(
    mechanism: &UpdateMechanism,
    model: &PolicyModel,
    base: &ParameterVector,
    adapted: &[f64],
) -> Result<EffectiveParams> {
    ensure_len(model.param_count(), base.len())?;
    ensure_len(mechanism.adapted_dim(model)?, adapted.len())?;
    match *mechanism {
        UpdateMechanism::FullParameter => Ok(EffectiveParams {
            params: ParameterVector::new(adapted.to_vec())?,
            hidden_shift: None,
        }),
        UpdateMechanism::LowRankHead { rank, alpha } => {
            let d = model.head_input_dim().unwrap_or(0);
            let v = model.response_count();
            let (a, b) = adapted.split_at(d * rank);
            let scale = alpha / rank as f64;
            let head = model
                .layout()
                .block("head.weight")
                .expect("validated: model has a head")
                .clone();
            let mut params = base.clone().into_inner();
            let w = &mut params[head.range()];
            for i in 0..d {
                for q in 0..rank {
                    let aiq = a[i * rank + q];
                    if aiq == 0.0 {
                        continue;
                    }
                    let b_row = &b[q * v..(q + 1) * v];
                    for j in 0..v {
                        w[i * v + j] += scale * aiq * b_row[j];
                    }
                }
            }
            Ok(EffectiveParams {
                params: ParameterVector::new(params)?,
                hidden_shift: None,
            })
        }
        UpdateMechanism::HiddenShift => Ok(EffectiveParams {
            params: base.clone(),
            hidden_shift: Some(adapted.to_vec()),
        }),
    }
}

/// Initial adapted vector: the base itself, zero shift, or `A ~ U(−0.5, 0.5)`
/// with `B = 0` so the adapter starts as an exact no-op.
pub fn initial_adapted(
    mechanism: &UpdateMechanism,
    model: &PolicyModel,
    base: &ParameterVector,
    adapter_seed: u64,
) -> Result<Vec<f64>> {
    let dim = mechanism.adapted_dim(model)?;
    Ok(match *mechanism {
        UpdateMechanism::FullParameter => base.as_slice().to_vec(),
        UpdateMechanism::HiddenShift => vec![0.0; dim],
        UpdateMechanism::LowRankHead { rank, .. } => {
            let d = model.head_input_dim().unwrap_or(0);
            let mut rng = ChaCha8Rng::seed_from_u64(adapter_seed);
            let mut v: Vec<f64> = (0..d * rank).map(|_| rng.random_range(-0.5..0.5)).collect();
            v.resize(dim, 0.0);
            v
        }
    })
}

/// The policy at one context viewed as a function of the adapted vector.
pub struct AdaptedPolicy<'a> {
    pub model: &'a PolicyModel,
    pub base: &'a ParameterVector,
    pub mechanism: UpdateMechanism,
    pub context: usize,
}

impl AdaptedPolicy<'_> {
    pub fn dim(&self) -> Result<usize> {
        self.mechanism.adapted_dim(self.model)
    }

    pub fn distribution(&self, adapted: &[f64]) -> Result<Vec<f64>> {
        let eff = effective_params(&self.mechanism, self.model, self.base, adapted)?;
        self.model
            .distribution_shifted(eff.params.as_slice(), self.context, eff.hidden_shift.as_deref())
    }

    /// `∇ π(y|x)` with respect to the adapted coordinates.
    pub fn grad_prob(&self, adapted: &[f64], y: usize) -> Result<Vec<f64>> {
        let eff = effective_params(&self.mechanism, self.model, self.base, adapted)?;
        let g = self
            .model
            .grad_prob_shifted(eff.params.as_slice(), self.context, y, eff.hidden_shift.as_deref())?;
        match self.mechanism {
            UpdateMechanism::FullParameter => Ok(g.params),
            UpdateMechanism::HiddenShift => Ok(g.head_input),
            UpdateMechanism::LowRankHead { rank, alpha } => {
                let d = self.model.head_input_dim().unwrap_or(0);
                let v = self.model.response_count();
                let scale = alpha / rank as f64;
                let head = self.model.layout().block("head.weight").expect("validated");
                let gw = &g.params[head.range()];
                let (a, b) = adapted.split_at(d * rank);
                let mut out = vec![0.0; adapted.len()];
                let (ga, gb) = out.split_at_mut(d * rank);
                // ∂π/∂A[i,q] = s·Σ_j ∂π/∂W[i,j]·B[q,j];  ∂π/∂B[q,j] = s·Σ_i A[i,q]·∂π/∂W[i,j]
                for i in 0..d {
                    let gw_row = &gw[i * v..(i + 1) * v];
                    for q in 0..rank {
                        let b_row = &b[q * v..(q + 1) * v];
                        ga[i * rank + q] = scale * dot(gw_row, b_row);
                        let aiq = a[i * rank + q];
                        for j in 0..v {
                            gb[q * v + j] += scale * aiq * gw_row[j];
                        }
                    }
                }
                Ok(out)
            }
        }
    }

    /// `⟨∇ π(y|x), v⟩`; forward-mode for full-parameter updates.
    pub fn jvp(&self, adapted: &[f64], y: usize, v: &[f64]) -> Result<f64> {
        match self.mechanism {
            UpdateMechanism::FullParameter => self.model.jvp(adapted, self.context, y, v),
            _ => {
                ensure_len(adapted.len(), v.len())?;
                Ok(dot(&self.grad_prob(adapted, y)?, v))
            }
        }
    }
}

/// How the residual is formed from the target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TargetMode {
    /// One residual at the observed response.
    #[default]
    SingleCoordinate,
    /// One residual per response, against the full single-sample target.
    FullVector,
}

/// Adaptation rule applied after a non-success turn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    /// No parameter change.
    Static,
    /// `θ ← θ + η·r·∇ log π(y_k|x)`.
    RlBaseline { step_size: f64 },
    /// One Gauss–Newton step toward the re-weighted target.
    Rosa,
}

impl Method {
    pub const DEFAULT_RL_STEP: f64 = 0.1;

    pub fn name(&self) -> &'static str {
        match self {
            Method::Static => "static",
            Method::RlBaseline { .. } => "rl",
            Method::Rosa => "rosa",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "static" => Ok(Method::Static),
            "rl" => Ok(Method::RlBaseline {
                step_size: Method::DEFAULT_RL_STEP,
            }),
            "rosa" => Ok(Method::Rosa),
            other => Err(Error::Config(format!("unknown method `{other}`"))),
        }
    }
}

/// Per-session settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionConfig {
    pub method: Method,
    pub mechanism: UpdateMechanism,
    pub beta: f64,
    pub max_turns: usize,
    pub solver: SolverConfig,
    pub greedy: bool,
    pub target_mode: TargetMode,
    /// Apply updates on +1 feedback and keep going instead of terminating.
    /// Only for theory checks.
    pub positive_updates: bool,
    pub adapter_seed: u64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            method: Method::Rosa,
            mechanism: UpdateMechanism::FullParameter,
            beta: 1.0,
            max_turns: 10,
            solver: SolverConfig::default(),
            greedy: false,
            target_mode: TargetMode::SingleCoordinate,
            positive_updates: false,
            adapter_seed: 0,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(Error::Config(format!("beta must be positive, got {}", self.beta)));
        }
        if self.max_turns == 0 {
            return Err(Error::Config("max_turns must be at least 1".into()));
        }
        if let Method::RlBaseline { step_size } = self.method {
            if !(step_size >= 0.0) || !step_size.is_finite() {
                return Err(Error::Config(format!("RL step size must be >= 0, got {step_size}")));
            }
        }
        self.solver.validate()
    }
}

/// One interaction turn.
#[derive(Debug, Clone, PartialEq)]
pub struct TurnRecord {
    pub turn: usize,
    pub response: usize,
    pub reward: f64,
    pub prob_before: f64,
    pub prob_after: f64,
    pub z_k: Option<f64>,
    pub target_prob: Option<f64>,
    pub delta_norm: f64,
    pub solver_iterations: usize,
    pub solver_converged: bool,
    /// Zero gradient: the update was skipped.
    pub degenerate: bool,
    /// `KL(π*_user ‖ π)` after this turn, when the task has a user policy.
    pub kl_to_user: Option<f64>,
    pub inference_time: Duration,
    pub update_time: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SessionStatus {
    Running,
    Solved,
    Exhausted,
    Aborted(String),
}

/// Output of one adaptation step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub delta: Vec<f64>,
    pub adapted: Vec<f64>,
    pub record: TurnRecord,
}

/// State of one multi-turn interaction on one task.
#[derive(Debug, Clone)]
pub struct InteractionSession<'m> {
    pub task: TaskInstance,
    model: &'m PolicyModel,
    base: ParameterVector,
    adapted: Vec<f64>,
    config: SessionConfig,
    turn: usize,
    history: Vec<TurnRecord>,
    status: SessionStatus,
}

impl<'m> InteractionSession<'m> {
    pub fn new(
        task: TaskInstance,
        model: &'m PolicyModel,
        base: ParameterVector,
        config: SessionConfig,
    ) -> Result<Self> {
        let adapted = initial_adapted(&config.mechanism, model, &base, config.adapter_seed)?;
        Self::with_adapted(task, model, base, adapted, config)
    }

    /// Starts from a given adapted vector, e.g. carried over from a previous task.
    pub fn with_adapted(
        task: TaskInstance,
        model: &'m PolicyModel,
        base: ParameterVector,
        adapted: Vec<f64>,
        config: SessionConfig,
    ) -> Result<Self> {
        config.validate()?;
        ensure_len(model.param_count(), base.len())?;
        ensure_len(config.mechanism.adapted_dim(model)?, adapted.len())?;
        if task.context >= model.context_count() {
            return Err(Error::OutOfRange {
                what: "context",
                index: task.context,
                limit: model.context_count(),
            });
        }
        if task.response_count != model.response_count() {
            return Err(Error::LengthMismatch {
                expected: model.response_count(),
                got: task.response_count,
            });
        }
        Ok(InteractionSession {
            task,
            model,
            base,
            adapted,
            config,
            turn: 0,
            history: Vec::new(),
            status: SessionStatus::Running,
        })
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn base(&self) -> &ParameterVector {
        &self.base
    }

    pub fn adapted(&self) -> &[f64] {
        &self.adapted
    }

    pub fn history(&self) -> &[TurnRecord] {
        &self.history
    }

    pub fn status(&self) -> &SessionStatus {
        &self.status
    }

    pub fn turn(&self) -> usize {
        self.turn
    }

    pub fn is_finished(&self) -> bool {
        self.status != SessionStatus::Running
    }

    pub fn solved_turn(&self) -> Option<usize> {
        (self.status == SessionStatus::Solved)
            .then(|| self.history.last().map(|r| r.turn))
            .flatten()
    }

    pub fn policy(&self) -> AdaptedPolicy<'_> {
        AdaptedPolicy {
            model: self.model,
            base: &self.base,
            mechanism: self.config.mechanism,
            context: self.task.context,
        }
    }

    pub fn effective(&self) -> Result<EffectiveParams> {
        effective_params(&self.config.mechanism, self.model, &self.base, &self.adapted)
    }

    pub fn distribution(&self) -> Result<Vec<f64>> {
        self.policy().distribution(&self.adapted)
    }

    fn kl_to_user(&self, dist: &[f64]) -> Option<f64> {
        self.task.user_policy.as_ref().and_then(|u| kl(u, dist).ok())
    }

    fn begin_turn(&mut self) -> Result<usize> {
        if self.is_finished() {
            return Err(Error::InvalidArgument("session already finished".into()));
        }
        self.turn += 1;
        Ok(self.turn)
    }

    fn finish_turn(&mut self, record: TurnRecord) {
        let success = record.reward == 1.0;
        self.history.push(record);
        if success && !self.config.positive_updates {
            self.status = SessionStatus::Solved;
        } else if self.turn >= self.config.max_turns {
            self.status = if success {
                SessionStatus::Solved
            } else {
                SessionStatus::Exhausted
            };
        }
    }

    /// Draws the next response (stochastic or greedy).
    pub fn generate<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<usize> {
        let dist = self.distribution()?;
        if self.config.greedy {
            Ok(argmax(&dist))
        } else {
            sample_index(&dist, rng)
        }
    }

    /// Records a turn without changing parameters.
    pub fn observe(&mut self, y_k: usize, r: RewardSignal) -> Result<TurnRecord> {
        let turn = self.begin_turn()?;
        let dist = self.distribution()?;
        let p = *dist.get(y_k).ok_or(Error::OutOfRange {
            what: "response",
            index: y_k,
            limit: dist.len(),
        })?;
        let record = TurnRecord {
            turn,
            response: y_k,
            reward: r.value(),
            prob_before: p,
            prob_after: p,
            z_k: None,
            target_prob: None,
            delta_norm: 0.0,
            solver_iterations: 0,
            solver_converged: true,
            degenerate: false,
            kl_to_user: self.kl_to_user(&dist),
            inference_time: Duration::ZERO,
            update_time: Duration::ZERO,
        };
        self.finish_turn(record.clone());
        Ok(record)
    }

    /// One optimum-referenced step: target, residual, CG solve, update.
    pub fn adapt_step(&mut self, y_k: usize, r: RewardSignal) -> Result<StepOutcome> {
        let started = Instant::now();
        let turn = self.begin_turn()?;
        let policy = self.policy();
        let dim = policy.dim()?;
        let dist = policy.distribution(&self.adapted)?;
        let p = *dist.get(y_k).ok_or(Error::OutOfRange {
            what: "response",
            index: y_k,
            limit: dist.len(),
        })?;
        let target = practical_target(p, r.value(), self.config.beta)?;

        let (delta, iterations, converged, degenerate) = match self.config.target_mode {
            TargetMode::SingleCoordinate => {
                let g = policy.grad_prob(&self.adapted, y_k)?;
                if dot(&g, &g) == 0.0 {
                    (vec![0.0; dim], 0, true, true)
                } else {
                    let d = [residual(&target, p)];
                    let adapted = &self.adapted;
                    let op = FnOperator::new(
                        dim,
                        1,
                        |v: &[f64]| vec![policy.jvp(adapted, y_k, v).unwrap_or(f64::NAN)],
                        |s: &[f64]| g.iter().map(|gi| gi * s[0]).collect(),
                    );
                    let sol = solve_normal_equations(&op, &d, &self.config.solver)?;
                    (sol.delta, sol.iterations, sol.converged, false)
                }
            }
            TargetMode::FullVector => {
                let goal = practical_target_distribution(&dist, y_k, r.value(), self.config.beta)?;
                let rows = (0..dist.len())
                    .map(|y| policy.grad_prob(&self.adapted, y))
                    .collect::<Result<Vec<_>>>()?;
                if rows.iter().all(|g| g.iter().all(|&x| x == 0.0)) {
                    (vec![0.0; dim], 0, true, true)
                } else {
                    let d: Vec<f64> = goal.iter().zip(&dist).map(|(t, c)| t - c).collect();
                    let op = RowOperator::new(dim, rows)?;
                    let sol = solve_normal_equations(&op, &d, &self.config.solver)?;
                    (sol.delta, sol.iterations, sol.converged, false)
                }
            }
        };

        let updated = ParameterVector::new(self.adapted.clone())?.add(&delta)?.into_inner();
        self.adapted = updated;
        let after = self.distribution()?;
        let record = TurnRecord {
            turn,
            response: y_k,
            reward: r.value(),
            prob_before: p,
            prob_after: after[y_k],
            z_k: Some(target.z),
            target_prob: Some(target.target_prob),
            delta_norm: dot(&delta, &delta).sqrt(),
            solver_iterations: iterations,
            solver_converged: converged,
            degenerate,
            kl_to_user: self.kl_to_user(&after),
            inference_time: Duration::ZERO,
            update_time: started.elapsed(),
        };
        self.finish_turn(record.clone());
        Ok(StepOutcome {
            delta,
            adapted: self.adapted.clone(),
            record,
        })
    }

    /// Single-sample policy-gradient step `θ ← θ + η·r·∇ log π(y_k|x)`.
    ///
    /// At `θ = θ_{k-1}` the gradient of the KL penalty vanishes, leaving only
    /// the reward term.
    pub fn rl_baseline_step(&mut self, y_k: usize, r: RewardSignal, step_size: f64) -> Result<StepOutcome> {
        if !(step_size >= 0.0) || !step_size.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "step size must be non-negative, got {step_size}"
            )));
        }
        let started = Instant::now();
        let turn = self.begin_turn()?;
        let policy = self.policy();
        let dist = policy.distribution(&self.adapted)?;
        let p = *dist.get(y_k).ok_or(Error::OutOfRange {
            what: "response",
            index: y_k,
            limit: dist.len(),
        })?;
        let g = policy.grad_prob(&self.adapted, y_k)?;
        let degenerate = dot(&g, &g) == 0.0;
        let scale = step_size * r.value() / p;
        let delta: Vec<f64> = g.iter().map(|gi| gi * scale).collect();
        self.adapted = ParameterVector::new(self.adapted.clone())?.add(&delta)?.into_inner();
        let after = self.distribution()?;
        let record = TurnRecord {
            turn,
            response: y_k,
            reward: r.value(),
            prob_before: p,
            prob_after: after[y_k],
            z_k: None,
            target_prob: None,
            delta_norm: dot(&delta, &delta).sqrt(),
            solver_iterations: 0,
            solver_converged: true,
            degenerate,
            kl_to_user: self.kl_to_user(&after),
            inference_time: Duration::ZERO,
            update_time: started.elapsed(),
        };
        self.finish_turn(record.clone());
        Ok(StepOutcome {
            delta,
            adapted: self.adapted.clone(),
            record,
        })
    }

    /// Runs one full turn: generate, ask the oracle, update per the method.
    ///
    /// An oracle error marks the session aborted and is returned.
    pub fn play_turn<O, R>(&mut self, oracle: &mut O, rng: &mut R) -> Result<TurnRecord>
    where
        O: FeedbackOracle + ?Sized,
        R: Rng + ?Sized,
    {
        let started = Instant::now();
        let y = self.generate(rng)?;
        let inference_time = started.elapsed();
        let r = match oracle.feedback(&self.task, self.turn + 1, y) {
            Ok(r) => r,
            Err(e) => {
                self.status = SessionStatus::Aborted(e.to_string());
                return Err(e);
            }
        };
        let update = !r.is_success() || self.config.positive_updates;
        let mut record = match (self.config.method, update) {
            (Method::Rosa, true) => self.adapt_step(y, r)?.record,
            (Method::RlBaseline { step_size }, true) => self.rl_baseline_step(y, r, step_size)?.record,
            _ => self.observe(y, r)?,
        };
        record.inference_time = inference_time;
        if let Some(last) = self.history.last_mut() {
            last.inference_time = inference_time;
        }
        Ok(record)
    }
}

/// Runs a session until the first success or `max_turns`.
///
/// Oracle failures end the session with [`SessionStatus::Aborted`]; numeric
/// errors are returned.
pub fn run_session<'m, O, R>(
    task: TaskInstance,
    model: &'m PolicyModel,
    base: ParameterVector,
    config: SessionConfig,
    oracle: &mut O,
    rng: &mut R,
) -> Result<InteractionSession<'m>>
where
    O: FeedbackOracle + ?Sized,
    R: Rng + ?Sized,
{
    let mut session = InteractionSession::new(task, model, base, config)?;
    drive(&mut session, oracle, rng)?;
    Ok(session)
}

/// Plays turns on an existing session until it finishes.
pub fn drive<O, R>(session: &mut InteractionSession<'_>, oracle: &mut O, rng: &mut R) -> Result<()>
where
    O: FeedbackOracle + ?Sized,
    R: Rng + ?Sized,
{
    while !session.is_finished() {
        match session.play_turn(oracle, rng) {
            Ok(_) => {}
            Err(Error::Aborted(_)) => break,
            Err(e) => return Err(e),
        }
    }
    Ok(())
}
