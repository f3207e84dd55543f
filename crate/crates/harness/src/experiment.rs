//! Method comparison runs and β sweeps.

use std::path::PathBuf;

use rayon::prelude::*;
use rosa_core::engine::{drive, InteractionSession, Method, SessionConfig, TurnRecord};
use rosa_core::oracle::{DenseOracle, FeedbackOracle, RuleOracle, TaskInstance};
use rosa_core::target::RewardSignal;
use rosa_core::theory::{summarize, MetricsSummary, TaskOutcome};

use crate::config::{ExperimentConfig, OracleKind};
use crate::error::{HarnessError, Result};
use crate::output::{fmt_f64, fmt_opt, header, OutputSet};
use crate::seeds::{derive_seed, stream, Domain};
use crate::suite::{generate_suite, Suite};

/// Oracle selected by the configuration.
#[derive(Debug, Clone, Copy)]
pub enum SuiteOracle {
    Rule(RuleOracle),
    Dense(DenseOracle),
}

impl SuiteOracle {
    pub fn new(kind: OracleKind) -> Self {
        match kind {
            OracleKind::Rule => SuiteOracle::Rule(RuleOracle),
            OracleKind::Dense { sigma } => SuiteOracle::Dense(DenseOracle { sigma }),
        }
    }
}

impl FeedbackOracle for SuiteOracle {
    fn feedback(&mut self, task: &TaskInstance, turn: usize, response: usize) -> rosa_core::Result<RewardSignal> {
        match self {
            SuiteOracle::Rule(o) => o.feedback(task, turn, response),
            SuiteOracle::Dense(o) => o.feedback(task, turn, response),
        }
    }
}

/// One `turns.csv` row plus its timing counters.
#[derive(Debug, Clone, PartialEq)]
pub struct TurnRow {
    pub task_id: usize,
    pub method: &'static str,
    pub beta: f64,
    pub seed: u64,
    pub record: TurnRecord,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: &'static str,
    pub beta: f64,
    pub seed: u64,
    pub metrics: MetricsSummary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub turns: Vec<TurnRow>,
    pub summaries: Vec<SummaryRow>,
    pub files: Vec<PathBuf>,
}

impl RunOutput {
    pub fn summary(&self, method: &str, beta: f64, seed: u64) -> Option<&SummaryRow> {
        self.summaries
            .iter()
            .find(|s| s.method == method && s.beta == beta && s.seed == seed)
    }
}

/// Session settings for one (method, β, seed, task) cell.
pub fn session_config(cfg: &ExperimentConfig, method: Method, beta: f64, seed: u64, task_id: usize) -> SessionConfig {
    SessionConfig {
        method,
        mechanism: cfg.mechanism,
        beta,
        max_turns: cfg.turns,
        solver: cfg.solver,
        greedy: cfg.greedy,
        target_mode: cfg.target_mode,
        positive_updates: false,
        adapter_seed: derive_seed(seed, Domain::Adapter, task_id as u64),
    }
}

struct TaskResult {
    outcome: TaskOutcome,
    records: Vec<TurnRecord>,
}

fn finish(session: &InteractionSession<'_>) -> TaskResult {
    TaskResult {
        outcome: TaskOutcome {
            task_id: session.task.task_id,
            solved_turn: session.solved_turn(),
            turns_played: session.history().len(),
        },
        records: session.history().to_vec(),
    }
}

fn run_task(
    suite: &Suite,
    cfg: &ExperimentConfig,
    method: Method,
    beta: f64,
    seed: u64,
    task: &TaskInstance,
) -> Result<TaskResult> {
    let sc = session_config(cfg, method, beta, seed, task.task_id);
    let mut session = InteractionSession::new(task.clone(), &suite.model, suite.base.clone(), sc)?;
    let mut rng = stream(seed, Domain::Session, task.task_id as u64);
    drive(&mut session, &mut SuiteOracle::new(cfg.oracle), &mut rng)?;
    Ok(finish(&session))
}

/// Runs the tasks of one cell. With persistence the adapted vector flows
/// from each task into the next, in task order.
fn run_cell(suite: &Suite, cfg: &ExperimentConfig, method: Method, beta: f64, seed: u64) -> Result<Vec<TaskResult>> {
    if cfg.reset_between_tasks {
        return suite
            .tasks
            .par_iter()
            .map(|t| run_task(suite, cfg, method, beta, seed, t))
            .collect();
    }
    let mut carried: Option<Vec<f64>> = None;
    let mut results = Vec::with_capacity(suite.tasks.len());
    for task in &suite.tasks {
        let sc = session_config(cfg, method, beta, seed, task.task_id);
        let mut session = match carried.take() {
            Some(a) => InteractionSession::with_adapted(task.clone(), &suite.model, suite.base.clone(), a, sc)?,
            None => InteractionSession::new(task.clone(), &suite.model, suite.base.clone(), sc)?,
        };
        let mut rng = stream(seed, Domain::Session, task.task_id as u64);
        drive(&mut session, &mut SuiteOracle::new(cfg.oracle), &mut rng)?;
        carried = Some(session.adapted().to_vec());
        results.push(finish(&session));
    }
    Ok(results)
}

/// Runs every (method, β, seed) cell without touching the filesystem.
pub fn simulate(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| HarnessError::Runtime(format!("worker pool: {e}")))?;
    pool.install(|| {
        let suites = cfg
            .seeds
            .par_iter()
            .map(|&s| generate_suite(&cfg.suite, s))
            .collect::<Result<Vec<_>>>()?;
        let mut turns = Vec::new();
        let mut summaries = Vec::new();
        for &method in &cfg.methods {
            for &beta in &cfg.betas {
                for (suite, &seed) in suites.iter().zip(&cfg.seeds) {
                    let results = run_cell(suite, cfg, method, beta, seed)?;
                    let outcomes: Vec<TaskOutcome> = results.iter().map(|r| r.outcome).collect();
                    summaries.push(SummaryRow {
                        method: method.name(),
                        beta,
                        seed,
                        metrics: summarize(&outcomes, cfg.turns)?,
                    });
                    for r in results {
                        turns.extend(r.records.into_iter().map(|record| TurnRow {
                            task_id: r.outcome.task_id,
                            method: method.name(),
                            beta,
                            seed,
                            record,
                        }));
                    }
                }
            }
        }
        Ok(RunOutput {
            turns,
            summaries,
            files: Vec::new(),
        })
    })
}

pub const TURN_COLUMNS: [&str; 13] = [
    "task_id",
    "method",
    "beta",
    "seed",
    "turn",
    "response",
    "reward",
    "prob_before",
    "prob_after",
    "z_k",
    "delta_norm",
    "solver_iters",
    "kl_to_user",
];

pub(crate) fn turn_record(row: &TurnRow) -> Vec<String> {
    let r = &row.record;
    vec![
        row.task_id.to_string(),
        row.method.to_string(),
        fmt_f64(row.beta),
        row.seed.to_string(),
        r.turn.to_string(),
        r.response.to_string(),
        fmt_f64(r.reward),
        fmt_f64(r.prob_before),
        fmt_f64(r.prob_after),
        fmt_opt(r.z_k),
        fmt_f64(r.delta_norm),
        r.solver_iterations.to_string(),
        fmt_opt(r.kl_to_user),
    ]
}

fn summary_header(turns: usize) -> Vec<String> {
    let mut h = header(&[
        "method",
        "beta",
        "seed",
        "accuracy",
        "correction_uplift",
        "mean_turns_to_solve",
    ]);
    h.extend((1..=turns).map(|k| format!("newly_solved_{k}")));
    h
}

fn summary_record(row: &SummaryRow) -> Vec<String> {
    let m = &row.metrics;
    let mut rec = vec![
        row.method.to_string(),
        fmt_f64(row.beta),
        row.seed.to_string(),
        fmt_f64(m.accuracy),
        fmt_opt(m.correction_uplift),
        fmt_opt(m.mean_turns_to_solve),
    ];
    rec.extend(m.newly_solved.iter().map(|c| c.to_string()));
    rec
}

/// Writes `turns.csv`, `summary.csv` and `timing.csv` into `set`.
pub fn write_run(set: &mut OutputSet, out: &RunOutput, turns: usize) -> Result<()> {
    set.write_csv("turns.csv", &header(&TURN_COLUMNS), out.turns.iter().map(turn_record))?;
    set.write_csv(
        "summary.csv",
        &summary_header(turns),
        out.summaries.iter().map(summary_record),
    )?;
    // wall-clock counters vary between runs, so they live apart from the
    // reproducible files
    set.write_csv(
        "timing.csv",
        &header(&["task_id", "method", "beta", "seed", "turn", "inference_ns", "update_ns"]),
        out.turns.iter().map(|row| {
            vec![
                row.task_id.to_string(),
                row.method.to_string(),
                fmt_f64(row.beta),
                row.seed.to_string(),
                row.record.turn.to_string(),
                row.record.inference_time.as_nanos().to_string(),
                row.record.update_time.as_nanos().to_string(),
            ]
        }),
    )?;
    Ok(())
}

/// Simulates and writes the run into `cfg.out`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let mut out = simulate(cfg)?;
    let mut set = OutputSet::create(&cfg.out)?;
    write_run(&mut set, &out, cfg.turns)?;
    out.files = set.commit();
    Ok(out)
}

/// Mean final accuracy per (method, β) over seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub method: &'static str,
    pub beta: f64,
    pub mean_accuracy: f64,
    pub min_accuracy: f64,
    pub max_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub run: RunOutput,
    pub points: Vec<SweepPoint>,
}

impl SweepReport {
    /// Largest gap between mean accuracies across β for `method`.
    pub fn band(&self, method: &str) -> Option<f64> {
        let accs: Vec<f64> = self
            .points
            .iter()
            .filter(|p| p.method == method)
            .map(|p| p.mean_accuracy)
            .collect();
        let max = accs.iter().copied().reduce(f64::max)?;
        let min = accs.iter().copied().reduce(f64::min)?;
        Some(max - min)
    }
}

pub fn sweep_points(run: &RunOutput, cfg: &ExperimentConfig) -> Vec<SweepPoint> {
    let mut points = Vec::new();
    for method in &cfg.methods {
        for &beta in &cfg.betas {
            let accs: Vec<f64> = run
                .summaries
                .iter()
                .filter(|s| s.method == method.name() && s.beta == beta)
                .map(|s| s.metrics.accuracy)
                .collect();
            if accs.is_empty() {
                continue;
            }
            points.push(SweepPoint {
                method: method.name(),
                beta,
                mean_accuracy: accs.iter().sum::<f64>() / accs.len() as f64,
                min_accuracy: accs.iter().copied().fold(f64::INFINITY, f64::min),
                max_accuracy: accs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            });
        }
    }
    points
}

/// Runs the configured β grid and writes `sweep.csv` next to the run files.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepReport> {
    let mut run = simulate(cfg)?;
    let points = sweep_points(&run, cfg);
    let mut set = OutputSet::create(&cfg.out)?;
    write_run(&mut set, &run, cfg.turns)?;
    set.write_csv(
        "sweep.csv",
        &header(&["method", "beta", "mean_accuracy", "min_accuracy", "max_accuracy"]),
        points.iter().map(|p| {
            vec![
                p.method.to_string(),
                fmt_f64(p.beta),
                fmt_f64(p.mean_accuracy),
                fmt_f64(p.min_accuracy),
                fmt_f64(p.max_accuracy),
            ]
        }),
    )?;
    run.files = set.commit();
    Ok(SweepReport { run, points })
}
