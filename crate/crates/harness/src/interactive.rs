//! Single-task sessions with live feedback from a terminal.

use std::fs::OpenOptions;
use std::io::{BufRead, Write};
use std::path::PathBuf;

use rosa_core::engine::{drive, InteractionSession, Method, SessionStatus};
use rosa_core::oracle::{FeedbackOracle, InteractiveOracle, ScriptedOracle};
use rosa_core::target::RewardSignal;

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::experiment::{session_config, turn_record, TurnRow, TURN_COLUMNS};
use crate::seeds::{stream, Domain};
use crate::suite::generate_suite;

/// Which task and method an interactive session plays.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InteractiveSpec {
    pub task_id: usize,
    pub method: Method,
    pub beta: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transcript {
    pub rows: Vec<TurnRow>,
    pub status: SessionStatus,
    pub path: Option<PathBuf>,
}

impl Transcript {
    pub fn rewards(&self) -> Vec<RewardSignal> {
        self.rows
            .iter()
            .map(|r| RewardSignal::sparse(r.record.reward > 0.0))
            .collect()
    }
}

/// Plays one suite task against `oracle`, seeded exactly like a batch run.
pub fn play<O: FeedbackOracle + ?Sized>(
    cfg: &ExperimentConfig,
    spec: InteractiveSpec,
    oracle: &mut O,
) -> Result<Transcript> {
    cfg.validate()?;
    let suite = generate_suite(&cfg.suite, spec.seed)?;
    let task = suite.tasks.get(spec.task_id).cloned().ok_or_else(|| {
        HarnessError::Config(format!(
            "task {} out of range for a suite of {}",
            spec.task_id,
            suite.tasks.len()
        ))
    })?;
    let sc = session_config(cfg, spec.method, spec.beta, spec.seed, spec.task_id);
    let mut session = InteractionSession::new(task, &suite.model, suite.base.clone(), sc)?;
    let mut rng = stream(spec.seed, Domain::Session, spec.task_id as u64);
    drive(&mut session, oracle, &mut rng)?;
    let rows = session
        .history()
        .iter()
        .map(|record| TurnRow {
            task_id: spec.task_id,
            method: spec.method.name(),
            beta: spec.beta,
            seed: spec.seed,
            record: record.clone(),
        })
        .collect();
    Ok(Transcript {
        rows,
        status: session.status().clone(),
        path: None,
    })
}

/// Replays recorded rewards through a scripted oracle.
pub fn replay(cfg: &ExperimentConfig, spec: InteractiveSpec, rewards: &[RewardSignal]) -> Result<Transcript> {
    play(cfg, spec, &mut ScriptedOracle::new(rewards.iter().copied()))
}

/// Appends rows to `interactive.csv` under `cfg.out`, writing the header
/// when the file is new.
pub fn append_transcript(cfg: &ExperimentConfig, rows: &[TurnRow]) -> Result<PathBuf> {
    std::fs::create_dir_all(&cfg.out).map_err(|e| HarnessError::io(&cfg.out, e))?;
    let path = cfg.out.join("interactive.csv");
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&path)
        .map_err(|e| HarnessError::io(&path, e))?;
    let fresh = file.metadata().map_err(|e| HarnessError::io(&path, e))?.len() == 0;
    let mut w = csv::Writer::from_writer(file);
    if fresh {
        w.write_record(TURN_COLUMNS)?;
    }
    for row in rows {
        w.write_record(turn_record(row))?;
    }
    w.flush().map_err(|e| HarnessError::io(&path, e))?;
    Ok(path)
}

/// Runs a live session reading `+`, `-` or `q` lines from `input` and
/// appends the transcript, including a partial one after `q`.
pub fn run_interactive_with<R: BufRead, W: Write>(
    cfg: &ExperimentConfig,
    spec: InteractiveSpec,
    input: R,
    output: W,
) -> Result<Transcript> {
    let mut oracle = InteractiveOracle::new(input, output);
    let mut transcript = play(cfg, spec, &mut oracle)?;
    let mut output = oracle.into_output();
    transcript.path = Some(append_transcript(cfg, &transcript.rows)?);
    let outcome = match &transcript.status {
        SessionStatus::Solved => "solved".to_string(),
        SessionStatus::Exhausted => "unsolved".to_string(),
        SessionStatus::Aborted(why) => format!("aborted ({why})"),
        SessionStatus::Running => "running".to_string(),
    };
    writeln!(output, "{outcome} after {} turns", transcript.rows.len())
        .map_err(|e| HarnessError::Runtime(format!("terminal error: {e}")))?;
    Ok(transcript)
}
