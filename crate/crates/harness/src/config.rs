//! Experiment configuration.
//!
//! The file format is TOML with `[suite]`, `[run]`, `[solver]` and `[theory]`
//! sections. Any key can be overridden from the command line as
//! `section.key=value`; the dedicated flags are shorthands for the same
//! mechanism.

use std::fs;
use std::path::{Path, PathBuf};

use rosa_core::engine::{Method, TargetMode, UpdateMechanism};
use rosa_core::solver::SolverConfig;
use rosa_core::PolicyFamily;
use serde::Deserialize;
use toml::{Table, Value};

use crate::error::{HarnessError, Result};

/// Default β grid for runs and sweeps.
pub const BETA_GRID: [f64; 7] = [0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75];

/// RL baseline step size used when the file does not set one.
pub const DEFAULT_RL_STEP: f64 = Method::DEFAULT_RL_STEP;

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteSpec {
    pub tasks: usize,
    pub responses: usize,
    pub family: PolicyFamily,
    /// Initial probability of the correct response.
    pub difficulty: f64,
    /// Log-scale spread of the wrong-answer weights (tabular and linear).
    pub spread: f64,
    /// Dense features per context on top of the task indicator.
    pub feature_dim: usize,
    pub hidden_dim: usize,
}

impl Default for SuiteSpec {
    fn default() -> Self {
        SuiteSpec {
            tasks: 200,
            responses: 8,
            family: PolicyFamily::TabularSoftmax,
            difficulty: 0.2,
            spread: 1.0,
            feature_dim: 4,
            hidden_dim: 16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OracleKind {
    Rule,
    /// `None` uses `|Y| / 8`.
    Dense {
        sigma: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TheorySpec {
    /// Random single-step instances for the identity and monotonic checks.
    pub instances: usize,
    /// Exact-update traces for the cumulative bound.
    pub traces: usize,
    pub trace_turns: usize,
    /// Linearized mlp sessions for the unified bound.
    pub sessions: usize,
    pub lipschitz_samples: usize,
}

impl Default for TheorySpec {
    fn default() -> Self {
        TheorySpec {
            instances: 1000,
            traces: 1000,
            trace_turns: 10,
            sessions: 100,
            lipschitz_samples: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub suite: SuiteSpec,
    pub methods: Vec<Method>,
    pub mechanism: UpdateMechanism,
    pub betas: Vec<f64>,
    pub turns: usize,
    pub seeds: Vec<u64>,
    pub oracle: OracleKind,
    pub out: PathBuf,
    pub reset_between_tasks: bool,
    pub greedy: bool,
    pub target_mode: TargetMode,
    pub solver: SolverConfig,
    /// Worker threads; 0 lets the pool decide.
    pub workers: usize,
    pub theory: TheorySpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            suite: SuiteSpec::default(),
            methods: vec![
                Method::Static,
                Method::RlBaseline {
                    step_size: DEFAULT_RL_STEP,
                },
                Method::Rosa,
            ],
            mechanism: UpdateMechanism::FullParameter,
            betas: BETA_GRID.to_vec(),
            turns: 10,
            seeds: vec![1],
            oracle: OracleKind::Rule,
            out: PathBuf::from("out"),
            reset_between_tasks: true,
            greedy: false,
            target_mode: TargetMode::SingleCoordinate,
            solver: SolverConfig::default(),
            workers: 0,
            theory: TheorySpec::default(),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawFile {
    suite: RawSuite,
    run: RawRun,
    solver: RawSolver,
    theory: RawTheory,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawSuite {
    tasks: Option<usize>,
    responses: Option<usize>,
    family: Option<String>,
    difficulty: Option<f64>,
    spread: Option<f64>,
    feature_dim: Option<usize>,
    hidden_dim: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawRun {
    methods: Option<Vec<String>>,
    mechanism: Option<String>,
    lora_rank: Option<usize>,
    lora_alpha: Option<f64>,
    betas: Option<Vec<f64>>,
    turns: Option<usize>,
    seeds: Option<Vec<u64>>,
    oracle: Option<String>,
    dense_sigma: Option<f64>,
    out: Option<PathBuf>,
    reset_between_tasks: Option<bool>,
    greedy: Option<bool>,
    rl_step: Option<f64>,
    target_mode: Option<String>,
    workers: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawSolver {
    tolerance: Option<f64>,
    max_iterations: Option<usize>,
    damping: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawTheory {
    instances: Option<usize>,
    traces: Option<usize>,
    trace_turns: Option<usize>,
    sessions: Option<usize>,
    lipschitz_samples: Option<usize>,
}

/// One `section.key = value` override.
#[derive(Debug, Clone, PartialEq)]
pub struct Override {
    pub section: String,
    pub key: String,
    pub value: Value,
}

impl Override {
    pub fn new(section: &str, key: &str, value: impl Into<Value>) -> Self {
        Override {
            section: section.into(),
            key: key.into(),
            value: value.into(),
        }
    }

    /// Parses `section.key=value`. The value is read as a TOML value and
    /// falls back to a bare string.
    pub fn parse(s: &str) -> Result<Self> {
        let (path, raw) = s
            .split_once('=')
            .ok_or_else(|| HarnessError::Config(format!("override `{s}` is not key=value")))?;
        let (section, key) = path
            .trim()
            .split_once('.')
            .ok_or_else(|| HarnessError::Config(format!("override key `{path}` needs a section")))?;
        let raw = raw.trim();
        let value = format!("v = {raw}")
            .parse::<Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| Value::String(raw.to_string()));
        Ok(Override::new(section, key, value))
    }
}

/// Splits a comma-separated flag value into a TOML array.
pub fn list_value<T, F>(s: &str, parse: F) -> Result<Value>
where
    F: Fn(&str) -> std::result::Result<T, String>,
    T: Into<Value>,
{
    s.split(',')
        .map(|p| parse(p.trim()).map(Into::into).map_err(HarnessError::Config))
        .collect::<Result<Vec<Value>>>()
        .map(Value::Array)
}

/// Reads `path` (if any), applies the overrides and validates the result.
pub fn load(path: Option<&Path>, overrides: &[Override]) -> Result<ExperimentConfig> {
    let mut table = match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| HarnessError::Config(format!("{}: {e}", p.display())))?;
            text.parse::<Table>()
                .map_err(|e| HarnessError::Config(format!("{}: {e}", p.display())))?
        }
        None => Table::new(),
    };
    for o in overrides {
        let section = table
            .entry(o.section.clone())
            .or_insert_with(|| Value::Table(Table::new()));
        let Value::Table(section) = section else {
            return Err(HarnessError::Config(format!("`{}` is not a section", o.section)));
        };
        section.insert(o.key.clone(), o.value.clone());
    }
    from_table(table)
}

/// Parses configuration text without overrides.
pub fn parse_str(text: &str) -> Result<ExperimentConfig> {
    let table = text.parse::<Table>().map_err(|e| HarnessError::Config(e.to_string()))?;
    from_table(table)
}

fn from_table(table: Table) -> Result<ExperimentConfig> {
    let raw: RawFile = Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))?;
    let mut cfg = ExperimentConfig::default();

    let s = raw.suite;
    cfg.suite.tasks = s.tasks.unwrap_or(cfg.suite.tasks);
    cfg.suite.responses = s.responses.unwrap_or(cfg.suite.responses);
    if let Some(f) = s.family {
        cfg.suite.family = f
            .parse()
            .map_err(|e: rosa_core::Error| HarnessError::Config(e.to_string()))?;
    }
    cfg.suite.difficulty = s.difficulty.unwrap_or(cfg.suite.difficulty);
    cfg.suite.spread = s.spread.unwrap_or(cfg.suite.spread);
    cfg.suite.feature_dim = s.feature_dim.unwrap_or(cfg.suite.feature_dim);
    cfg.suite.hidden_dim = s.hidden_dim.unwrap_or(cfg.suite.hidden_dim);

    let r = raw.run;
    let rl_step = r.rl_step.unwrap_or(DEFAULT_RL_STEP);
    if let Some(methods) = r.methods {
        cfg.methods = methods
            .iter()
            .map(|m| match m.parse::<Method>() {
                Ok(Method::RlBaseline { .. }) => Ok(Method::RlBaseline { step_size: rl_step }),
                Ok(m) => Ok(m),
                Err(e) => Err(HarnessError::Config(e.to_string())),
            })
            .collect::<Result<_>>()?;
    } else {
        for m in &mut cfg.methods {
            if let Method::RlBaseline { step_size } = m {
                *step_size = rl_step;
            }
        }
    }
    if let Some(m) = r.mechanism {
        cfg.mechanism = m
            .parse()
            .map_err(|e: rosa_core::Error| HarnessError::Config(e.to_string()))?;
    }
    if let UpdateMechanism::LowRankHead { rank, alpha } = &mut cfg.mechanism {
        *rank = r.lora_rank.unwrap_or(*rank);
        *alpha = r.lora_alpha.unwrap_or(*alpha);
    }
    cfg.betas = r.betas.unwrap_or(cfg.betas);
    cfg.turns = r.turns.unwrap_or(cfg.turns);
    cfg.seeds = r.seeds.unwrap_or(cfg.seeds);
    cfg.oracle = match r.oracle.as_deref() {
        None | Some("rule") => OracleKind::Rule,
        Some("dense") => OracleKind::Dense { sigma: r.dense_sigma },
        Some(other) => return Err(HarnessError::Config(format!("unknown oracle `{other}`"))),
    };
    cfg.out = r.out.unwrap_or(cfg.out);
    cfg.reset_between_tasks = r.reset_between_tasks.unwrap_or(cfg.reset_between_tasks);
    cfg.greedy = r.greedy.unwrap_or(cfg.greedy);
    cfg.target_mode = match r.target_mode.as_deref() {
        None | Some("single") => TargetMode::SingleCoordinate,
        Some("full") => TargetMode::FullVector,
        Some(other) => return Err(HarnessError::Config(format!("unknown target mode `{other}`"))),
    };
    cfg.workers = r.workers.unwrap_or(cfg.workers);

    let v = raw.solver;
    cfg.solver.rel_tolerance = v.tolerance.unwrap_or(cfg.solver.rel_tolerance);
    cfg.solver.max_iterations = v.max_iterations.or(cfg.solver.max_iterations);
    cfg.solver.damping = v.damping.unwrap_or(cfg.solver.damping);

    let t = raw.theory;
    cfg.theory.instances = t.instances.unwrap_or(cfg.theory.instances);
    cfg.theory.traces = t.traces.unwrap_or(cfg.theory.traces);
    cfg.theory.trace_turns = t.trace_turns.unwrap_or(cfg.theory.trace_turns);
    cfg.theory.sessions = t.sessions.unwrap_or(cfg.theory.sessions);
    cfg.theory.lipschitz_samples = t.lipschitz_samples.unwrap_or(cfg.theory.lipschitz_samples);

    cfg.validate()?;
    Ok(cfg)
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        if self.suite.tasks == 0 {
            return bad("suite.tasks must be at least 1".into());
        }
        if self.suite.responses == 0 {
            return bad("suite.responses must be at least 1".into());
        }
        if self.suite.feature_dim == 0 || self.suite.hidden_dim == 0 {
            return bad("suite.feature_dim and suite.hidden_dim must be at least 1".into());
        }
        let q = self.suite.difficulty;
        let reachable = if self.suite.responses == 1 {
            q == 1.0
        } else {
            q > 0.0 && q < 1.0
        };
        if !reachable {
            return bad(format!(
                "suite.difficulty {q} is not reachable with {} responses",
                self.suite.responses
            ));
        }
        if !(self.suite.spread >= 0.0) || !self.suite.spread.is_finite() {
            return bad(format!(
                "suite.spread must be finite and >= 0, got {}",
                self.suite.spread
            ));
        }
        if self.methods.is_empty() {
            return bad("run.methods is empty".into());
        }
        if self.betas.is_empty() {
            return bad("run.betas is empty".into());
        }
        if let Some(b) = self.betas.iter().find(|b| !(**b > 0.0) || !b.is_finite()) {
            return bad(format!("every beta must be positive, got {b}"));
        }
        if self.turns == 0 {
            return bad("run.turns must be at least 1".into());
        }
        if self.seeds.is_empty() {
            return bad("run.seeds is empty".into());
        }
        if let OracleKind::Dense { sigma: Some(s) } = self.oracle {
            if !(s > 0.0) {
                return bad(format!("run.dense_sigma must be positive, got {s}"));
            }
        }
        for m in &self.methods {
            if let Method::RlBaseline { step_size } = m {
                if !(*step_size >= 0.0) || !step_size.is_finite() {
                    return bad(format!("run.rl_step must be finite and >= 0, got {step_size}"));
                }
            }
        }
        if self.theory.lipschitz_samples < 100 {
            return bad("theory.lipschitz_samples must be at least 100".into());
        }
        self.solver.validate()?;
        Ok(())
    }
}
