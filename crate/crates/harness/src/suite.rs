//! Synthetic task suites with a controlled initial success probability.
//!
//! All tasks share one policy model whose contexts are the tasks. Linear and
//! mlp contexts carry a task indicator followed by dense random features, so
//! each task owns a private block of weights that pins its initial
//! distribution while the dense block and the head stay shared.
//!
//! Wrong answers share `1 − difficulty` through log-normal weights, so the
//! most likely wrong answer usually outranks the correct one.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rosa_core::oracle::TaskInstance;
use rosa_core::solver::{solve_normal_equations, RowOperator, SolverConfig};
use rosa_core::{ParameterVector, PolicyFamily, PolicyModel};

use crate::config::{ExperimentConfig, SuiteSpec};
use crate::error::{HarnessError, Result};
use crate::output::{fmt_f64, header, OutputSet};
use crate::seeds::{stream, Domain};

/// Allowed gap between the requested and realized initial probability.
pub const DIFFICULTY_TOLERANCE: f64 = 0.01;

#[derive(Debug, Clone)]
pub struct Suite {
    pub model: PolicyModel,
    pub base: ParameterVector,
    pub tasks: Vec<TaskInstance>,
}

impl Suite {
    /// `π_base(y*|x)` for every task.
    pub fn initial_probabilities(&self) -> Result<Vec<f64>> {
        self.tasks
            .iter()
            .map(|t| Ok(self.model.prob(self.base.as_slice(), t.context, t.ground_truth)?))
            .collect()
    }
}

fn check_difficulty(spec: &SuiteSpec) -> Result<()> {
    let q = spec.difficulty;
    let feasible = if spec.responses == 1 {
        q == 1.0
    } else {
        q > 0.0 && q < 1.0
    };
    if !feasible {
        return Err(HarnessError::Core(rosa_core::Error::InvalidArgument(format!(
            "difficulty {q} is not reachable with {} responses",
            spec.responses
        ))));
    }
    Ok(())
}

/// Target logits: `ln q` on the correct response and log-normal weights
/// sharing `1 − q` elsewhere, centred to mean zero.
fn target_logits<R: Rng>(spec: &SuiteSpec, truth: usize, rng: &mut R) -> Vec<f64> {
    let n = spec.responses;
    if n == 1 {
        return vec![0.0];
    }
    let weights: Vec<f64> = (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            (spec.spread * z).exp()
        })
        .collect();
    let rest: f64 = weights
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != truth)
        .map(|(_, w)| w)
        .sum();
    let mut logits: Vec<f64> = weights
        .iter()
        .enumerate()
        .map(|(i, w)| {
            if i == truth {
                spec.difficulty.ln()
            } else {
                ((1.0 - spec.difficulty) * w / rest).ln()
            }
        })
        .collect();
    let mean = logits.iter().sum::<f64>() / n as f64;
    logits.iter_mut().for_each(|l| *l -= mean);
    logits
}

/// Builds a deterministic suite for `seed`.
pub fn generate_suite(spec: &SuiteSpec, seed: u64) -> Result<Suite> {
    if spec.tasks == 0 || spec.responses == 0 {
        return Err(HarnessError::Config(
            "suite needs at least one task and one response".into(),
        ));
    }
    check_difficulty(spec)?;
    let n = spec.responses;
    let mut truths = Vec::with_capacity(spec.tasks);
    let mut logits = Vec::with_capacity(spec.tasks);
    let mut task_rngs = Vec::with_capacity(spec.tasks);
    for t in 0..spec.tasks {
        let mut rng = stream(seed, Domain::SuiteTask, t as u64);
        let truth = rng.random_range(0..n);
        logits.push(target_logits(spec, truth, &mut rng));
        truths.push(truth);
        task_rngs.push(rng);
    }

    let (model, base) = match spec.family {
        PolicyFamily::TabularSoftmax => {
            let model = PolicyModel::tabular(spec.tasks, n)?;
            (model, ParameterVector::new(logits.concat())?)
        }
        PolicyFamily::LinearSoftmax => linear_suite(spec, seed, &logits, &mut task_rngs)?,
        PolicyFamily::MlpSoftmax => mlp_suite(spec, seed, &truths, &mut task_rngs)?,
    };

    let tasks = truths
        .iter()
        .enumerate()
        .map(|(t, &truth)| {
            let mut user = vec![0.0; n];
            user[truth] = 1.0;
            Ok(TaskInstance::new(t, t, n, truth)?.with_user_policy(user)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let suite = Suite { model, base, tasks };
    for (task, p) in suite.tasks.iter().zip(suite.initial_probabilities()?) {
        if (p - spec.difficulty).abs() > DIFFICULTY_TOLERANCE {
            return Err(HarnessError::Core(rosa_core::Error::InvalidArgument(format!(
                "task {}: could not realize difficulty {} (got {p})",
                task.task_id, spec.difficulty
            ))));
        }
    }
    Ok(suite)
}

/// Feature rows `[indicator(t) | dense]`.
fn features<R: Rng>(spec: &SuiteSpec, rngs: &mut [R]) -> (Vec<f64>, usize) {
    let width = spec.tasks + spec.feature_dim;
    let mut table = vec![0.0; spec.tasks * width];
    for (t, rng) in rngs.iter_mut().enumerate() {
        let row = &mut table[t * width..(t + 1) * width];
        row[t] = 1.0;
        row[spec.tasks..]
            .iter_mut()
            .for_each(|f| *f = rng.random_range(-1.0..1.0));
    }
    (table, width)
}

fn linear_suite<R: Rng>(
    spec: &SuiteSpec,
    seed: u64,
    logits: &[Vec<f64>],
    rngs: &mut [R],
) -> Result<(PolicyModel, ParameterVector)> {
    let n = spec.responses;
    let (table, width) = features(spec, rngs);
    let model = PolicyModel::linear(table, width, n)?;
    let mut shared = stream(seed, Domain::SuiteShared, 0);
    let mut theta = model.init_params(&mut shared).into_inner();
    let w = model.layout().block("head.weight").expect("linear head").clone();
    let b = model.layout().block("head.bias").expect("linear bias").clone();
    for (t, target) in logits.iter().enumerate() {
        let phi = model.features(t);
        for y in 0..n {
            let dense: f64 = (spec.tasks..width).map(|f| phi[f] * theta[w.offset + f * n + y]).sum();
            theta[w.offset + t * n + y] = target[y] - dense - theta[b.offset + y];
        }
    }
    Ok((model, ParameterVector::new(theta)?))
}

/// Gain applied to the random head so that moderate hidden activations can
/// express the target logits.
const MLP_HEAD_GAIN: f64 = 2.0;

/// Largest hidden activation magnitude the construction may request.
const MAX_ACTIVATION: f64 = 0.95;

/// Solves `P·W_headᵀ·h = P·(ℓ − b)` for the minimum-norm hidden activation
/// `h`, where `P` removes the mean (softmax ignores constant shifts).
fn hidden_target(head: &[f64], bias: &[f64], logits: &[f64], hidden: usize) -> Result<Vec<f64>> {
    let n = logits.len();
    let col_mean = |i: usize| head[i * n..(i + 1) * n].iter().sum::<f64>() / n as f64;
    let means: Vec<f64> = (0..hidden).map(col_mean).collect();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|y| (0..hidden).map(|i| head[i * n + y] - means[i]).collect())
        .collect();
    let rhs: Vec<f64> = logits.iter().zip(bias).map(|(l, b)| l - b).collect();
    let rhs_mean = rhs.iter().sum::<f64>() / n as f64;
    let rhs: Vec<f64> = rhs.iter().map(|r| r - rhs_mean).collect();
    let op = RowOperator::new(hidden, rows)?;
    let cfg = SolverConfig {
        rel_tolerance: 1e-12,
        max_iterations: Some(10 * hidden),
        damping: 0.0,
    };
    Ok(solve_normal_equations(&op, &rhs, &cfg)?.delta)
}

/// Routes each task's indicator column so the hidden activation equals the
/// minimum-norm `h` realizing its target logits. Tasks whose `h` would leave
/// `(−0.95, 0.95)` get their wrong-answer spread halved until it fits; the
/// correct-response probability is exact for any spread.
fn mlp_suite<R: Rng>(
    spec: &SuiteSpec,
    seed: u64,
    truths: &[usize],
    rngs: &mut [R],
) -> Result<(PolicyModel, ParameterVector)> {
    let n = spec.responses;
    let h = spec.hidden_dim;
    let (table, width) = features(spec, rngs);
    let model = PolicyModel::mlp(table, width, h, n)?;
    let mut shared = stream(seed, Domain::SuiteShared, 0);
    let mut theta = model.init_params(&mut shared).into_inner();
    let layout = model.layout();
    let hw = layout.block("hidden.weight").expect("mlp hidden").offset;
    let hb = layout.block("hidden.bias").expect("mlp hidden bias").offset;
    let ow = layout.block("head.weight").expect("mlp head").range();
    let ob = layout.block("head.bias").expect("mlp head bias").range();
    theta[ow.clone()].iter_mut().for_each(|w| *w *= MLP_HEAD_GAIN);

    for (t, &truth) in truths.iter().enumerate() {
        let mut rng = stream(seed, Domain::SuiteTask, (t as u64) | (1 << 63));
        let mut spread = spec.spread;
        let activation = loop {
            let local = SuiteSpec { spread, ..spec.clone() };
            let logits = target_logits(&local, truth, &mut rng);
            let act = hidden_target(&theta[ow.clone()], &theta[ob.clone()], &logits, h)?;
            if act.iter().all(|a| a.abs() <= MAX_ACTIVATION) {
                break act;
            }
            if spread < 1e-6 {
                return Err(HarnessError::Core(rosa_core::Error::InvalidArgument(format!(
                    "task {t}: difficulty {} needs hidden activations beyond {MAX_ACTIVATION}",
                    spec.difficulty
                ))));
            }
            spread *= 0.5;
        };
        let phi = model.features(t).to_vec();
        for (i, a) in activation.iter().enumerate() {
            let dense: f64 = (spec.tasks..width).map(|f| phi[f] * theta[hw + i * width + f]).sum();
            theta[hw + i * width + t] = a.atanh() - dense - theta[hb + i];
        }
    }
    Ok((model, ParameterVector::new(theta)?))
}

/// Writes `suite.csv` with one row per (seed, task): the correct response,
/// its initial probability and the most likely response.
pub fn write_suites(cfg: &ExperimentConfig) -> Result<std::path::PathBuf> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for &seed in &cfg.seeds {
        let suite = generate_suite(&cfg.suite, seed)?;
        for task in &suite.tasks {
            let dist = suite.model.distribution(suite.base.as_slice(), task.context)?;
            rows.push(vec![
                seed.to_string(),
                task.task_id.to_string(),
                task.ground_truth.to_string(),
                fmt_f64(dist[task.ground_truth]),
                rosa_core::policy::argmax(&dist).to_string(),
            ]);
        }
    }
    let mut set = OutputSet::create(&cfg.out)?;
    let path = set.write_csv(
        "suite.csv",
        &header(&["seed", "task_id", "ground_truth", "initial_prob", "mode"]),
        rows,
    )?;
    set.commit();
    Ok(path)
}
