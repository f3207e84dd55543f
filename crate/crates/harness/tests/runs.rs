use std::fs;

use rosa_core::engine::{drive, InteractionSession, Method};
use rosa_core::PolicyFamily;
use rosa_harness::config::{parse_str, ExperimentConfig};
use rosa_harness::experiment::{run_experiment, run_sweep, session_config, simulate, SuiteOracle};
use rosa_harness::seeds::{stream, Domain};
use rosa_harness::suite::generate_suite;

fn small(family: &str, out: &std::path::Path) -> ExperimentConfig {
    let mut cfg = parse_str(&format!(
        r#"
        [suite]
        tasks = 24
        responses = 6
        family = "{family}"
        [run]
        betas = [0.5, 1.0]
        seeds = [3, 4]
        turns = 6
        "#
    ))
    .unwrap();
    cfg.out = out.to_path_buf();
    cfg
}

#[test]
fn identical_config_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    for family in ["tabular", "linear", "mlp"] {
        let a = small(family, &dir.path().join(format!("{family}-a")));
        let mut b = a.clone();
        b.out = dir.path().join(format!("{family}-b"));
        // different pool sizes must not change row order or values
        b.workers = 1;
        run_experiment(&a).unwrap();
        run_experiment(&b).unwrap();
        for name in ["turns.csv", "summary.csv"] {
            let x = fs::read(a.out.join(name)).unwrap();
            let y = fs::read(b.out.join(name)).unwrap();
            assert_eq!(x, y, "{family} {name}");
        }
    }
}

#[test]
fn turn_rows_sorted_within_each_cell() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate(&small("linear", dir.path())).unwrap();
    for w in out.turns.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if (a.method, a.beta, a.seed) == (b.method, b.beta, b.seed) {
            assert!((a.task_id, a.record.turn) < (b.task_id, b.record.turn));
        }
    }
}

#[test]
fn static_never_touches_parameters() {
    let dir = tempfile::tempdir().unwrap();
    for family in ["tabular", "linear", "mlp"] {
        let cfg = small(family, dir.path());
        let suite = generate_suite(&cfg.suite, 3).unwrap();
        for task in &suite.tasks {
            let sc = session_config(&cfg, Method::Static, 1.0, 3, task.task_id);
            let mut s = InteractionSession::new(task.clone(), &suite.model, suite.base.clone(), sc).unwrap();
            drive(
                &mut s,
                &mut SuiteOracle::new(cfg.oracle),
                &mut stream(3, Domain::Session, task.task_id as u64),
            )
            .unwrap();
            assert_eq!(s.effective().unwrap().params, suite.base);
            assert!(s.history().iter().all(|r| r.delta_norm == 0.0));
        }
    }
}

#[test]
fn reset_isolates_tasks_and_persistence_does_not() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small("linear", dir.path());
    cfg.methods = vec![Method::Rosa];
    cfg.betas = vec![1.0];
    cfg.seeds = vec![3];
    let first_turn_probs = |cfg: &ExperimentConfig| -> Vec<(usize, usize, f64)> {
        simulate(cfg)
            .unwrap()
            .turns
            .iter()
            .filter(|r| r.record.turn == 1)
            .map(|r| (r.task_id, r.record.response, r.record.prob_before))
            .collect()
    };

    let suite = generate_suite(&cfg.suite, 3).unwrap();
    let reset = first_turn_probs(&cfg);
    for &(t, y, p) in &reset {
        let base = suite
            .model
            .prob(suite.base.as_slice(), suite.tasks[t].context, y)
            .unwrap();
        assert_eq!(p, base, "task {t}");
    }

    cfg.reset_between_tasks = false;
    let persisted = first_turn_probs(&cfg);
    assert_eq!(persisted[0], reset[0]);
    assert!(persisted.iter().zip(&reset).skip(1).any(|(a, b)| a != b));
}

#[test]
fn failed_write_leaves_no_partial_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small("tabular", dir.path());
    // summary.csv cannot be created when a directory already holds its name
    fs::create_dir_all(dir.path().join("summary.csv")).unwrap();
    let err = run_experiment(&cfg).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(!dir.path().join("turns.csv").exists());
    assert!(!dir.path().join("timing.csv").exists());
}

#[test]
fn suite_difficulty_near_target() {
    for family in [
        PolicyFamily::TabularSoftmax,
        PolicyFamily::LinearSoftmax,
        PolicyFamily::MlpSoftmax,
    ] {
        let mut cfg = ExperimentConfig::default();
        cfg.suite.family = family;
        for seed in [1, 2] {
            let p = generate_suite(&cfg.suite, seed)
                .unwrap()
                .initial_probabilities()
                .unwrap();
            assert_eq!(p.len(), 200);
            let mean = p.iter().sum::<f64>() / p.len() as f64;
            assert!((0.19..=0.21).contains(&mean), "{family:?} seed {seed}: {mean}");
        }
    }
}

#[test]
fn sweep_reports_every_beta() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small("tabular", dir.path());
    cfg.methods = vec![Method::Rosa];
    let report = run_sweep(&cfg).unwrap();
    assert_eq!(report.points.len(), 2);
    assert!(dir.path().join("sweep.csv").exists());
    assert!(report.band("rosa").unwrap() >= 0.0);
    assert!(report.band("static").is_none());
}
