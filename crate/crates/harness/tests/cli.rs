use std::path::Path;
use std::process::Command;

fn rosa(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_rosa")).args(args).output().unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8_lossy(&out.stdout).into_owned(),
    )
}

fn write_config(dir: &Path) -> String {
    let path = dir.join("c.toml");
    std::fs::write(
        &path,
        "[suite]\ntasks = 20\n[run]\nbetas = [1.0]\nturns = 5\ngreedy = true\n",
    )
    .unwrap();
    path.display().to_string()
}

#[test]
fn run_succeeds_and_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let c = write_config(dir.path());
    let out = dir.path().join("o");
    let (code, stdout) = rosa(&["run", "--config", &c, "--seed", "1", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert_eq!(stdout.lines().count(), 4);
    for f in ["turns.csv", "summary.csv", "timing.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn flags_override_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let c = write_config(dir.path());
    let out = dir.path().join("o");
    let (code, stdout) = rosa(&[
        "run",
        "--config",
        &c,
        "--method",
        "rosa",
        "--beta",
        "0.5,1.5",
        "--turns",
        "3",
        "--persist-params",
        "--set",
        "suite.tasks=7",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let rows: Vec<_> = stdout.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.starts_with("rosa,")));
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(summary.lines().next().unwrap().ends_with("newly_solved_3"));
}

#[test]
fn config_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let c = write_config(dir.path());
    assert_eq!(rosa(&["run", "--config", "/nonexistent/c.toml"]).0, 1);
    assert_eq!(rosa(&["run", "--config", &c, "--set", "run.unknown=1"]).0, 1);
    assert_eq!(rosa(&["run", "--config", &c, "--method", "sgd"]).0, 1);
    assert_eq!(rosa(&["run", "--config", &c, "--mechanism", "low-rank"]).0, 1);
    assert_eq!(rosa(&["run", "--config", &c, "--set", "suite.difficulty=1.5"]).0, 1);
    assert_eq!(rosa(&["frobnicate"]).0, 1);
}

#[test]
fn runtime_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let c = write_config(dir.path());
    let out = dir.path().join("o");
    std::fs::create_dir_all(out.join("turns.csv")).unwrap();
    assert_eq!(rosa(&["run", "--config", &c, "--out", out.to_str().unwrap()]).0, 2);
    // stdin is not a terminal under the test runner
    let o2 = dir.path().join("i");
    assert_eq!(
        rosa(&["interactive", "--config", &c, "--out", o2.to_str().unwrap()]).0,
        2
    );
}

#[test]
fn other_subcommands_run() {
    let dir = tempfile::tempdir().unwrap();
    let c = write_config(dir.path());
    let out = dir.path().join("o");
    let o = out.to_str().unwrap();
    assert_eq!(rosa(&["gen-suite", "--config", &c, "--out", o]).0, 0);
    assert_eq!(
        std::fs::read_to_string(out.join("suite.csv")).unwrap().lines().count(),
        21
    );
    let (code, stdout) = rosa(&["sweep-beta", "--config", &c, "--beta", "0.5,1", "--out", o]);
    assert_eq!(code, 0);
    assert_eq!(stdout.lines().count(), 3);
    let (code, stdout) = rosa(&[
        "theory",
        "--config",
        &c,
        "--out",
        o,
        "--set",
        "theory.instances=20",
        "--set",
        "theory.traces=20",
        "--set",
        "theory.sessions=3",
        "--set",
        "theory.lipschitz_samples=200",
    ]);
    assert_eq!(code, 0);
    assert!(stdout.contains("identity,true,20,20"));
    assert!(out.join("theory_summary.csv").exists());
}

#[test]
fn mechanism_names_accepted_on_mlp() {
    let dir = tempfile::tempdir().unwrap();
    let c = write_config(dir.path());
    for m in ["full", "low-rank", "hidden-shift"] {
        let out = dir.path().join(m);
        let args = [
            "run",
            "--config",
            &c,
            "--mechanism",
            m,
            "--set",
            "suite.family=\"mlp\"",
            "--out",
            out.to_str().unwrap(),
        ];
        assert_eq!(rosa(&args).0, 0, "{m}");
    }
}
