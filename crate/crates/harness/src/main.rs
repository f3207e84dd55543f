use std::io::IsTerminal;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rosa_core::engine::Method;
use rosa_harness::config::{self, list_value, Override};
use rosa_harness::experiment::{run_experiment, run_sweep, RunOutput};
use rosa_harness::interactive::{run_interactive_with, InteractiveSpec};
use rosa_harness::suite::write_suites;
use rosa_harness::theory_suite::run_theory_suite;
use rosa_harness::{ExperimentConfig, HarnessError, Result};
use toml::Value;

#[derive(Parser, Debug)]
#[command(
    name = "rosa",
    version,
    about = "Test-time policy adaptation experiments on synthetic tasks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compare methods on the configured suite.
    Run(Common),
    /// Run a β grid (ROSA only unless --method is given).
    SweepBeta(Common),
    /// Numerical checks of the KL bounds.
    Theory(Common),
    /// One task with feedback typed at the terminal.
    Interactive {
        #[command(flatten)]
        common: Common,
        /// Suite task to play.
        #[arg(long, default_value_t = 0)]
        task: usize,
    },
    /// Write the generated suite to suite.csv.
    GenSuite(Common),
}

#[derive(Args, Debug, Clone)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated methods: static, rl, rosa.
    #[arg(long)]
    method: Option<String>,
    /// Comma-separated β values.
    #[arg(long)]
    beta: Option<String>,
    #[arg(long)]
    turns: Option<usize>,
    /// full, low-rank or hidden-shift.
    #[arg(long)]
    mechanism: Option<String>,
    #[arg(long)]
    greedy: bool,
    /// Keep adapted parameters from one task to the next.
    #[arg(long)]
    persist_params: bool,
    /// Any configuration key as section.key=value.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
}

impl Common {
    fn overrides(&self) -> Result<Vec<Override>> {
        let mut o = Vec::new();
        if let Some(seed) = self.seed {
            let seed = i64::try_from(seed).map_err(|_| HarnessError::Config(format!("seed {seed} too large")))?;
            o.push(Override::new("run", "seeds", Value::Array(vec![seed.into()])));
        }
        if let Some(out) = &self.out {
            o.push(Override::new("run", "out", out.display().to_string()));
        }
        if let Some(m) = &self.method {
            o.push(Override::new(
                "run",
                "methods",
                list_value(m, |s| Ok::<_, String>(s.to_string()))?,
            ));
        }
        if let Some(b) = &self.beta {
            o.push(Override::new(
                "run",
                "betas",
                list_value(b, |s| s.parse::<f64>().map_err(|e| format!("beta `{s}`: {e}")))?,
            ));
        }
        if let Some(k) = self.turns {
            o.push(Override::new("run", "turns", k as i64));
        }
        if let Some(m) = &self.mechanism {
            o.push(Override::new("run", "mechanism", m.clone()));
        }
        if self.greedy {
            o.push(Override::new("run", "greedy", true));
        }
        if self.persist_params {
            o.push(Override::new("run", "reset_between_tasks", false));
        }
        for s in &self.set {
            o.push(Override::parse(s)?);
        }
        Ok(o)
    }

    fn load(&self, defaults: &[Override]) -> Result<ExperimentConfig> {
        let mut all = defaults.to_vec();
        all.extend(self.overrides()?);
        config::load(self.config.as_deref(), &all)
    }
}

fn print_run(out: &RunOutput) {
    println!("method,beta,seed,accuracy,correction_uplift");
    for s in &out.summaries {
        let uplift = s
            .metrics
            .correction_uplift
            .map(|u| format!("{u:.1}"))
            .unwrap_or_else(|| "-".into());
        println!(
            "{},{},{},{:.3},{}",
            s.method, s.beta, s.seed, s.metrics.accuracy, uplift
        );
    }
    for f in &out.files {
        eprintln!("wrote {}", f.display());
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Run(c) => print_run(&run_experiment(&c.load(&[])?)?),
        Command::SweepBeta(c) => {
            let defaults = [Override::new("run", "methods", Value::Array(vec!["rosa".into()]))];
            let report = run_sweep(&c.load(&defaults)?)?;
            println!("method,beta,mean_accuracy,min_accuracy,max_accuracy");
            for p in &report.points {
                println!(
                    "{},{},{:.3},{:.3},{:.3}",
                    p.method, p.beta, p.mean_accuracy, p.min_accuracy, p.max_accuracy
                );
            }
            for f in &report.run.files {
                eprintln!("wrote {}", f.display());
            }
        }
        Command::Theory(c) => {
            let report = run_theory_suite(&c.load(&[])?)?;
            println!("check,gated,units,holding,rate,min_slack");
            for r in &report.rates {
                println!(
                    "{},{},{},{},{:.4},{:.3e}",
                    r.check,
                    r.gated,
                    r.units,
                    r.units_holding,
                    r.rate(),
                    r.min_slack
                );
            }
        }
        Command::Interactive { common, task } => {
            let cfg = common.load(&[])?;
            if !std::io::stdin().is_terminal() {
                return Err(HarnessError::Runtime(
                    "interactive mode needs a terminal on stdin".into(),
                ));
            }
            let method = if common.method.is_some() {
                cfg.methods[0]
            } else {
                Method::Rosa
            };
            let beta = if common.beta.is_some() { cfg.betas[0] } else { 1.0 };
            let spec = InteractiveSpec {
                task_id: task,
                method,
                beta,
                seed: cfg.seeds[0],
            };
            let stdin = std::io::stdin();
            let transcript = run_interactive_with(&cfg, spec, stdin.lock(), std::io::stdout())?;
            if let Some(p) = transcript.path {
                eprintln!("appended {}", p.display());
            }
        }
        Command::GenSuite(c) => {
            let path = write_suites(&c.load(&[])?)?;
            eprintln!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
