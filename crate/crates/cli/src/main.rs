use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use drlq_cli::commands::{self, CliError, Controller};
use drlq_cli::config::parse_config;

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Command {
    /// Model-based solution: report.json, policy.csv.
    Solve,
    /// Model-free learning: iterations.csv, policy.csv, theta.csv.
    Learn,
    /// Monte Carlo evaluation: trials.csv, summary.json.
    Eval,
    /// Solve (or learn) and evaluate over a penalty grid: sweep.csv.
    Sweep,
}

/// Distributionally robust LQ control under a Wasserstein penalty.
///
/// Exit codes: 0 success, 1 configuration error, 2 solver error, 3 learning error.
#[derive(Debug, Parser)]
#[command(name = "drlq", version)]
struct Args {
    command: Command,
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the learning and evaluation seeds.
    #[arg(long)]
    seed: Option<u64>,
    /// Controller to evaluate when no --policy is given.
    #[arg(long, value_enum, default_value_t = Controller::Wdr)]
    controller: Controller,
    /// Evaluate this policy.csv instead of solving for one.
    #[arg(long)]
    policy: Option<PathBuf>,
    /// Penalties for sweep: comma-separated values or a:b:k ranges.
    #[arg(long)]
    lambda_grid: Option<String>,
    /// Sweep with the learned policy instead of the model-based one.
    #[arg(long)]
    learn: bool,
    /// Also write every iterate's parameters under theta/.
    #[arg(long)]
    dump_theta: bool,
}

fn run(args: &Args) -> Result<(), CliError> {
    let mut cfg = parse_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.learning.seed = seed;
        cfg.eval.seed = seed;
    }
    let out = commands::ensure_dir(&args.out)?;
    match args.command {
        Command::Solve => {
            let report = commands::cmd_solve(&cfg, &out)?;
            println!(
                "solved in {} iterations; feasible={} rho_closed={} rho_game={}",
                report.iterations, report.feasible, report.rho_closed, report.rho_game
            );
        }
        Command::Learn => {
            let outcome = commands::cmd_learn(&cfg, &out, args.dump_theta)?;
            let last = outcome.logs.last();
            println!(
                "{} iterations; converged={} final delta={}",
                outcome.logs.len(),
                outcome.converged,
                last.map_or(f64::NAN, |l| l.delta)
            );
        }
        Command::Eval => {
            let s = commands::cmd_eval(&cfg, args.policy.as_deref(), args.controller, &out)?;
            println!(
                "{} trials; mean steady state {:?}; mean cost {}",
                s.trials, s.mean_steady, s.mean_cost
            );
        }
        Command::Sweep => {
            let grid = match &args.lambda_grid {
                Some(g) => commands::parse_lambda_grid(g)?,
                None => vec![cfg.cost.lambda()],
            };
            let rows = commands::cmd_sweep(&cfg, &grid, args.learn, &out)?;
            for r in rows.iter().filter(|r| r.error.is_some()) {
                eprintln!(
                    "lambda={}: {}",
                    r.lambda,
                    r.error.as_deref().unwrap_or_default()
                );
            }
            println!(
                "{} rows, {} failed",
                rows.len(),
                rows.iter().filter(|r| r.error.is_some()).count()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
