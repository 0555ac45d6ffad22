//! The four subcommands and the Monte Carlo harness behind `eval` and `sweep`.
//!
//! Every command returns its in-memory result as well as writing files, so the
//! acceptance harness and tests can inspect both.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use drlq_core::{
    hinf_policy, learn, lqr_gain, seeded_rng, solve, LearnOutcome, LqrOptions, PolicyPair,
    SampleStats, SolveReport, Vector,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ConfigError, ExperimentConfig};

/// Errors surfaced by the commands, grouped by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad configuration, arguments or input files.
    Config(String),
    Solver(drlq_core::Error),
    Learning(drlq_core::Error),
    /// Failure writing results.
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Output(_) => 1,
            CliError::Solver(_) => 2,
            CliError::Learning(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "configuration error: {msg}"),
            CliError::Solver(e) => write!(f, "solver error: {e}"),
            CliError::Learning(e) => write!(f, "learning error: {e}"),
            CliError::Output(msg) => write!(f, "output error: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

fn output_err(path: &Path, e: impl fmt::Display) -> CliError {
    CliError::Output(format!("{}: {e}", path.display()))
}

/// Shortest text that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| output_err(dir, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| output_err(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    let mut f = create(path)?;
    f.write_all(text.as_bytes())
        .and_then(|_| f.flush())
        .map_err(|e| output_err(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| output_err(path, e))?;
    text.push('\n');
    write_text(path, &text)
}

fn write_policy(path: &Path, policy: &PolicyPair) -> Result<(), CliError> {
    let mut f = create(path)?;
    policy
        .to_csv_writer(&mut f)
        .map_err(|e| output_err(path, e))?;
    f.flush().map_err(|e| output_err(path, e))
}

/// Model-based solution; writes `report.json` and `policy.csv`.
pub fn cmd_solve(cfg: &ExperimentConfig, out: &Path) -> Result<SolveReport, CliError> {
    let report =
        solve(&cfg.system, &cfg.cost, &cfg.samples, cfg.solver).map_err(CliError::Solver)?;
    write_json(&out.join("report.json"), &report)?;
    write_policy(&out.join("policy.csv"), &report.policy)?;
    Ok(report)
}

/// Runs the learner; writes `iterations.csv`, `policy.csv`, `theta.csv` and,
/// with `dump_theta`, one `theta/iter_NNNN.csv` per iteration.
pub fn cmd_learn(
    cfg: &ExperimentConfig,
    out: &Path,
    dump_theta: bool,
) -> Result<LearnOutcome, CliError> {
    let stats = SampleStats::from_samples(&cfg.samples);
    let outcome =
        learn(&cfg.system, &cfg.cost, &stats, &cfg.learning).map_err(CliError::Learning)?;

    let mut log = String::from("iter,delta,J,design_condition\n");
    for it in &outcome.logs {
        log += &format!(
            "{},{},{},{}\n",
            it.iter,
            fmt_f64(it.delta),
            fmt_f64(it.cost_indicator),
            fmt_f64(it.design_condition)
        );
    }
    write_text(&out.join("iterations.csv"), &log)?;
    write_policy(&out.join("policy.csv"), &outcome.policy)?;
    if let Some(last) = outcome.logs.last() {
        write_text(&out.join("theta.csv"), &theta_csv(&last.theta.0))?;
    }
    if dump_theta {
        for it in &outcome.logs {
            write_text(
                &out.join("theta").join(format!("iter_{:04}.csv", it.iter)),
                &theta_csv(&it.theta.0),
            )?;
        }
    }
    Ok(outcome)
}

fn theta_csv(theta: &Vector) -> String {
    let mut s = String::from("theta\n");
    for v in theta.iter() {
        s += &fmt_f64(*v);
        s.push('\n');
    }
    s
}

/// Controller used for evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Controller {
    /// Distributionally robust controller from the Riccati-type solver.
    Wdr,
    /// LQR with discount just below 1, ignoring the disturbance.
    Lqr,
    /// Game controller against a zero-mean adversary.
    Hinf,
}

impl Controller {
    pub fn id(self) -> &'static str {
        match self {
            Controller::Wdr => "wdr",
            Controller::Lqr => "lqr",
            Controller::Hinf => "hinf",
        }
    }
}

/// Builds the policy a controller id stands for.
pub fn controller_policy(
    cfg: &ExperimentConfig,
    controller: Controller,
) -> Result<PolicyPair, CliError> {
    let policy = match controller {
        Controller::Wdr => {
            solve(&cfg.system, &cfg.cost, &cfg.samples, cfg.solver).map(|r| r.policy)
        }
        Controller::Lqr => {
            let opts = LqrOptions {
                tol: cfg.solver.tol,
                ..LqrOptions::default()
            };
            lqr_gain(&cfg.system, &cfg.cost, opts).map(|s| s.policy)
        }
        Controller::Hinf => hinf_policy(&cfg.system, &cfg.cost, cfg.solver).map(|r| r.policy),
    };
    policy.map_err(CliError::Solver)
}

/// Reads a `policy.csv` written by `solve` or `learn`.
pub fn read_policy(cfg: &ExperimentConfig, path: &Path) -> Result<PolicyPair, CliError> {
    let file = File::open(path)
        .map_err(|e| CliError::Config(format!("policy file {}: {e}", path.display())))?;
    let policy =
        PolicyPair::from_csv_reader(file, cfg.system.input_dim(), cfg.system.disturbance_dim())
            .map_err(|e| CliError::Config(format!("policy file {}: {e}", path.display())))?;
    policy
        .check_dims(
            cfg.system.state_dim(),
            cfg.system.input_dim(),
            cfg.system.disturbance_dim(),
        )
        .map_err(|e| CliError::Config(format!("policy file {}: {e}", path.display())))?;
    Ok(policy)
}

/// One closed-loop trial.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialRow {
    pub trial: usize,
    /// State at the steady time index.
    pub steady: Vector,
    /// `sum_k alpha^k (x'Qx + u'Ru)` over the horizon.
    pub cost: f64,
}

/// Statistics over all trials; recomputable from the rows.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalSummary {
    pub controller: String,
    pub trials: usize,
    pub horizon: usize,
    pub steady_time_index: usize,
    pub mean_steady: Vec<f64>,
    /// Population variance (divisor = trials).
    pub var_steady: Vec<f64>,
    pub mean_cost: f64,
    #[serde(skip)]
    pub rows: Vec<TrialRow>,
}

/// Applies `u = Kx + r` for `horizon` steps under the configured disturbance.
/// Trial `i` draws from its own stream seeded with `seed + i`.
pub fn run_trial(cfg: &ExperimentConfig, policy: &PolicyPair, trial: usize) -> TrialRow {
    let e = &cfg.eval;
    let mut rng = seeded_rng(e.seed.wrapping_add(trial as u64));
    let (a, b, ex) = (cfg.system.a(), cfg.system.b(), cfg.system.e());
    let (q, r, alpha) = (cfg.cost.q(), cfg.cost.r(), cfg.cost.alpha());
    let mut x = e.x0.clone();
    let mut steady = if e.steady_time_index == 0 {
        Some(x.clone())
    } else {
        None
    };
    let mut cost = 0.0;
    let mut discount = 1.0;
    for k in 0..e.horizon {
        let u = policy.control(&x);
        cost += discount * (x.dot(&(q * &x)) + u.dot(&(r * &u)));
        discount *= alpha;
        let w = e.disturbance.sample(&mut rng);
        x = a * &x + b * &u + ex * &w;
        if k + 1 == e.steady_time_index {
            steady = Some(x.clone());
        }
    }
    TrialRow {
        trial,
        steady: steady.unwrap_or(x),
        cost,
    }
}

/// Mean and population variance, accumulated in trial order.
pub fn summarize(controller: &str, cfg: &ExperimentConfig, rows: Vec<TrialRow>) -> EvalSummary {
    let n = cfg.system.state_dim();
    let count = rows.len() as f64;
    let mut mean = vec![0.0; n];
    let mut mean_cost = 0.0;
    for row in &rows {
        for (m, v) in mean.iter_mut().zip(row.steady.iter()) {
            *m += v;
        }
        mean_cost += row.cost;
    }
    mean.iter_mut().for_each(|m| *m /= count);
    mean_cost /= count;
    let mut var = vec![0.0; n];
    for row in &rows {
        for ((s, m), v) in var.iter_mut().zip(&mean).zip(row.steady.iter()) {
            *s += (v - m) * (v - m);
        }
    }
    var.iter_mut().for_each(|s| *s /= count);
    EvalSummary {
        controller: controller.to_string(),
        trials: rows.len(),
        horizon: cfg.eval.horizon,
        steady_time_index: cfg.eval.steady_time_index,
        mean_steady: mean,
        var_steady: var,
        mean_cost,
        rows,
    }
}

/// Monte Carlo evaluation without writing files.
pub fn evaluate(cfg: &ExperimentConfig, policy: &PolicyPair, controller: &str) -> EvalSummary {
    let rows: Vec<TrialRow> = (0..cfg.eval.trials)
        .into_par_iter()
        .map(|i| run_trial(cfg, policy, i))
        .collect();
    summarize(controller, cfg, rows)
}

/// Header and body of `trials.csv`.
pub fn trials_csv(rows: &[TrialRow], n: usize) -> String {
    let mut s = String::from("trial");
    for i in 1..=n {
        s += &format!(",x{i}");
    }
    s += ",cost\n";
    for row in rows {
        s += &row.trial.to_string();
        for v in row.steady.iter() {
            s.push(',');
            s += &fmt_f64(*v);
        }
        s.push(',');
        s += &fmt_f64(row.cost);
        s.push('\n');
    }
    s
}

/// Evaluates a policy from `policy_file`, or the one `controller` names;
/// writes `trials.csv` and `summary.json`.
pub fn cmd_eval(
    cfg: &ExperimentConfig,
    policy_file: Option<&Path>,
    controller: Controller,
    out: &Path,
) -> Result<EvalSummary, CliError> {
    let policy = match policy_file {
        Some(path) => read_policy(cfg, path)?,
        None => controller_policy(cfg, controller)?,
    };
    let summary = evaluate(cfg, &policy, controller.id());
    write_text(
        &out.join("trials.csv"),
        &trials_csv(&summary.rows, cfg.system.state_dim()),
    )?;
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

/// Parses a comma-separated list whose entries are single values or `a:b:k`
/// ranges (k evenly spaced points, both ends included).
pub fn parse_lambda_grid(text: &str) -> Result<Vec<f64>, CliError> {
    let bad = |why: &str| CliError::Config(format!("--lambda-grid {text:?}: {why}"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad("not a number"));
    let mut grid = Vec::new();
    for part in text.split(',') {
        match part.split(':').collect::<Vec<_>>().as_slice() {
            [a, b, k] => {
                let (a, b) = (num(a)?, num(b)?);
                let k: usize = k
                    .trim()
                    .parse()
                    .map_err(|_| bad("point count must be a positive integer"))?;
                match k {
                    0 => return Err(bad("point count must be a positive integer")),
                    1 => grid.push(a),
                    _ => grid.extend((0..k).map(|i| a + (b - a) * i as f64 / (k - 1) as f64)),
                }
            }
            [v] => grid.push(num(v)?),
            _ => return Err(bad("entries must be a value or a:b:k")),
        }
    }
    if grid.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
        return Err(bad("penalties must be positive and finite"));
    }
    Ok(grid)
}

/// One row of `sweep.csv`; statistics are NaN when the entry failed.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub lambda: f64,
    pub mean_x1: f64,
    pub var_x1: f64,
    pub mean_cost: f64,
    pub feasible: bool,
    /// Why the entry failed, if it did.
    pub error: Option<String>,
}

fn sweep_entry(
    cfg: &ExperimentConfig,
    lambda: f64,
    use_learning: bool,
) -> Result<SweepRow, String> {
    let cfg = cfg.with_lambda(lambda).map_err(|e| e.to_string())?;
    let report =
        solve(&cfg.system, &cfg.cost, &cfg.samples, cfg.solver).map_err(|e| e.to_string())?;
    let policy = if use_learning {
        let stats = SampleStats::from_samples(&cfg.samples);
        learn(&cfg.system, &cfg.cost, &stats, &cfg.learning)
            .map_err(|e| e.to_string())?
            .policy
    } else {
        report.policy
    };
    let summary = evaluate(
        &cfg,
        &policy,
        if use_learning { "wdr-learned" } else { "wdr" },
    );
    Ok(SweepRow {
        lambda,
        mean_x1: summary.mean_steady[0],
        var_x1: summary.var_steady[0],
        mean_cost: summary.mean_cost,
        feasible: report.feasible,
        error: None,
    })
}

/// Solves (or learns) and evaluates at every penalty; failures become rows.
/// Writes `sweep.csv`.
pub fn cmd_sweep(
    cfg: &ExperimentConfig,
    grid: &[f64],
    use_learning: bool,
    out: &Path,
) -> Result<Vec<SweepRow>, CliError> {
    let rows: Vec<SweepRow> = grid
        .iter()
        .map(|&lambda| {
            sweep_entry(cfg, lambda, use_learning).unwrap_or_else(|e| SweepRow {
                lambda,
                mean_x1: f64::NAN,
                var_x1: f64::NAN,
                mean_cost: f64::NAN,
                feasible: false,
                error: Some(e),
            })
        })
        .collect();
    let mut s = String::from("lambda,mean_x1,var_x1,mean_cost,feasible\n");
    for r in &rows {
        s += &format!(
            "{},{},{},{},{}\n",
            fmt_f64(r.lambda),
            fmt_f64(r.mean_x1),
            fmt_f64(r.var_x1),
            fmt_f64(r.mean_cost),
            r.feasible
        );
    }
    write_text(&out.join("sweep.csv"), &s)?;
    Ok(rows)
}

/// Output directory helper used by the binary.
pub fn ensure_dir(out: &Path) -> Result<PathBuf, CliError> {
    fs::create_dir_all(out).map_err(|e| output_err(out, e))?;
    Ok(out.to_path_buf())
}
