//! Experiment configuration: JSON in, validated core types out.
//!
//! Parsing walks the JSON tree by hand so that every violation is reported
//! with its field path, not just the first one serde would stop at.

use std::fmt;
use std::path::Path;

use drlq_core::linalg::{self, Matrix, Vector};
use drlq_core::model::GeneratorSpec;
use drlq_core::{
    seeded_rng, CostSpec, DisturbanceGenerator, DisturbanceSamples, ExplorationSpec, LearnConfig,
    LtiSystem, SolverOptions, StateBox,
};
use serde_json::{json, Map, Value};

/// One schema or domain violation.
#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

/// All violations found in a configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigError {
    pub violations: Vec<Violation>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "invalid configuration ({} problem(s))",
            self.violations.len()
        )?;
        for v in &self.violations {
            write!(f, "\n  {}: {}", v.path, v.message)?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

impl ConfigError {
    fn single(path: &str, message: impl Into<String>) -> Self {
        Self {
            violations: vec![Violation {
                path: path.into(),
                message: message.into(),
            }],
        }
    }

    /// Whether some violation sits at `path`.
    pub fn mentions(&self, path: &str) -> bool {
        self.violations.iter().any(|v| v.path == path)
    }
}

/// Where the empirical atoms come from.
#[derive(Clone, Debug, PartialEq)]
pub enum SampleSource {
    Inline,
    Generated {
        generator: DisturbanceGenerator,
        count: usize,
        seed: u64,
    },
}

/// Closed-loop evaluation settings.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    pub horizon: usize,
    pub trials: usize,
    pub seed: u64,
    pub disturbance: DisturbanceGenerator,
    pub x0: Vector,
    pub steady_time_index: usize,
}

/// A fully validated experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub system: LtiSystem,
    pub cost: CostSpec,
    pub samples: DisturbanceSamples,
    pub sample_source: SampleSource,
    pub solver: SolverOptions,
    pub learning: LearnConfig,
    pub eval: EvalConfig,
}

struct Walker {
    errors: Vec<Violation>,
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

impl Walker {
    fn fail(&mut self, path: &str, message: impl Into<String>) {
        self.errors.push(Violation {
            path: path.to_string(),
            message: message.into(),
        });
    }

    fn object<'a>(&mut self, v: &'a Value, path: &str) -> Option<&'a Map<String, Value>> {
        let m = v.as_object();
        if m.is_none() {
            self.fail(path, "expected an object");
        }
        m
    }

    fn required<'a>(
        &mut self,
        m: &'a Map<String, Value>,
        path: &str,
        key: &str,
    ) -> Option<&'a Value> {
        let v = m.get(key);
        if v.is_none() {
            self.fail(&join(path, key), "missing required field");
        }
        v
    }

    fn number(&mut self, v: &Value, path: &str) -> Option<f64> {
        match v.as_f64() {
            Some(x) if x.is_finite() => Some(x),
            _ => {
                self.fail(path, "expected a finite number");
                None
            }
        }
    }

    /// Like [`Walker::number`] but also accepts the strings `"inf"` / `"infinity"`.
    fn number_or_inf(&mut self, v: &Value, path: &str) -> Option<f64> {
        match v.as_str().map(str::to_ascii_lowercase).as_deref() {
            Some("inf" | "infinity") => Some(f64::INFINITY),
            _ => self.number(v, path),
        }
    }

    fn count(&mut self, v: &Value, path: &str) -> Option<usize> {
        let c = v.as_u64().and_then(|c| usize::try_from(c).ok());
        if c.is_none() {
            self.fail(path, "expected a nonnegative integer");
        }
        c
    }

    fn vector(&mut self, v: &Value, path: &str) -> Option<Vec<f64>> {
        let Some(items) = v.as_array() else {
            self.fail(path, "expected an array of numbers");
            return None;
        };
        let mut out = Vec::with_capacity(items.len());
        let mut ok = true;
        for (i, item) in items.iter().enumerate() {
            match self.number(item, &format!("{path}[{i}]")) {
                Some(x) => out.push(x),
                None => ok = false,
            }
        }
        if out.is_empty() && ok {
            self.fail(path, "must not be empty");
            return None;
        }
        ok.then_some(out)
    }

    fn matrix(&mut self, v: &Value, path: &str) -> Option<Matrix> {
        let Some(rows) = v.as_array() else {
            self.fail(path, "expected an array of rows");
            return None;
        };
        let mut parsed = Vec::with_capacity(rows.len());
        for (i, row) in rows.iter().enumerate() {
            parsed.push(self.vector(row, &format!("{path}[{i}]"))?);
        }
        if parsed.is_empty() {
            self.fail(path, "must have at least one row");
            return None;
        }
        match linalg::from_rows(&parsed) {
            Ok(m) => Some(m),
            Err(_) => {
                self.fail(path, "rows differ in length");
                None
            }
        }
    }

    fn generator(&mut self, v: &Value, path: &str) -> Option<DisturbanceGenerator> {
        let spec: GeneratorSpec = match serde_json::from_value(v.clone()) {
            Ok(s) => s,
            Err(e) => {
                self.fail(path, format!("not a disturbance law: {e}"));
                return None;
            }
        };
        match DisturbanceGenerator::try_from(spec) {
            Ok(g) => Some(g),
            Err(e) => {
                self.fail(path, e.to_string());
                None
            }
        }
    }

    fn optional<'a>(m: &'a Map<String, Value>, key: &str) -> Option<&'a Value> {
        m.get(key).filter(|v| !v.is_null())
    }

    fn unknown_keys(&mut self, m: &Map<String, Value>, path: &str, known: &[&str]) {
        for key in m.keys() {
            if !known.contains(&key.as_str()) {
                self.fail(&join(path, key), "unknown field");
            }
        }
    }
}

fn shape(m: &Matrix) -> String {
    format!("{}x{}", m.nrows(), m.ncols())
}

/// Reads and validates a configuration file.
pub fn parse_config(path: impl AsRef<Path>) -> Result<ExperimentConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::single("", format!("cannot read {}: {e}", path.display())))?;
    parse_config_str(&text)
}

/// Validates a configuration given as JSON text.
pub fn parse_config_str(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let value: Value = serde_json::from_str(text)
        .map_err(|e| ConfigError::single("", format!("invalid JSON: {e}")))?;
    parse_config_value(&value)
}

/// Validates a configuration given as a JSON value.
pub fn parse_config_value(value: &Value) -> Result<ExperimentConfig, ConfigError> {
    let mut w = Walker { errors: Vec::new() };
    let config = walk(&mut w, value);
    match config {
        Some(c) if w.errors.is_empty() => Ok(c),
        _ => {
            if w.errors.is_empty() {
                w.fail("", "invalid configuration");
            }
            Err(ConfigError {
                violations: w.errors,
            })
        }
    }
}

fn walk(w: &mut Walker, value: &Value) -> Option<ExperimentConfig> {
    let root = w.object(value, "")?;
    w.unknown_keys(
        root,
        "",
        &["system", "cost", "samples", "solver", "learning", "eval"],
    );

    let system = w.required(root, "", "system").and_then(|v| system(w, v));
    let dims = system
        .as_ref()
        .map(|s| (s.state_dim(), s.input_dim(), s.disturbance_dim()));
    let cost = w.required(root, "", "cost").and_then(|v| cost(w, v, dims));
    let samples = w
        .required(root, "", "samples")
        .and_then(|v| samples(w, v, dims.map(|d| d.2)));
    let solver = match Walker::optional(root, "solver") {
        Some(v) => solver(w, v),
        None => Some(SolverOptions::default()),
    };
    let learning = dims.and_then(|d| learning(w, Walker::optional(root, "learning"), d));
    let eval = match (dims, &samples) {
        (Some(d), Some((s, _))) => eval(w, Walker::optional(root, "eval"), d, s),
        _ => None,
    };

    let (samples, sample_source) = samples?;
    Some(ExperimentConfig {
        system: system?,
        cost: cost?,
        samples,
        sample_source,
        solver: solver?,
        learning: learning?,
        eval: eval?,
    })
}

fn system(w: &mut Walker, v: &Value) -> Option<LtiSystem> {
    let m = w.object(v, "system")?;
    w.unknown_keys(m, "system", &["A", "B", "E"]);
    let a = w
        .required(m, "system", "A")
        .and_then(|v| w.matrix(v, "system.A"));
    let b = w
        .required(m, "system", "B")
        .and_then(|v| w.matrix(v, "system.B"));
    let e = w
        .required(m, "system", "E")
        .and_then(|v| w.matrix(v, "system.E"));
    let (a, b, e) = (a?, b?, e?);
    let n = a.nrows();
    let mut ok = true;
    if !a.is_square() {
        w.fail("system.A", format!("must be square, got {}", shape(&a)));
        ok = false;
    }
    if b.nrows() != n {
        w.fail(
            "system.B",
            format!("must have {n} rows to match A, got {}", shape(&b)),
        );
        ok = false;
    }
    if e.nrows() != n {
        w.fail(
            "system.E",
            format!("must have {n} rows to match A, got {}", shape(&e)),
        );
        ok = false;
    }
    if !ok {
        return None;
    }
    match LtiSystem::new(a, b, e) {
        Ok(s) => Some(s),
        Err(err) => {
            w.fail("system", err.to_string());
            None
        }
    }
}

fn cost(w: &mut Walker, v: &Value, dims: Option<(usize, usize, usize)>) -> Option<CostSpec> {
    let m = w.object(v, "cost")?;
    w.unknown_keys(m, "cost", &["Q", "R", "alpha", "lambda"]);
    let q = w
        .required(m, "cost", "Q")
        .and_then(|v| w.matrix(v, "cost.Q"));
    let r = w
        .required(m, "cost", "R")
        .and_then(|v| w.matrix(v, "cost.R"));
    let alpha = w
        .required(m, "cost", "alpha")
        .and_then(|v| w.number(v, "cost.alpha"));
    let lambda = w
        .required(m, "cost", "lambda")
        .and_then(|v| w.number(v, "cost.lambda"));

    let mut ok = true;
    if let Some(a) = alpha {
        if !(a > 0.0 && a < 1.0) {
            w.fail("cost.alpha", format!("must lie in (0, 1), got {a}"));
            ok = false;
        }
    }
    if let Some(l) = lambda {
        if !(l > 0.0) {
            w.fail("cost.lambda", format!("must be positive, got {l}"));
            ok = false;
        }
    }
    if let Some(q) = &q {
        if let Some((n, _, _)) = dims {
            if q.shape() != (n, n) {
                w.fail(
                    "cost.Q",
                    format!("must be {n}x{n} to match the plant, got {}", shape(q)),
                );
                ok = false;
            }
        }
        if q.is_square() && !linalg::is_psd(q) {
            w.fail(
                "cost.Q",
                format!(
                    "Assumption 1 violated: Q must be symmetric positive semi-definite (min eigenvalue {:e})",
                    linalg::min_eigenvalue(q)
                ),
            );
            ok = false;
        }
    }
    if let Some(r) = &r {
        if let Some((_, m, _)) = dims {
            if r.shape() != (m, m) {
                w.fail(
                    "cost.R",
                    format!("must be {m}x{m} to match the plant, got {}", shape(r)),
                );
                ok = false;
            }
        }
        if r.is_square() && !linalg::is_pd(r) {
            w.fail(
                "cost.R",
                format!(
                    "Assumption 1 violated: R must be symmetric positive definite (min eigenvalue {:e})",
                    linalg::min_eigenvalue(r)
                ),
            );
            ok = false;
        }
    }
    if !ok {
        return None;
    }
    match CostSpec::new(q?, r?, alpha?, lambda?) {
        Ok(c) => Some(c),
        Err(err) => {
            w.fail("cost", err.to_string());
            None
        }
    }
}

fn samples(
    w: &mut Walker,
    v: &Value,
    d: Option<usize>,
) -> Option<(DisturbanceSamples, SampleSource)> {
    let m = w.object(v, "samples")?;
    w.unknown_keys(m, "samples", &["atoms", "generator", "count", "seed"]);
    let (samples, source) = match (
        Walker::optional(m, "atoms"),
        Walker::optional(m, "generator"),
    ) {
        (Some(_), Some(_)) => {
            w.fail("samples", "give either `atoms` or `generator`, not both");
            return None;
        }
        (None, None) => {
            w.fail(
                "samples",
                "needs `atoms` or `generator` with `count` and `seed`",
            );
            return None;
        }
        (Some(atoms), None) => {
            let rows = w.matrix(atoms, "samples.atoms")?;
            let samples = DisturbanceSamples::from_rows(&linalg::to_rows(&rows)).ok()?;
            (samples, SampleSource::Inline)
        }
        (None, Some(gen)) => {
            let generator = w.generator(gen, "samples.generator");
            let count = w
                .required(m, "samples", "count")
                .and_then(|v| w.count(v, "samples.count"));
            let seed = w
                .required(m, "samples", "seed")
                .and_then(|v| w.count(v, "samples.seed"));
            if count == Some(0) {
                w.fail("samples.count", "must be at least 1");
                return None;
            }
            let (generator, count, seed) = (generator?, count?, seed? as u64);
            let mut rng = seeded_rng(seed);
            let atoms = (0..count).map(|_| generator.sample(&mut rng)).collect();
            let samples = DisturbanceSamples::new(atoms).ok()?;
            (
                samples,
                SampleSource::Generated {
                    generator,
                    count,
                    seed,
                },
            )
        }
    };
    if let Some(d) = d {
        if samples.dim() != d {
            let at = if source == SampleSource::Inline {
                "samples.atoms"
            } else {
                "samples.generator"
            };
            w.fail(
                at,
                format!(
                    "atoms have dimension {} but E has {d} columns",
                    samples.dim()
                ),
            );
            return None;
        }
    }
    Some((samples, source))
}

fn solver(w: &mut Walker, v: &Value) -> Option<SolverOptions> {
    let m = w.object(v, "solver")?;
    w.unknown_keys(m, "solver", &["tol", "max_iter"]);
    let mut opts = SolverOptions::default();
    if let Some(v) = Walker::optional(m, "tol") {
        opts.tol = w.number(v, "solver.tol")?;
        if !(opts.tol > 0.0) {
            w.fail("solver.tol", "must be positive");
        }
    }
    if let Some(v) = Walker::optional(m, "max_iter") {
        opts.max_iter = w.count(v, "solver.max_iter")?;
    }
    Some(opts)
}

const LEARNING_KEYS: &[&str] = &[
    "trajectory_len",
    "epsilon",
    "max_iters",
    "sigma",
    "control_cov",
    "disturbance_cov",
    "x0_box",
    "seed",
    "ridge",
    "recovery_ridge",
    "saddle_retries",
    "restart_limit",
    "indicator_x0",
];

fn learning(
    w: &mut Walker,
    v: Option<&Value>,
    (n, m, d): (usize, usize, usize),
) -> Option<LearnConfig> {
    let bound = LearnConfig::uniqueness_bound(n + m + d);
    let mut cfg = LearnConfig::new(n, m, d, (bound + 1).max(900)).ok()?;
    let Some(v) = v else { return Some(cfg) };
    let map = w.object(v, "learning")?;
    w.unknown_keys(map, "learning", LEARNING_KEYS);
    let before = w.errors.len();

    if let Some(v) = Walker::optional(map, "trajectory_len") {
        if let Some(len) = w.count(v, "learning.trajectory_len") {
            if len <= bound {
                w.fail(
                    "learning.trajectory_len",
                    format!("must exceed the uniqueness bound (q+1)(q+2)/2 = {bound} for q = {}, got {len}", n + m + d),
                );
            }
            cfg.trajectory_len = len;
        }
    }
    if let Some(v) = Walker::optional(map, "epsilon") {
        if let Some(eps) = w.number_or_inf(v, "learning.epsilon") {
            if !(eps > 0.0) {
                w.fail("learning.epsilon", "must be positive");
            }
            cfg.epsilon = eps;
        }
    }
    if let Some(v) = Walker::optional(map, "max_iters") {
        if let Some(k) = w.count(v, "learning.max_iters") {
            if k == 0 {
                w.fail("learning.max_iters", "must be at least 1");
            }
            cfg.max_iters = k;
        }
    }
    let sigma = Walker::optional(map, "sigma").and_then(|v| w.number(v, "learning.sigma"));
    let control_cov =
        Walker::optional(map, "control_cov").and_then(|v| w.matrix(v, "learning.control_cov"));
    let disturbance_cov = Walker::optional(map, "disturbance_cov")
        .and_then(|v| w.matrix(v, "learning.disturbance_cov"));
    if sigma.is_some() && (control_cov.is_some() || disturbance_cov.is_some()) {
        w.fail(
            "learning.sigma",
            "give either `sigma` or explicit covariances, not both",
        );
    } else if let Some(s) = sigma {
        match ExplorationSpec::isotropic(m, d, s) {
            Ok(e) if s >= 0.0 => cfg.exploration = e,
            _ => w.fail("learning.sigma", "must be nonnegative"),
        }
    } else if control_cov.is_some() || disturbance_cov.is_some() {
        let c = control_cov.unwrap_or_else(|| cfg.exploration.control_cov().clone());
        let dc = disturbance_cov.unwrap_or_else(|| cfg.exploration.disturbance_cov().clone());
        if c.shape() != (m, m) {
            w.fail(
                "learning.control_cov",
                format!("must be {m}x{m}, got {}", shape(&c)),
            );
        } else if dc.shape() != (d, d) {
            w.fail(
                "learning.disturbance_cov",
                format!("must be {d}x{d}, got {}", shape(&dc)),
            );
        } else {
            match ExplorationSpec::new(c, dc) {
                Ok(e) => cfg.exploration = e,
                Err(e) => w.fail("learning", e.to_string()),
            }
        }
    }
    if let Some(v) = Walker::optional(map, "x0_box") {
        if let Some(b) = state_box(w, v, "learning.x0_box", n) {
            cfg.x0_box = b;
        }
    }
    if let Some(v) = Walker::optional(map, "seed") {
        if let Some(s) = w.count(v, "learning.seed") {
            cfg.seed = s as u64;
        }
    }
    for (key, slot) in [
        ("ridge", &mut cfg.ridge),
        ("recovery_ridge", &mut cfg.recovery_ridge),
    ] {
        if let Some(v) = Walker::optional(map, key) {
            let path = join("learning", key);
            if let Some(x) = w.number(v, &path) {
                if x < 0.0 {
                    w.fail(&path, "must be nonnegative");
                }
                *slot = x;
            }
        }
    }
    for (key, slot) in [
        ("saddle_retries", &mut cfg.saddle_retries),
        ("restart_limit", &mut cfg.restart_limit),
    ] {
        if let Some(v) = Walker::optional(map, key) {
            if let Some(x) = w.count(v, &join("learning", key)) {
                *slot = x;
            }
        }
    }
    if let Some(v) = Walker::optional(map, "indicator_x0") {
        if let Some(x) = w.vector(v, "learning.indicator_x0") {
            if x.len() == n {
                cfg.indicator_x0 = Vector::from_vec(x);
            } else {
                w.fail(
                    "learning.indicator_x0",
                    format!("must have length {n}, got {}", x.len()),
                );
            }
        }
    }
    (w.errors.len() == before).then_some(cfg)
}

fn state_box(w: &mut Walker, v: &Value, path: &str, n: usize) -> Option<StateBox> {
    let m = w.object(v, path)?;
    w.unknown_keys(m, path, &["lower", "upper"]);
    let lower = w
        .required(m, path, "lower")
        .and_then(|v| w.vector(v, &join(path, "lower")));
    let upper = w
        .required(m, path, "upper")
        .and_then(|v| w.vector(v, &join(path, "upper")));
    let (lower, upper) = (lower?, upper?);
    if lower.len() != n || upper.len() != n {
        w.fail(path, format!("bounds must have length {n}"));
        return None;
    }
    match StateBox::new(Vector::from_vec(lower), Vector::from_vec(upper)) {
        Ok(b) => Some(b),
        Err(e) => {
            w.fail(path, e.to_string());
            None
        }
    }
}

/// Default evaluation horizon; long enough to reach the default steady index.
pub const DEFAULT_HORIZON: usize = 200;
/// Default index of the recorded steady state (18 s at a 0.1 s period).
pub const DEFAULT_STEADY_INDEX: usize = 180;
pub const DEFAULT_TRIALS: usize = 500;

fn eval(
    w: &mut Walker,
    v: Option<&Value>,
    (n, _, d): (usize, usize, usize),
    samples: &DisturbanceSamples,
) -> Option<EvalConfig> {
    let mut cfg = EvalConfig {
        horizon: DEFAULT_HORIZON,
        trials: DEFAULT_TRIALS,
        seed: 0,
        disturbance: DisturbanceGenerator::empirical(samples.to_rows()).ok()?,
        x0: Vector::zeros(n),
        steady_time_index: DEFAULT_STEADY_INDEX,
    };
    let Some(v) = v else { return Some(cfg) };
    let m = w.object(v, "eval")?;
    w.unknown_keys(
        m,
        "eval",
        &[
            "horizon",
            "trials",
            "seed",
            "disturbance",
            "x0",
            "steady_time_index",
        ],
    );
    let before = w.errors.len();
    if let Some(v) = Walker::optional(m, "horizon") {
        cfg.horizon = w.count(v, "eval.horizon").unwrap_or(cfg.horizon);
    }
    if let Some(v) = Walker::optional(m, "trials") {
        if let Some(t) = w.count(v, "eval.trials") {
            if t == 0 {
                w.fail("eval.trials", "must be at least 1");
            }
            cfg.trials = t;
        }
    }
    if let Some(v) = Walker::optional(m, "seed") {
        cfg.seed = w.count(v, "eval.seed").map(|s| s as u64).unwrap_or(0);
    }
    if let Some(v) = Walker::optional(m, "disturbance") {
        if let Some(g) = w.generator(v, "eval.disturbance") {
            if g.dim() == d {
                cfg.disturbance = g;
            } else {
                w.fail(
                    "eval.disturbance",
                    format!("has dimension {} but E has {d} columns", g.dim()),
                );
            }
        }
    }
    if let Some(v) = Walker::optional(m, "x0") {
        if let Some(x) = w.vector(v, "eval.x0") {
            if x.len() == n {
                cfg.x0 = Vector::from_vec(x);
            } else {
                w.fail("eval.x0", format!("must have length {n}, got {}", x.len()));
            }
        }
    }
    let explicit_index = Walker::optional(m, "steady_time_index");
    if let Some(v) = explicit_index {
        cfg.steady_time_index = w
            .count(v, "eval.steady_time_index")
            .unwrap_or(cfg.steady_time_index);
    }
    if cfg.steady_time_index > cfg.horizon {
        let path = if explicit_index.is_some() {
            "eval.steady_time_index"
        } else {
            "eval.horizon"
        };
        w.fail(
            path,
            format!(
                "steady_time_index {} exceeds the horizon {}",
                cfg.steady_time_index, cfg.horizon
            ),
        );
    }
    (w.errors.len() == before).then_some(cfg)
}

impl ExperimentConfig {
    /// JSON form that parses back to an equal configuration.
    pub fn to_json(&self) -> Value {
        let rows = |m: &Matrix| json!(linalg::to_rows(m));
        let vec = |v: &Vector| json!(v.iter().copied().collect::<Vec<f64>>());
        let samples = match &self.sample_source {
            SampleSource::Inline => json!({ "atoms": self.samples.to_rows() }),
            SampleSource::Generated {
                generator,
                count,
                seed,
            } => {
                json!({ "generator": generator, "count": count, "seed": seed })
            }
        };
        let l = &self.learning;
        json!({
            "system": { "A": rows(self.system.a()), "B": rows(self.system.b()), "E": rows(self.system.e()) },
            "cost": {
                "Q": rows(self.cost.q()),
                "R": rows(self.cost.r()),
                "alpha": self.cost.alpha(),
                "lambda": self.cost.lambda(),
            },
            "samples": samples,
            "solver": { "tol": self.solver.tol, "max_iter": self.solver.max_iter },
            "learning": {
                "trajectory_len": l.trajectory_len,
                "epsilon": if l.epsilon.is_finite() { json!(l.epsilon) } else { json!("inf") },
                "max_iters": l.max_iters,
                "control_cov": rows(l.exploration.control_cov()),
                "disturbance_cov": rows(l.exploration.disturbance_cov()),
                "x0_box": { "lower": vec(l.x0_box.lower()), "upper": vec(l.x0_box.upper()) },
                "seed": l.seed,
                "ridge": l.ridge,
                "recovery_ridge": l.recovery_ridge,
                "saddle_retries": l.saddle_retries,
                "restart_limit": l.restart_limit,
                "indicator_x0": vec(&l.indicator_x0),
            },
            "eval": {
                "horizon": self.eval.horizon,
                "trials": self.eval.trials,
                "seed": self.eval.seed,
                "disturbance": self.eval.disturbance,
                "x0": vec(&self.eval.x0),
                "steady_time_index": self.eval.steady_time_index,
            },
        })
    }

    /// Same experiment at another penalty.
    pub fn with_lambda(&self, lambda: f64) -> drlq_core::Result<Self> {
        Ok(Self {
            cost: self.cost.with_lambda(lambda)?,
            ..self.clone()
        })
    }
}

/// The quadrotor experiment: double integrator at `T = 0.1`, `Q = I`,
/// `R = 0.2 I`, `alpha = 0.99`, `lambda = 6`, the pinned 10-atom fixture,
/// `M = 900`, and 500 evaluation trials from `x0 = (1.2, 0.6, 0.5, -0.5)`
/// under `N(1.8, 0.1) x N(0.5, 0.1)`.
pub fn quadrotor_preset() -> ExperimentConfig {
    let system = LtiSystem::quadrotor(0.1);
    let cost = CostSpec::new(
        Matrix::identity(4, 4),
        Matrix::identity(2, 2) * 0.2,
        0.99,
        6.0,
    )
    .expect("preset cost is valid");
    let samples = DisturbanceSamples::quadrotor_fixture();
    let mut learning = LearnConfig::new(4, 2, 2, 900).expect("preset learning config is valid");
    learning.epsilon = 1e-6;
    let eval = EvalConfig {
        horizon: DEFAULT_HORIZON,
        trials: DEFAULT_TRIALS,
        seed: 0,
        disturbance: DisturbanceGenerator::gaussian(vec![1.8, 0.5], vec![0.1, 0.1])
            .expect("valid law"),
        x0: Vector::from_vec(vec![1.2, 0.6, 0.5, -0.5]),
        steady_time_index: DEFAULT_STEADY_INDEX,
    };
    ExperimentConfig {
        system,
        cost,
        samples,
        sample_source: SampleSource::Inline,
        solver: SolverOptions::default(),
        learning,
        eval,
    }
}
