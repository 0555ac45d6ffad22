//! Acceptance checks: one PASS/FAIL line per criterion, with timing and the
//! measured numbers. Prints a tally; exits nonzero only if a check panics.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use drlq_cli::commands::{self, Controller};
use drlq_cli::{parse_config, ExperimentConfig};
use drlq_core::dr_riccati::{finite_horizon_value, DpGrid, DpOracle};
use drlq_core::{
    closed_form_iterate, eval_q, feasibility_threshold, greedy_policies, hinf_policy, lqr_gain,
    lstsq_update, q_from_value, rollout, seeded_rng, solve, unpack_theta, CostSpec,
    DisturbanceSamples, ExplorationSpec, LqrOptions, LtiSystem, Matrix, PolicyPair, QParams,
    SampleStats, SolverOptions, Vector,
};
use rand::Rng;
use tempfile::TempDir;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn preset() -> ExperimentConfig {
    parse_config(configs().join("quadrotor.json")).expect("preset config parses")
}

fn scalar() -> (LtiSystem, CostSpec, DisturbanceSamples) {
    let one = |v: f64| Matrix::from_element(1, 1, v);
    let sys = LtiSystem::new(one(0.9), one(1.0), one(1.0)).unwrap();
    let cost = CostSpec::new(one(1.0), one(1.0), 0.95, 10.0).unwrap();
    let samples = DisturbanceSamples::from_rows(&[vec![0.1], vec![-0.1]]).unwrap();
    (sys, cost, samples)
}

fn quadrotor(lambda: f64) -> (LtiSystem, CostSpec, DisturbanceSamples) {
    let cfg = preset();
    (
        cfg.system,
        cfg.cost.with_lambda(lambda).unwrap(),
        cfg.samples,
    )
}

fn rel(a: &Matrix, b: &Matrix) -> f64 {
    (a - b).amax() / b.amax().max(f64::MIN_POSITIVE)
}

fn vec_rel(a: &Vector, b: &Vector) -> f64 {
    (a - b).amax() / b.amax().max(f64::MIN_POSITIVE)
}

fn c1_feasibility_threshold() -> Outcome {
    let (sys, cost, _) = quadrotor(6.0);
    let t0 = Instant::now();
    let lambda =
        feasibility_threshold(&sys, &cost, 0.05, 1.0, 1e-5, SolverOptions::default()).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        (0.20..=0.24).contains(&lambda) && secs < 5.0,
        format!("threshold {lambda:.5} (band [0.20, 0.24]), {secs:.2} s (limit 5 s)"),
    )
}

fn c2_learning_agrees_with_solver() -> Outcome {
    let cfg = preset();
    let tmp = TempDir::new().unwrap();
    let t0 = Instant::now();
    let learned = commands::cmd_learn(&cfg, &tmp.path().join("learn"), false).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    let model = commands::cmd_solve(&cfg, &tmp.path().join("solve")).unwrap();
    let k = rel(&learned.policy.gain, &model.policy.gain);
    let r = vec_rel(&learned.policy.offset, &model.policy.offset);
    let iters = learned.logs.len();
    let last = learned.logs.last().unwrap();
    let settle = learned
        .logs
        .iter()
        .position(|l| {
            (l.cost_indicator - last.cost_indicator).abs() <= 1e-3 * last.cost_indicator.abs()
        })
        .map_or(iters, |i| i + 1);
    outcome(
        k <= 1e-2 && r <= 1e-2 && iters <= 50 && secs < 60.0,
        format!(
            "K rel err {k:.2e}, r rel err {r:.2e} after {iters} iterations, {secs:.2} s; J within 0.1% of its final \
             value {:.4} from iteration {settle}; epsilon test fired: {} (final delta {:.3e}: the constant term \
             contracts at rate alpha, so delta <= {:e} needs far more than 50 iterations)",
            last.cost_indicator, learned.converged, last.delta, cfg.learning.epsilon
        ),
    )
}

fn one_fit(
    sys: &LtiSystem,
    cost: &CostSpec,
    samples: &DisturbanceSamples,
    steps: usize,
    len: usize,
) -> f64 {
    let stats = SampleStats::from_samples(samples);
    let (n, m, d) = (sys.state_dim(), sys.input_dim(), sys.disturbance_dim());
    let mut qp = QParams::zeros(n, m, d);
    let mut policy = PolicyPair::zeros(n, m, d);
    for _ in 0..steps {
        qp = closed_form_iterate(sys, cost, &stats, &qp, &policy).unwrap();
        policy = greedy_policies(&qp).unwrap();
    }
    let noise = ExplorationSpec::isotropic(m, d, 1.0).unwrap();
    let mut rng = seeded_rng(steps as u64);
    let data = rollout(
        sys,
        &policy,
        &noise,
        &Vector::from_element(n, 0.5),
        len,
        &mut rng,
    )
    .unwrap();
    let fit = lstsq_update(&data, &qp, &policy, cost, &stats, 0.0).unwrap();
    let learned = unpack_theta(&fit.theta, n, m, d).unwrap();
    let model = closed_form_iterate(sys, cost, &stats, &qp, &policy).unwrap();
    learned.max_rel_diff(&model)
}

fn c3_regression_equals_closed_form() -> Outcome {
    let t0 = Instant::now();
    let (sys, cost, samples) = scalar();
    let scalar_err = [1, 5, 200]
        .iter()
        .map(|&s| one_fit(&sys, &cost, &samples, s, 40))
        .fold(0.0, f64::max);
    let (sys, cost, samples) = quadrotor(6.0);
    let quad_err = [1, 10, 500]
        .iter()
        .map(|&s| one_fit(&sys, &cost, &samples, s, 200))
        .fold(0.0, f64::max);
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        scalar_err <= 1e-6 && quad_err <= 1e-6 && secs < 5.0,
        format!("max rel diff scalar {scalar_err:.2e}, quadrotor {quad_err:.2e} (tol 1e-6), {secs:.2} s"),
    )
}

fn closed_form_limit_gap(sys: &LtiSystem, cost: &CostSpec, samples: &DisturbanceSamples) -> f64 {
    let stats = SampleStats::from_samples(samples);
    let opts = SolverOptions {
        tol: 1e-13,
        ..Default::default()
    };
    let report = solve(sys, cost, samples, opts).unwrap();
    let target = q_from_value(sys, cost, &report.value, &stats).unwrap();
    let (n, m, d) = (sys.state_dim(), sys.input_dim(), sys.disturbance_dim());
    let mut qp = QParams::zeros(n, m, d);
    let mut policy = PolicyPair::zeros(n, m, d);
    for _ in 0..20_000 {
        let next = closed_form_iterate(sys, cost, &stats, &qp, &policy).unwrap();
        policy = greedy_policies(&next).unwrap();
        let step = next.max_rel_diff(&qp);
        qp = next;
        if step < 1e-15 {
            break;
        }
    }
    qp.max_rel_diff(&target)
}

fn c4_closed_form_reaches_value_iteration() -> Outcome {
    let (sys, cost, samples) = scalar();
    let a = closed_form_limit_gap(&sys, &cost, &samples);
    let (sys, cost, samples) = quadrotor(6.0);
    let b = closed_form_limit_gap(&sys, &cost, &samples);
    outcome(
        a <= 1e-8 && b <= 1e-8,
        format!("max rel diff scalar {a:.2e}, quadrotor {b:.2e} (tol 1e-8)"),
    )
}

fn c5_dp_oracle() -> Outcome {
    let (sys, cost, samples) = scalar();
    let stats = SampleStats::from_samples(&samples);
    let table = DpOracle::new(
        &sys,
        &cost,
        &samples,
        DpGrid::symmetric(1, 1, 1, 2.0, 4.0, 4.0),
    )
    .unwrap()
    .run(50)
    .unwrap();
    let star = solve(
        &sys,
        &cost,
        &samples,
        SolverOptions {
            tol: 1e-13,
            ..Default::default()
        },
    )
    .unwrap()
    .value;
    let fifty = finite_horizon_value(&sys, &cost, &stats, 50).unwrap();
    let mut gap_star: f64 = 0.0;
    let mut gap_fifty: f64 = 0.0;
    for x in [-1.0, -0.5, 0.0, 0.3, 1.0] {
        let x = Vector::from_vec(vec![x]);
        let dp = table.value_at(&x).unwrap();
        gap_star = gap_star.max((dp - star.eval(&x)).abs());
        gap_fifty = gap_fifty.max((dp - fifty.eval(&x)).abs());
    }
    let zero = Matrix::zeros(1, 1);
    let still = LtiSystem::new(zero.clone(), zero.clone(), zero).unwrap();
    let z = solve(&still, &cost, &samples, SolverOptions::default())
        .unwrap()
        .value
        .z;
    outcome(
        gap_star <= 1e-3 && z == 0.0,
        format!(
            "max |DP_50 - V*| = {gap_star:.4e} (tol 1e-3); z = {z} for A=B=E=0; diagnostics: max |DP_50 - V_50| = \
             {gap_fifty:.2e}, constant z* = {:.4} vs 50-step z_50 = {:.4}: a 50-step horizon omits the discounted \
             tail (alpha^50 = {:.3}), so the gap to V* is structural",
            star.z,
            fifty.z,
            cost.alpha().powi(50)
        ),
    )
}

fn c6_saddle_point() -> Outcome {
    let (sys, cost, samples) = quadrotor(6.0);
    let stats = SampleStats::from_samples(&samples);
    let report = solve(&sys, &cost, &samples, SolverOptions::default()).unwrap();
    let q = q_from_value(&sys, &cost, &report.value, &stats).unwrap();
    let mut rng = seeded_rng(1000);
    let mut draw = |n: usize, half: f64| Vector::from_fn(n, |_, _| rng.random_range(-half..half));
    let mut violations = 0;
    for _ in 0..1000 {
        let x = draw(4, 2.0);
        let (du, dw) = (draw(2, 1.0), draw(2, 1.0));
        let (u, w) = (report.policy.control(&x), report.policy.adversary(&x));
        let center = eval_q(&q, &x, &u, &w).unwrap();
        let moved_u = eval_q(&q, &x, &(&u + du), &w).unwrap();
        let moved_w = eval_q(&q, &x, &u, &(&w + dw)).unwrap();
        if !(moved_u >= center && center >= moved_w) {
            violations += 1;
        }
    }
    outcome(
        violations == 0,
        format!("{violations} violations in 1000 perturbations"),
    )
}

fn c7_stability() -> Outcome {
    let cfg = preset();
    let report = solve(&cfg.system, &cfg.cost, &cfg.samples, cfg.solver).unwrap();
    outcome(
        report.rho_closed < 1.0 && report.rho_game < 1.0,
        format!(
            "rho(A+BK) = {:.6}, rho(A+BK+EL) = {:.6}",
            report.rho_closed, report.rho_game
        ),
    )
}

/// Zero-mean game written directly as `P = Q + A' aP (I + (B R^-1 B' - E E'/lambda) aP)^-1 A`.
fn hinf_reference(sys: &LtiSystem, cost: &CostSpec) -> (Matrix, Matrix, Matrix) {
    let n = sys.state_dim();
    let (a, b, e) = (sys.a(), sys.b(), sys.e());
    let r_inv = cost.r().clone().try_inverse().unwrap();
    let spread = b * &r_inv * b.transpose() - e * e.transpose() / cost.lambda();
    let mut p = Matrix::zeros(n, n);
    for _ in 0..200_000 {
        let ap = &p * cost.alpha();
        let core = (Matrix::identity(n, n) + &spread * &ap)
            .try_inverse()
            .unwrap();
        let next = cost.q() + a.transpose() * &ap * &core * a;
        let next = (&next + next.transpose()) * 0.5;
        let done = (&next - &p).amax() < 1e-14 * next.amax();
        p = next;
        if done {
            break;
        }
    }
    let ap = &p * cost.alpha();
    let core = (Matrix::identity(n, n) + &spread * &ap)
        .try_inverse()
        .unwrap();
    let k = -(&r_inv * b.transpose() * &ap * &core * a);
    let l = e.transpose() * &ap * &core * a / cost.lambda();
    (p, k, l)
}

fn c8_limits() -> Outcome {
    let (sys, cost, _) = quadrotor(1e6);
    let centered = DisturbanceSamples::from_rows(&[
        vec![0.3, -0.2],
        vec![-0.3, 0.2],
        vec![0.1, 0.4],
        vec![-0.1, -0.4],
    ])
    .unwrap();
    let wdr = solve(&sys, &cost, &centered, SolverOptions::default()).unwrap();
    let lqr = lqr_gain(
        &sys,
        &cost,
        LqrOptions {
            alpha: cost.alpha(),
            ..Default::default()
        },
    )
    .unwrap();
    let k_gap = (&wdr.policy.gain - &lqr.policy.gain).norm();
    let r_norm = wdr.policy.offset.norm();

    let (sys, cost, _) = quadrotor(6.0);
    let hinf = hinf_policy(
        &sys,
        &cost,
        SolverOptions {
            tol: 1e-13,
            ..Default::default()
        },
    )
    .unwrap();
    let exact_zero = hinf
        .policy
        .offset
        .iter()
        .chain(hinf.policy.adversary_offset.iter())
        .all(|v| *v == 0.0);
    let (p, k, l) = hinf_reference(&sys, &cost);
    let ref_gap = rel(&hinf.value.p, &p)
        .max(rel(&hinf.policy.gain, &k))
        .max(rel(&hinf.policy.adversary_gain, &l));
    outcome(
        k_gap <= 1e-3 && r_norm <= 1e-6 && exact_zero && ref_gap <= 1e-8,
        format!(
            "lambda=1e6: |K - K_LQR| = {k_gap:.2e}, |r| = {r_norm:.2e}; zero-mean game: r = l = 0 exactly: \
             {exact_zero}, rel diff to reference Riccati {ref_gap:.2e}"
        ),
    )
}

fn steady_bias(cfg: &ExperimentConfig, controller: Controller) -> f64 {
    let policy = commands::controller_policy(cfg, controller).unwrap();
    commands::evaluate(cfg, &policy, controller.id()).mean_steady[0].abs()
}

fn c9_monte_carlo() -> Outcome {
    let nominal = preset();
    let mixture = parse_config(configs().join("quadrotor_mixture.json")).unwrap();
    let (wn, ln) = (
        steady_bias(&nominal, Controller::Wdr),
        steady_bias(&nominal, Controller::Lqr),
    );
    let (wm, lm) = (
        steady_bias(&mixture, Controller::Wdr),
        steady_bias(&mixture, Controller::Lqr),
    );
    outcome(
        wn < ln && wm < lm,
        format!(
            "{} trials, seed {}: nominal |mean x1| WDR {wn:.4} vs LQR {ln:.4} ({}); mixture WDR {wm:.4} vs LQR \
             {lm:.4} ({}). Under the mixture the mean of w1 drops to 0.95, the WDR offset still cancels the \
             trained mean (about 1.8), and its discounted gain is softer than the undiscounted LQR gain, so it \
             overshoots by about as much as LQR undershoots",
            nominal.eval.trials,
            nominal.eval.seed,
            if wn < ln { "holds" } else { "fails" },
            if wm < lm { "holds" } else { "fails" },
        ),
    )
}

fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((
                    p.strip_prefix(dir).unwrap().to_path_buf(),
                    fs::read(&p).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

fn c10_reproducibility() -> Outcome {
    let tmp = TempDir::new().unwrap();
    let config = configs().join("quadrotor.json");
    let runs: [(&str, &[&str]); 5] = [
        ("solve", &[]),
        ("learn", &["--dump-theta"]),
        ("eval", &["--controller", "wdr"]),
        ("eval", &["--controller", "lqr", "--seed", "3"]),
        ("sweep", &["--lambda-grid", "0.1,0.22:10:5"]),
    ];
    let mut mismatched = Vec::new();
    let mut files = 0;
    for (i, (cmd, extra)) in runs.iter().enumerate() {
        let mut outputs = Vec::new();
        for copy in 0..2 {
            let out = tmp.path().join(format!("{i}_{cmd}_{copy}"));
            let status = Command::new(env!("CARGO_BIN_EXE_drlq"))
                .arg(cmd)
                .arg("--config")
                .arg(&config)
                .arg("--out")
                .arg(&out)
                .args(*extra)
                .output()
                .unwrap()
                .status;
            assert!(status.success(), "{cmd} failed");
            outputs.push(tree(&out));
        }
        files += outputs[0].len();
        if outputs[0] != outputs[1] || outputs[0].is_empty() {
            mismatched.push(*cmd);
        }
    }
    outcome(
        mismatched.is_empty(),
        format!(
            "{files} files over {} command runs compared byte for byte; mismatches: {mismatched:?}",
            runs.len()
        ),
    )
}

fn main() {
    let checks: [(usize, fn() -> Outcome); 10] = [
        (1, c1_feasibility_threshold),
        (2, c2_learning_agrees_with_solver),
        (3, c3_regression_equals_closed_form),
        (4, c4_closed_form_reaches_value_iteration),
        (5, c5_dp_oracle),
        (6, c6_saddle_point),
        (7, c7_stability),
        (8, c8_limits),
        (9, c9_monte_carlo),
        (10, c10_reproducibility),
    ];
    let mut passed = 0;
    let mut total = Duration::ZERO;
    for (id, check) in checks {
        let t0 = Instant::now();
        let o = check();
        let dt = t0.elapsed();
        total += dt;
        passed += usize::from(o.pass);
        println!(
            "criterion {id:>2}: {} [{:.2} s] {}",
            if o.pass { "PASS" } else { "FAIL" },
            dt.as_secs_f64(),
            o.detail
        );
    }
    println!(
        "acceptance: {passed}/10 PASS in {:.1} s",
        total.as_secs_f64()
    );
}
