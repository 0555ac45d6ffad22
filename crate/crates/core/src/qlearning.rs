//! Model-free Q-learning for the penalized game.
//!
//! Each iteration rolls the current policy pair out on the simulator with
//! exploration noise on both inputs, regresses the one-step Bellman targets on
//! the quadratic basis, and takes the saddle point of the fitted Q-function as
//! the next policy pair. The model never enters the loop except through
//! [`Simulator::simulate`]. [`closed_form_iterate`] is the same update written
//! in terms of the model, for testing.

use crate::dr_riccati::PolicyPair;
use crate::empirical::SampleStats;
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::model::{
    rollout, seeded_rng, CostSpec, ExplorationSpec, LtiSystem, Simulator, StateBox, Transition,
};
use crate::qfunction::{
    basis_vector, eval_q, greedy_policies, pack_theta, theta_len, unpack_theta, QParams,
    ThetaVector,
};

/// Condition numbers of the regression normal matrix above this are rejected
/// unless a ridge is supplied.
pub const MAX_DESIGN_CONDITION: f64 = 1e12;

/// Above this the design is numerically rank deficient and no ridge is accepted.
pub const SINGULAR_DESIGN_CONDITION: f64 = 1e20;

/// Settings for [`learn`].
#[derive(Clone, Debug, PartialEq)]
pub struct LearnConfig {
    /// Transitions per iteration.
    pub trajectory_len: usize,
    /// Stop once `|theta_{i+1} - theta_i|_2 <= epsilon`.
    pub epsilon: f64,
    pub max_iters: usize,
    pub exploration: ExplorationSpec,
    /// Initial states are drawn uniformly from this box, once per iteration.
    pub x0_box: StateBox,
    pub seed: u64,
    /// Ridge on the column-equilibrated regression; 0 means plain least squares.
    pub ridge: f64,
    /// Ridge retried once when a plain fit fails the excitation test; 0 disables the retry.
    pub recovery_ridge: f64,
    /// Consecutive fits without saddle structure tolerated before aborting.
    pub saddle_retries: usize,
    /// Fresh initial states tried when a rollout diverges.
    pub restart_limit: usize,
    /// Start of the noise-free rollout used for the cost indicator.
    pub indicator_x0: Vector,
}

impl LearnConfig {
    /// Defaults: exploration `0.1^2 I`, states in `[-1, 1]^n`, indicator from the all-ones state.
    pub fn new(n: usize, m: usize, d: usize, trajectory_len: usize) -> Result<Self> {
        Ok(Self {
            trajectory_len,
            epsilon: 1e-6,
            max_iters: 50,
            exploration: ExplorationSpec::isotropic(m, d, 0.1)?,
            x0_box: StateBox::symmetric(n, 1.0)?,
            seed: 0,
            ridge: 0.0,
            recovery_ridge: 1e-18,
            saddle_retries: 3,
            restart_limit: 10,
            indicator_x0: Vector::from_element(n, 1.0),
        })
    }

    /// Smallest admissible trajectory length is one more than this.
    pub fn uniqueness_bound(q: usize) -> usize {
        (q + 1) * (q + 2) / 2
    }

    pub fn validate(&self, n: usize, m: usize, d: usize) -> Result<()> {
        let q = n + m + d;
        let bound = Self::uniqueness_bound(q);
        if self.trajectory_len <= bound {
            return Err(Error::InvalidParameter(format!(
                "trajectory length {} must exceed (q+1)(q+2)/2 = {bound} for q = {q}",
                self.trajectory_len
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidParameter("epsilon must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter(
                "max_iters must be at least 1".into(),
            ));
        }
        if !(self.ridge >= 0.0
            && self.ridge.is_finite()
            && self.recovery_ridge >= 0.0
            && self.recovery_ridge.is_finite())
        {
            return Err(Error::InvalidParameter(
                "ridge must be finite and nonnegative".into(),
            ));
        }
        if self.x0_box.dim() != n || self.indicator_x0.len() != n {
            return Err(Error::Dimension(
                "initial-state box or indicator state does not match n".into(),
            ));
        }
        if self.exploration.control_cov().nrows() != m
            || self.exploration.disturbance_cov().nrows() != d
        {
            return Err(Error::Dimension(
                "exploration covariances do not match (m, d)".into(),
            ));
        }
        Ok(())
    }
}

/// One row of the learning log.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationLog {
    /// 1-based index of the fitted parameter vector.
    pub iter: usize,
    pub theta: ThetaVector,
    pub delta: f64,
    /// Discounted penalized cost of the new policy pair on a noise-free rollout.
    pub cost_indicator: f64,
    pub design_condition: f64,
    /// Ridge the fit was solved with.
    pub ridge: f64,
}

/// Result of [`learn`].
#[derive(Clone, Debug, PartialEq)]
pub struct LearnOutcome {
    pub qparams: QParams,
    pub policy: PolicyPair,
    pub logs: Vec<IterationLog>,
    /// Whether the `epsilon` test fired before `max_iters`.
    pub converged: bool,
}

/// Regression target of one transition: the stage term at the recorded inputs
/// plus the discounted Q-value of the current policy pair at the next state.
pub fn target_value(
    cost: &CostSpec,
    stats: &SampleStats,
    qp: &QParams,
    policy: &PolicyPair,
    t: &Transition,
) -> Result<f64> {
    let stage = cost.stage_cost(&t.x, &t.u)? - cost.lambda() * (&t.w - &stats.mean).norm_squared();
    let u_next = policy.control(&t.x_next);
    let w_next = policy.adversary(&t.x_next);
    Ok(stage + cost.alpha() * eval_q(qp, &t.x_next, &u_next, &w_next)?)
}

/// Output of [`lstsq_update`].
#[derive(Clone, Debug, PartialEq)]
pub struct LstsqFit {
    pub theta: ThetaVector,
    /// Condition number of the column-equilibrated normal matrix, before any ridge.
    pub design_condition: f64,
}

/// Least-squares fit of `theta' basis(x, u, w)` to the targets, using the recorded inputs.
///
/// Columns are scaled to unit norm and the scaled problem is solved by SVD. A
/// positive `ridge` adds `ridge * |D theta|^2`, `D` the column scales, which
/// admits designs above [`MAX_DESIGN_CONDITION`] but never singular ones.
pub fn lstsq_update(
    transitions: &[Transition],
    qp: &QParams,
    policy: &PolicyPair,
    cost: &CostSpec,
    stats: &SampleStats,
    ridge: f64,
) -> Result<LstsqFit> {
    let p = theta_len(qp.dim());
    let rows = transitions.len();
    if rows == 0 {
        return Err(Error::InvalidParameter("no transitions to fit".into()));
    }
    let mut design = Matrix::zeros(rows, p);
    let mut targets = Vector::zeros(rows);
    for (k, t) in transitions.iter().enumerate() {
        design
            .row_mut(k)
            .copy_from(&basis_vector(&t.x, &t.u, &t.w).transpose());
        targets[k] = target_value(cost, stats, qp, policy, t)?;
    }
    if !(linalg::all_finite(&design) && targets.iter().all(|v| v.is_finite())) {
        return Err(Error::Conditioning("non-finite regression data".into()));
    }

    let scales: Vec<f64> = design.column_iter().map(|c| c.norm()).collect();
    let limit = if ridge > 0.0 {
        SINGULAR_DESIGN_CONDITION
    } else {
        MAX_DESIGN_CONDITION
    };
    if scales.contains(&0.0) {
        return Err(Error::Excitation {
            condition: f64::INFINITY,
            limit,
        });
    }
    for (j, s) in scales.iter().enumerate() {
        design.column_mut(j).scale_mut(1.0 / s);
    }
    let (a, b) = if ridge > 0.0 {
        let penalty = Matrix::identity(p, p) * ridge.sqrt();
        (
            linalg::vstack(&[&design, &penalty]),
            linalg::concat(&[&targets, &Vector::zeros(p)]),
        )
    } else {
        (design.clone(), targets)
    };

    let spectrum = design.singular_values();
    let s_max = spectrum.max();
    let s_min = spectrum.min();
    let condition = if s_min > 0.0 {
        (s_max / s_min).powi(2)
    } else {
        f64::INFINITY
    };
    if !(condition <= limit) {
        return Err(Error::Excitation { condition, limit });
    }
    let scaled = a
        .svd(true, true)
        .solve(&b, 0.0)
        .map_err(|e| Error::Conditioning(format!("least-squares solve failed: {e}")))?;
    let theta = Vector::from_iterator(p, scaled.iter().zip(&scales).map(|(v, s)| v / s));
    Ok(LstsqFit {
        theta: ThetaVector(theta),
        design_condition: condition,
    })
}

/// One learning update computed from the model instead of data.
pub fn closed_form_iterate(
    sys: &LtiSystem,
    cost: &CostSpec,
    stats: &SampleStats,
    qp: &QParams,
    policy: &PolicyPair,
) -> Result<QParams> {
    let (n, m, d) = (sys.state_dim(), sys.input_dim(), sys.disturbance_dim());
    cost.check_compatible(sys)?;
    policy.check_dims(n, m, d)?;
    if qp.n != n || qp.m != m || qp.d != d || stats.dim() != d {
        return Err(Error::Dimension(
            "Q-function or statistics do not match the plant".into(),
        ));
    }
    let dynamics = linalg::hstack(&[sys.a(), sys.b(), sys.e()]);
    let lift = linalg::vstack(&[
        &Matrix::identity(n, n),
        &policy.gain,
        &policy.adversary_gain,
    ]);
    let op = &lift * &dynamics;
    let c = linalg::concat(&[&Vector::zeros(n), &policy.offset, &policy.adversary_offset]);
    let alpha = cost.alpha();
    let lambda = cost.lambda();

    let q = n + m + d;
    let mut w = Matrix::zeros(q, q);
    w.view_mut((0, 0), (n, n)).copy_from(cost.q());
    w.view_mut((n, n), (m, m)).copy_from(cost.r());
    w.view_mut((n + m, n + m), (d, d))
        .copy_from(&(-Matrix::identity(d, d) * lambda));
    let h = linalg::symmetrize(&(w + op.transpose() * &qp.h * &op * alpha));

    let hc = &qp.h * &c;
    let mut g = op.transpose() * (&qp.g + &hc * 2.0) * alpha;
    let mut tail = g.rows_mut(n + m, d);
    tail += &stats.mean * (2.0 * lambda);
    let s = alpha * (qp.s + qp.g.dot(&c) + c.dot(&hc)) - lambda * stats.mean.norm_squared();
    QParams::new(h, g, s, n, m, d)
}

/// Discounted cost `sum_{k=0}^{h} alpha^k (x'Qx + u'Ru - lambda |w - mean|^2)`
/// along the noise-free closed loop from `x0`. Infinite if the rollout diverges.
pub fn cost_indicator<S: Simulator + ?Sized>(
    sim: &S,
    cost: &CostSpec,
    stats: &SampleStats,
    policy: &PolicyPair,
    x0: &Vector,
    horizon: usize,
) -> Result<f64> {
    let mut x = x0.clone();
    let mut total = 0.0;
    let mut discount = 1.0;
    for _ in 0..=horizon {
        let u = policy.control(&x);
        let w = policy.adversary(&x);
        total += discount
            * (cost.stage_cost(&x, &u)? - cost.lambda() * (&w - &stats.mean).norm_squared());
        discount *= cost.alpha();
        x = sim.simulate(&x, &u, &w)?;
        if x.iter()
            .any(|v| !v.is_finite() || v.abs() > crate::model::DIVERGENCE_LIMIT)
        {
            return Ok(f64::INFINITY);
        }
    }
    Ok(total)
}

fn check_actuation<S: Simulator + ?Sized>(sim: &S) -> Result<()> {
    let (n, m, d) = (sim.state_dim(), sim.input_dim(), sim.disturbance_dim());
    let x = Vector::zeros(n);
    let w = Vector::zeros(d);
    for k in 0..m {
        let mut u = Vector::zeros(m);
        u[k] = 1.0;
        if sim.simulate(&x, &u, &w)?.amax() > 0.0 {
            return Ok(());
        }
    }
    Err(Error::InvalidParameter(
        "the control input has no effect on the state (B = 0); the plant cannot be learned".into(),
    ))
}

/// Runs the learning loop from `theta = 0` and zero policies.
pub fn learn<S: Simulator + ?Sized>(
    sim: &S,
    cost: &CostSpec,
    stats: &SampleStats,
    config: &LearnConfig,
) -> Result<LearnOutcome> {
    let (n, m, d) = (sim.state_dim(), sim.input_dim(), sim.disturbance_dim());
    config.validate(n, m, d)?;
    if cost.q().nrows() != n || cost.r().nrows() != m || stats.dim() != d {
        return Err(Error::Dimension(
            "cost or statistics do not match the simulator".into(),
        ));
    }
    check_actuation(sim)?;

    let mut rng = seeded_rng(config.seed);
    let mut qp = QParams::zeros(n, m, d);
    let mut theta = pack_theta(&qp);
    let mut policy = PolicyPair::zeros(n, m, d);
    let mut logs = Vec::new();
    let mut saddle_failures = 0;
    let mut converged = false;

    for i in 0..config.max_iters {
        let iter = i + 1;
        let transitions =
            collect(sim, &policy, config, &mut rng).map_err(|e| e.at_iteration(iter))?;
        let mut ridge = config.ridge;
        let fit = match lstsq_update(&transitions, &qp, &policy, cost, stats, ridge) {
            Err(Error::Excitation { .. }) if ridge == 0.0 && config.recovery_ridge > 0.0 => {
                ridge = config.recovery_ridge;
                lstsq_update(&transitions, &qp, &policy, cost, stats, ridge)
            }
            other => other,
        }
        .map_err(|e| e.at_iteration(iter))?;
        let next_qp = unpack_theta(&fit.theta, n, m, d)?;
        let delta = (&fit.theta.0 - &theta.0).norm();

        match greedy_policies(&next_qp) {
            Ok(p) => {
                policy = p;
                saddle_failures = 0;
            }
            Err(Error::SaddleStructure(msg)) => {
                saddle_failures += 1;
                if saddle_failures > config.saddle_retries {
                    return Err(Error::SaddleStructure(msg).at_iteration(iter));
                }
            }
            Err(e) => return Err(e.at_iteration(iter)),
        }

        let indicator = cost_indicator(
            sim,
            cost,
            stats,
            &policy,
            &config.indicator_x0,
            config.trajectory_len,
        )?;
        logs.push(IterationLog {
            iter,
            theta: fit.theta.clone(),
            delta,
            cost_indicator: indicator,
            design_condition: fit.design_condition,
            ridge,
        });
        theta = fit.theta;
        qp = next_qp;
        if delta <= config.epsilon {
            converged = true;
            break;
        }
    }

    let policy = greedy_policies(&qp).map_err(|e| e.at_iteration(logs.len()))?;
    Ok(LearnOutcome {
        qparams: qp,
        policy,
        logs,
        converged,
    })
}

fn collect<S: Simulator + ?Sized>(
    sim: &S,
    policy: &PolicyPair,
    config: &LearnConfig,
    rng: &mut crate::model::SimRng,
) -> Result<Vec<Transition>> {
    let mut last = None;
    for _ in 0..=config.restart_limit {
        let x0 = config.x0_box.sample(rng);
        match rollout(
            sim,
            policy,
            &config.exploration,
            &x0,
            config.trajectory_len,
            rng,
        ) {
            Ok(t) => return Ok(t),
            Err(e @ Error::RolloutDivergence { .. }) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("at least one attempt"))
}
