//! Model-based solver for the Wasserstein-penalized linear-quadratic game.
//!
//! The controller minimizes and an adversary maximizes
//!
//! ```text
//! E[ sum_k alpha^k (x'Qx + u'Ru) ] - lambda * W2^2(mu, nu_N)
//! ```
//!
//! over disturbance laws `mu`, where `nu_N` is the empirical distribution of the
//! samples. The value function is `V(x) = x'Px + g'x + z`. Starting from zero,
//! [`value_iterate`] applies the Riccati-type map until the iterates settle;
//! [`extract_policy`] then returns the affine saddle-point pair
//! `u = Kx + r`, `w = Lx + l`, and [`worst_case_distribution`] the `N`-atom
//! worst-case law `w_j = Lx + l_j`.
//!
//! Two constants are tracked. `z` belongs to the stochastic game and picks up
//! `-lambda * (tr(Sigma) + |mean|^2) - lambda^2 tr(H_ww^-1 Sigma)` per step;
//! `z_det` belongs to the deterministic game driven by the sample mean alone
//! and picks up only `-lambda * |mean|^2`. `P`, `g` and the policies are shared.

mod oracle;

pub use oracle::{dp_oracle, search_1d, search_box, DpGrid, DpOracle, DpTable, Sense};

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::empirical::{DisturbanceSamples, SampleStats};
use crate::error::{Error, Result};
use crate::linalg::{self, serde_rows, Matrix, Vector};
use crate::model::{CostSpec, LtiSystem};

/// Quadratic value `x'Px + g'x + z`.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueFunction {
    pub p: Matrix,
    pub g: Vector,
    /// Constant of the stochastic game.
    pub z: f64,
    /// Constant of the deterministic (mean-driven) game.
    pub z_det: f64,
}

impl ValueFunction {
    pub fn zeros(n: usize) -> Self {
        Self {
            p: Matrix::zeros(n, n),
            g: Vector::zeros(n),
            z: 0.0,
            z_det: 0.0,
        }
    }

    pub fn eval(&self, x: &Vector) -> f64 {
        x.dot(&(&self.p * x)) + self.g.dot(x) + self.z
    }

    pub fn eval_det(&self, x: &Vector) -> f64 {
        x.dot(&(&self.p * x)) + self.g.dot(x) + self.z_det
    }
}

/// Blocks of the one-step Q-function `e'He + G'e + const`, `e = (x, u, w)`.
#[derive(Clone, Debug, PartialEq)]
pub struct HBlocks {
    pub hxx: Matrix,
    pub hxu: Matrix,
    pub hxw: Matrix,
    pub huu: Matrix,
    pub huw: Matrix,
    pub hww: Matrix,
    pub gx: Vector,
    pub gu: Vector,
    pub gw: Vector,
    /// Per-atom disturbance gradients; their average is `gw`.
    pub gwj: Vec<Vector>,
}

impl HBlocks {
    pub(crate) fn from_value(
        sys: &LtiSystem,
        cost: &CostSpec,
        vf: &ValueFunction,
        mean: &Vector,
    ) -> Self {
        let (a, b, e) = (sys.a(), sys.b(), sys.e());
        let alpha = cost.alpha();
        let lambda = cost.lambda();
        let d = sys.disturbance_dim();
        let pa = &vf.p * a;
        let pb = &vf.p * b;
        let pe = &vf.p * e;
        Self {
            hxx: linalg::symmetrize(&(cost.q() + a.transpose() * &pa * alpha)),
            hxu: a.transpose() * &pb * alpha,
            hxw: a.transpose() * &pe * alpha,
            huu: linalg::symmetrize(&(cost.r() + b.transpose() * &pb * alpha)),
            huw: b.transpose() * &pe * alpha,
            hww: linalg::symmetrize(
                &(e.transpose() * &pe * alpha - Matrix::identity(d, d) * lambda),
            ),
            gx: a.transpose() * &vf.g * alpha,
            gu: b.transpose() * &vf.g * alpha,
            gw: e.transpose() * &vf.g * alpha + mean * (2.0 * lambda),
            gwj: Vec::new(),
        }
    }

    /// Joint curvature `[[H_uu, H_uw], [H_uw', H_ww]]` over `(u, w)`.
    pub fn joint_curvature(&self) -> Matrix {
        linalg::vstack(&[
            &linalg::hstack(&[&self.huu, &self.huw]),
            &linalg::hstack(&[&self.huw.transpose(), &self.hww]),
        ])
    }

    /// `[H_xu H_xw]`.
    pub fn state_coupling(&self) -> Matrix {
        linalg::hstack(&[&self.hxu, &self.hxw])
    }

    /// `(G_u; G_w)`.
    pub fn input_gradient(&self) -> Vector {
        linalg::concat(&[&self.gu, &self.gw])
    }

    /// Controller-side Schur complement `H_uu - H_uw H_ww^-1 H_uw'`.
    pub fn control_schur(&self) -> Result<Matrix> {
        let t = linalg::solve(&self.hww, &self.huw.transpose(), "H_ww")?;
        Ok(linalg::symmetrize(&(&self.huu - &self.huw * t)))
    }

    /// Adversary-side Schur complement `H_ww - H_uw' H_uu^-1 H_uw`.
    pub fn adversary_schur(&self) -> Result<Matrix> {
        let t = linalg::solve(&self.huu, &self.huw, "H_uu")?;
        Ok(linalg::symmetrize(&(&self.hww - self.huw.transpose() * t)))
    }
}

/// Blocks of the one-step game at value `vf`, including the per-atom gradients.
pub fn assemble_blocks(
    sys: &LtiSystem,
    cost: &CostSpec,
    vf: &ValueFunction,
    stats: &SampleStats,
    samples: &DisturbanceSamples,
) -> Result<HBlocks> {
    check_problem(sys, cost, stats)?;
    check_value(sys, vf)?;
    if samples.dim() != sys.disturbance_dim() {
        return Err(Error::Dimension(
            "samples do not match the disturbance channel".into(),
        ));
    }
    let mut blocks = HBlocks::from_value(sys, cost, vf, &stats.mean);
    let base = sys.e().transpose() * &vf.g * cost.alpha();
    blocks.gwj = samples
        .atoms()
        .iter()
        .map(|w| &base + w * (2.0 * cost.lambda()))
        .collect();
    Ok(blocks)
}

fn check_problem(sys: &LtiSystem, cost: &CostSpec, stats: &SampleStats) -> Result<()> {
    cost.check_compatible(sys)?;
    if stats.dim() != sys.disturbance_dim() {
        return Err(Error::Dimension(format!(
            "sample statistics have dimension {} but the plant has d={}",
            stats.dim(),
            sys.disturbance_dim()
        )));
    }
    Ok(())
}

fn check_value(sys: &LtiSystem, vf: &ValueFunction) -> Result<()> {
    let n = sys.state_dim();
    if vf.p.shape() != (n, n) || vf.g.len() != n {
        return Err(Error::Dimension(
            "value function does not match the plant".into(),
        ));
    }
    Ok(())
}

/// Minimum eigenvalue of `lambda I - alpha E'PE`; the penalty is feasible while it is positive.
pub fn feasibility_margin(sys: &LtiSystem, cost: &CostSpec, p: &Matrix) -> f64 {
    let e = sys.e();
    let d = e.ncols();
    let m = Matrix::identity(d, d) * cost.lambda() - e.transpose() * p * e * cost.alpha();
    linalg::min_eigenvalue(&m)
}

/// Convergence settings for [`value_iterate`] and [`solve`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 100_000,
        }
    }
}

/// Step-by-step Riccati-type iteration starting from the zero value function.
#[derive(Clone, Debug)]
pub struct RiccatiIteration<'a> {
    sys: &'a LtiSystem,
    cost: &'a CostSpec,
    stats: &'a SampleStats,
    value: ValueFunction,
    iteration: usize,
}

impl<'a> RiccatiIteration<'a> {
    pub fn new(sys: &'a LtiSystem, cost: &'a CostSpec, stats: &'a SampleStats) -> Result<Self> {
        check_problem(sys, cost, stats)?;
        Ok(Self {
            sys,
            cost,
            stats,
            value: ValueFunction::zeros(sys.state_dim()),
            iteration: 0,
        })
    }

    pub fn value(&self) -> &ValueFunction {
        &self.value
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// Advances one step and returns the size of the update.
    pub fn step(&mut self) -> Result<f64> {
        let margin = feasibility_margin(self.sys, self.cost, &self.value.p);
        if !(margin > 0.0) {
            return Err(Error::InfeasiblePenalty {
                iteration: self.iteration,
                min_eigenvalue: margin,
            });
        }
        let next = bellman_update(self.sys, self.cost, self.stats, &self.value)?;
        let residual = linalg::max_abs(&(&next.p - &self.value.p))
            + linalg::max_abs_vec(&(&next.g - &self.value.g))
            + (next.z - self.value.z).abs()
            + (next.z_det - self.value.z_det).abs();
        if !(residual.is_finite() && linalg::all_finite(&next.p)) {
            return Err(Error::Conditioning(format!(
                "non-finite value function at iteration {}",
                self.iteration + 1
            )));
        }
        self.value = next;
        self.iteration += 1;
        Ok(residual)
    }
}

/// One application of the Riccati-type map to `vf`. Requires a feasible penalty at `vf.p`.
pub fn bellman_update(
    sys: &LtiSystem,
    cost: &CostSpec,
    stats: &SampleStats,
    vf: &ValueFunction,
) -> Result<ValueFunction> {
    let blocks = HBlocks::from_value(sys, cost, vf, &stats.mean);
    let m = blocks.joint_curvature();
    let hx = blocks.state_coupling();
    let gv = blocks.input_gradient();
    let x = linalg::solve(&m, &hx.transpose(), "joint curvature")?;
    let y = linalg::solve_vec(&m, &gv, "joint curvature")?;
    let p = linalg::symmetrize(&(&blocks.hxx - &hx * x));
    let g = &blocks.gx - &hx * &y;
    let quad = gv.dot(&y) / 4.0;

    let lambda = cost.lambda();
    let spread = linalg::solve(&blocks.hww, &stats.covariance, "H_ww")?.trace();
    let z = cost.alpha() * vf.z - lambda * stats.second_moment() - lambda * lambda * spread - quad;
    let z_det = cost.alpha() * vf.z_det - lambda * stats.mean.norm_squared() - quad;
    Ok(ValueFunction { p, g, z, z_det })
}

/// Result of [`value_iterate`].
#[derive(Clone, Debug, PartialEq)]
pub struct Convergence {
    pub value: ValueFunction,
    pub iterations: usize,
    pub residual: f64,
}

/// Iterates the Riccati-type map from zero until the update falls below `opts.tol`.
pub fn value_iterate(
    sys: &LtiSystem,
    cost: &CostSpec,
    stats: &SampleStats,
    opts: SolverOptions,
) -> Result<Convergence> {
    let mut it = RiccatiIteration::new(sys, cost, stats)?;
    let mut residual = f64::INFINITY;
    while it.iteration() < opts.max_iter {
        residual = it.step()?;
        if residual <= opts.tol {
            let margin = feasibility_margin(sys, cost, &it.value().p);
            if !(margin > 0.0) {
                return Err(Error::InfeasiblePenalty {
                    iteration: it.iteration(),
                    min_eigenvalue: margin,
                });
            }
            return Ok(Convergence {
                value: it.value,
                iterations: it.iteration,
                residual,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        residual,
    })
}

/// Value of the `horizon`-step game (terminal value zero).
pub fn finite_horizon_value(
    sys: &LtiSystem,
    cost: &CostSpec,
    stats: &SampleStats,
    horizon: usize,
) -> Result<ValueFunction> {
    let mut it = RiccatiIteration::new(sys, cost, stats)?;
    for _ in 0..horizon {
        it.step()?;
    }
    Ok(it.value)
}

/// Affine controller `u = Kx + r` and adversary `w = Lx + l`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyPair {
    #[serde(rename = "K", with = "serde_rows")]
    pub gain: Matrix,
    #[serde(rename = "r", with = "serde_rows::vector")]
    pub offset: Vector,
    #[serde(rename = "L", with = "serde_rows")]
    pub adversary_gain: Matrix,
    #[serde(rename = "l", with = "serde_rows::vector")]
    pub adversary_offset: Vector,
}

impl PolicyPair {
    pub fn zeros(n: usize, m: usize, d: usize) -> Self {
        Self {
            gain: Matrix::zeros(m, n),
            offset: Vector::zeros(m),
            adversary_gain: Matrix::zeros(d, n),
            adversary_offset: Vector::zeros(d),
        }
    }

    /// Controller only; the adversary is switched off.
    pub fn controller(gain: Matrix, offset: Vector, d: usize) -> Self {
        let n = gain.ncols();
        Self {
            gain,
            offset,
            adversary_gain: Matrix::zeros(d, n),
            adversary_offset: Vector::zeros(d),
        }
    }

    pub fn state_dim(&self) -> usize {
        self.gain.ncols()
    }

    pub fn input_dim(&self) -> usize {
        self.gain.nrows()
    }

    pub fn disturbance_dim(&self) -> usize {
        self.adversary_gain.nrows()
    }

    pub fn control(&self, x: &Vector) -> Vector {
        &self.gain * x + &self.offset
    }

    pub fn adversary(&self, x: &Vector) -> Vector {
        &self.adversary_gain * x + &self.adversary_offset
    }

    pub fn check_dims(&self, n: usize, m: usize, d: usize) -> Result<()> {
        let ok = self.gain.shape() == (m, n)
            && self.offset.len() == m
            && self.adversary_gain.shape() == (d, n)
            && self.adversary_offset.len() == d;
        if !ok {
            return Err(Error::Dimension(format!(
                "policy does not match n={n}, m={m}, d={d}"
            )));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        linalg::all_finite(&self.gain)
            && linalg::all_finite(&self.adversary_gain)
            && self
                .offset
                .iter()
                .chain(self.adversary_offset.iter())
                .all(|v| v.is_finite())
    }

    /// Headerless CSV: the rows of K, then r, then the rows of L, then l.
    pub fn to_csv_writer<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_writer(writer);
        let fmt = |it: &mut dyn Iterator<Item = f64>| it.map(|v| v.to_string()).collect::<Vec<_>>();
        for row in self.gain.row_iter() {
            wtr.write_record(fmt(&mut row.iter().copied()))?;
        }
        wtr.write_record(fmt(&mut self.offset.iter().copied()))?;
        for row in self.adversary_gain.row_iter() {
            wtr.write_record(fmt(&mut row.iter().copied()))?;
        }
        wtr.write_record(fmt(&mut self.adversary_offset.iter().copied()))?;
        wtr.flush()?;
        Ok(())
    }

    /// Reads the layout written by [`PolicyPair::to_csv_writer`] for `m` inputs and `d` disturbances.
    pub fn from_csv_reader<R: Read>(reader: R, m: usize, d: usize) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut rows = Vec::new();
        for record in rdr.records() {
            let record = record?;
            let row = record
                .iter()
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|e| Error::Parse(format!("policy entry '{f}': {e}")))
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        if rows.len() != m + d + 2 {
            return Err(Error::Parse(format!(
                "policy file has {} rows, expected {} for m={m}, d={d}",
                rows.len(),
                m + d + 2
            )));
        }
        let gain = linalg::from_rows(&rows[..m])?;
        let offset = Vector::from_vec(rows[m].clone());
        let adversary_gain = linalg::from_rows(&rows[m + 1..m + 1 + d])?;
        let adversary_offset = Vector::from_vec(rows[m + 1 + d].clone());
        let policy = Self {
            gain,
            offset,
            adversary_gain,
            adversary_offset,
        };
        policy
            .check_dims(policy.gain.ncols(), m, d)
            .map_err(|e| Error::Parse(e.to_string()))?;
        Ok(policy)
    }
}

/// Saddle-point policies of the one-step game described by `blocks`.
pub fn extract_policy(blocks: &HBlocks) -> Result<PolicyPair> {
    if !linalg::is_pd(&(-&blocks.hww)) {
        return Err(Error::SaddleStructure(
            "H_ww is not negative definite".into(),
        ));
    }
    let s = blocks.control_schur()?;
    if !linalg::is_pd(&s) {
        return Err(Error::SaddleStructure(
            "controller Schur complement is not positive definite".into(),
        ));
    }
    let sw = blocks.adversary_schur()?;
    if !linalg::is_pd(&(-&sw)) {
        return Err(Error::SaddleStructure(
            "adversary Schur complement is not negative definite".into(),
        ));
    }

    // Controller: eliminate w through H_ww.
    let hww_hxw = linalg::solve(&blocks.hww, &blocks.hxw.transpose(), "H_ww")?;
    let hww_gw = linalg::solve_vec(&blocks.hww, &blocks.gw, "H_ww")?;
    let gain = linalg::solve(
        &s,
        &(&blocks.huw * hww_hxw - blocks.hxu.transpose()),
        "controller Schur complement",
    )?;
    let offset = linalg::solve_vec(
        &s,
        &(&blocks.gu - &blocks.huw * hww_gw),
        "controller Schur complement",
    )? * -0.5;

    // Adversary: eliminate u through H_uu.
    let huu_hxu = linalg::solve(&blocks.huu, &blocks.hxu.transpose(), "H_uu")?;
    let huu_gu = linalg::solve_vec(&blocks.huu, &blocks.gu, "H_uu")?;
    let adversary_gain = linalg::solve(
        &sw,
        &(blocks.huw.transpose() * huu_hxu - blocks.hxw.transpose()),
        "adversary Schur complement",
    )?;
    let adversary_offset = linalg::solve_vec(
        &sw,
        &(&blocks.gw - blocks.huw.transpose() * huu_gu),
        "adversary Schur complement",
    )? * -0.5;

    Ok(PolicyPair {
        gain,
        offset,
        adversary_gain,
        adversary_offset,
    })
}

/// The `N`-atom worst-case law `w_j = Lx + l_j`, uniform weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorstCaseDistribution {
    #[serde(rename = "L", with = "serde_rows")]
    pub gain: Matrix,
    #[serde(rename = "l_j", with = "serde_rows::vectors")]
    pub offsets: Vec<Vector>,
}

impl WorstCaseDistribution {
    pub fn atoms_at(&self, x: &Vector) -> Vec<Vector> {
        let base = &self.gain * x;
        self.offsets.iter().map(|l| &base + l).collect()
    }

    pub fn mean_offset(&self) -> Vector {
        let d = self.gain.nrows();
        self.offsets.iter().fold(Vector::zeros(d), |acc, l| acc + l) / self.offsets.len() as f64
    }
}

/// Worst-case atoms against the optimal controller.
///
/// Each atom maximizes its own penalized term with the control fixed at
/// `u = Kx + r`, which gives `l_j = -H_ww^-1 (H_uw' r + G_wj / 2)`. The gain is
/// the adversary gain of [`extract_policy`]; the offsets average to its `l`.
pub fn worst_case_distribution(blocks: &HBlocks) -> Result<WorstCaseDistribution> {
    if blocks.gwj.is_empty() {
        return Err(Error::EmptySamples);
    }
    let policy = extract_policy(blocks)?;
    let shared = blocks.huw.transpose() * &policy.offset;
    let offsets = blocks
        .gwj
        .iter()
        .map(|gj| linalg::solve_vec(&blocks.hww, &(&shared + gj * 0.5), "H_ww").map(|v| -v))
        .collect::<Result<Vec<_>>>()?;
    Ok(WorstCaseDistribution {
        gain: policy.adversary_gain,
        offsets,
    })
}

/// Closed-loop matrices above this spectral radius are not treated as stable.
pub const STABILITY_MARGIN: f64 = 1e-9;

pub fn is_stable(radius: f64) -> bool {
    radius < 1.0 - STABILITY_MARGIN
}

/// Spectral radii of `A + BK` and `A + BK + EL`.
pub fn stability_check(sys: &LtiSystem, policy: &PolicyPair) -> Result<(f64, f64)> {
    policy.check_dims(sys.state_dim(), sys.input_dim(), sys.disturbance_dim())?;
    let closed = sys.a() + sys.b() * &policy.gain;
    let game = &closed + sys.e() * &policy.adversary_gain;
    Ok((
        linalg::spectral_radius(&closed),
        linalg::spectral_radius(&game),
    ))
}

/// Everything [`solve`] computes.
#[derive(Clone, Debug, PartialEq)]
pub struct SolveReport {
    pub value: ValueFunction,
    pub policy: PolicyPair,
    pub worst_case: WorstCaseDistribution,
    pub iterations: usize,
    pub residual: f64,
    pub rho_closed: f64,
    pub rho_game: f64,
    pub feasible: bool,
}

#[derive(Serialize)]
struct ReportJson<'a> {
    #[serde(rename = "P", with = "serde_rows")]
    p: &'a Matrix,
    #[serde(with = "serde_rows::vector")]
    g: &'a Vector,
    z: f64,
    z_det: f64,
    #[serde(rename = "K", with = "serde_rows")]
    k: &'a Matrix,
    #[serde(with = "serde_rows::vector")]
    r: &'a Vector,
    #[serde(rename = "L", with = "serde_rows")]
    l_gain: &'a Matrix,
    #[serde(with = "serde_rows::vector")]
    l: &'a Vector,
    #[serde(with = "serde_rows::vectors")]
    l_j: &'a [Vector],
    iterations: usize,
    residual: f64,
    rho_closed: f64,
    rho_game: f64,
    feasible: bool,
}

impl Serialize for SolveReport {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        ReportJson {
            p: &self.value.p,
            g: &self.value.g,
            z: self.value.z,
            z_det: self.value.z_det,
            k: &self.policy.gain,
            r: &self.policy.offset,
            l_gain: &self.policy.adversary_gain,
            l: &self.policy.adversary_offset,
            l_j: &self.worst_case.offsets,
            iterations: self.iterations,
            residual: self.residual,
            rho_closed: self.rho_closed,
            rho_game: self.rho_game,
            feasible: self.feasible,
        }
        .serialize(s)
    }
}

impl SolveReport {
    pub fn is_stable(&self) -> bool {
        is_stable(self.rho_closed) && is_stable(self.rho_game)
    }
}

/// Value iteration, policy extraction, worst case and stability certificates in one call.
pub fn solve(
    sys: &LtiSystem,
    cost: &CostSpec,
    samples: &DisturbanceSamples,
    opts: SolverOptions,
) -> Result<SolveReport> {
    let stats = SampleStats::from_samples(samples);
    let conv = value_iterate(sys, cost, &stats, opts)?;
    let blocks = assemble_blocks(sys, cost, &conv.value, &stats, samples)?;
    let policy = extract_policy(&blocks)?;
    let worst_case = worst_case_distribution(&blocks)?;
    let (rho_closed, rho_game) = stability_check(sys, &policy)?;
    let feasible = feasibility_margin(sys, cost, &conv.value.p) > 0.0;
    Ok(SolveReport {
        value: conv.value,
        policy,
        worst_case,
        iterations: conv.iterations,
        residual: conv.residual,
        rho_closed,
        rho_game,
        feasible,
    })
}

/// Whether the `P` iteration at penalty `lambda` converges while staying feasible.
pub fn penalty_is_feasible(
    sys: &LtiSystem,
    cost: &CostSpec,
    lambda: f64,
    opts: SolverOptions,
) -> Result<bool> {
    let cost = cost.with_lambda(lambda)?;
    cost.check_compatible(sys)?;
    let stats = SampleStats::zero(sys.disturbance_dim());
    let mut vf = ValueFunction::zeros(sys.state_dim());
    for _ in 0..opts.max_iter {
        if !(feasibility_margin(sys, &cost, &vf.p) > 0.0) {
            return Ok(false);
        }
        // The P recursion does not depend on the samples.
        let next = bellman_update(sys, &cost, &stats, &vf)?;
        let delta = linalg::max_abs(&(&next.p - &vf.p));
        vf = next;
        if !linalg::all_finite(&vf.p) {
            return Ok(false);
        }
        if delta <= opts.tol {
            return Ok(feasibility_margin(sys, &cost, &vf.p) > 0.0);
        }
    }
    Ok(false)
}

/// Smallest feasible penalty in `[lo, hi]`, located by bisection to width `width`.
///
/// `lo` must be infeasible and `hi` feasible.
pub fn feasibility_threshold(
    sys: &LtiSystem,
    cost: &CostSpec,
    lo: f64,
    hi: f64,
    width: f64,
    opts: SolverOptions,
) -> Result<f64> {
    if !(lo > 0.0 && lo < hi && width > 0.0) {
        return Err(Error::InvalidParameter(
            "need 0 < lo < hi and a positive width".into(),
        ));
    }
    if penalty_is_feasible(sys, cost, lo, opts)? {
        return Err(Error::InvalidParameter(format!(
            "lower bracket {lo} is already feasible"
        )));
    }
    if !penalty_is_feasible(sys, cost, hi, opts)? {
        return Err(Error::InvalidParameter(format!(
            "upper bracket {hi} is infeasible"
        )));
    }
    let (mut lo, mut hi) = (lo, hi);
    while hi - lo > width {
        let mid = 0.5 * (lo + hi);
        if penalty_is_feasible(sys, cost, mid, opts)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
