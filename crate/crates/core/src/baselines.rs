//! Reference controllers: discounted LQR and the zero-mean game controller.
//!
//! Gains follow the `u = Kx` convention, so `K` already carries the minus sign.

use crate::dr_riccati::{self, PolicyPair, SolveReport, SolverOptions};
use crate::empirical::DisturbanceSamples;
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::model::{CostSpec, LtiSystem};

/// Settings for [`lqr_gain`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LqrOptions {
    /// Discount used in the Riccati map; just below 1 by default.
    pub alpha: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LqrOptions {
    fn default() -> Self {
        Self {
            alpha: 1.0 - 1e-9,
            tol: 1e-10,
            max_iter: 1_000_000,
        }
    }
}

/// Converged discounted LQR solution.
#[derive(Clone, Debug, PartialEq)]
pub struct LqrSolution {
    /// Controller `(K, 0)` with the adversary switched off.
    pub policy: PolicyPair,
    pub p: Matrix,
    /// `|Ric(P) - P|_max` at the returned `P`.
    pub residual: f64,
    pub iterations: usize,
}

fn lqr_map(sys: &LtiSystem, cost: &CostSpec, alpha: f64, p: &Matrix) -> Result<(Matrix, Matrix)> {
    let (a, b) = (sys.a(), sys.b());
    let huu = cost.r() + b.transpose() * p * b * alpha;
    let hux = b.transpose() * p * a * alpha;
    let k = -linalg::solve(&huu, &hux, "R + alpha B'PB")?;
    let next = cost.q() + a.transpose() * p * a * alpha + hux.transpose() * &k;
    Ok((linalg::symmetrize(&next), k))
}

/// Discounted LQR gain by fixed-point iteration of the Riccati map from `P = 0`.
pub fn lqr_gain(sys: &LtiSystem, cost: &CostSpec, opts: LqrOptions) -> Result<LqrSolution> {
    cost.check_compatible(sys)?;
    if !(opts.alpha > 0.0 && opts.alpha <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "LQR discount must lie in (0, 1], got {}",
            opts.alpha
        )));
    }
    let n = sys.state_dim();
    let mut p = Matrix::zeros(n, n);
    let mut delta = f64::INFINITY;
    for it in 1..=opts.max_iter {
        let (next, _) = lqr_map(sys, cost, opts.alpha, &p)?;
        delta = linalg::max_abs(&(&next - &p));
        p = next;
        if !linalg::all_finite(&p) {
            break;
        }
        if delta <= opts.tol {
            let (check, k) = lqr_map(sys, cost, opts.alpha, &p)?;
            let residual = linalg::max_abs(&(&check - &p));
            let m = sys.input_dim();
            return Ok(LqrSolution {
                policy: PolicyPair::controller(k, Vector::zeros(m), sys.disturbance_dim()),
                p,
                residual,
                iterations: it,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        residual: delta,
    })
}

/// Game controller against a zero-mean adversary: the penalized solver with a
/// single atom at the origin. Offsets come out exactly zero.
pub fn hinf_policy(sys: &LtiSystem, cost: &CostSpec, opts: SolverOptions) -> Result<SolveReport> {
    let samples = DisturbanceSamples::new(vec![Vector::zeros(sys.disturbance_dim())])?;
    dr_riccati::solve(sys, cost, &samples, opts)
}
