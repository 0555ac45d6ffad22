//! Quadratic Q-functions of the deterministic-equivalent game.
//!
//! A Q-function over `e = (x, u, w)` is `e'He + G'e + s`. For regression it is
//! written as `theta' * basis(e)` where the basis is
//!
//! ```text
//! [e1*e1, e1*e2, ..., e1*eq, e2*e2, ..., eq*eq, e1, ..., eq, 1]
//! ```
//!
//! (upper triangle of `e e'` in row-major order, then `e`, then 1). Packing
//! stores each diagonal entry of `H` once and each off-diagonal pair once as
//! `2 * H_ij`, so `theta' * basis(e)` reproduces `e'He` exactly.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::dr_riccati::{HBlocks, PolicyPair, ValueFunction};
use crate::empirical::{DisturbanceSamples, SampleStats};
use crate::error::{Error, Result};
use crate::linalg::{self, serde_rows, Matrix, Vector};
use crate::model::{CostSpec, LtiSystem};

/// Parameters `(H, G, s)` of a quadratic Q-function over `(x, u, w)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QParams {
    #[serde(rename = "H", with = "serde_rows")]
    pub h: Matrix,
    #[serde(rename = "G", with = "serde_rows::vector")]
    pub g: Vector,
    pub s: f64,
    pub n: usize,
    pub m: usize,
    pub d: usize,
}

impl QParams {
    pub fn new(h: Matrix, g: Vector, s: f64, n: usize, m: usize, d: usize) -> Result<Self> {
        let q = n + m + d;
        if h.shape() != (q, q) || g.len() != q {
            return Err(Error::Dimension(format!(
                "Q-function parameters must have size q={q}"
            )));
        }
        if !linalg::is_symmetric(&h) {
            return Err(Error::InvalidParameter("H must be symmetric".into()));
        }
        Ok(Self { h, g, s, n, m, d })
    }

    pub fn zeros(n: usize, m: usize, d: usize) -> Self {
        let q = n + m + d;
        Self {
            h: Matrix::zeros(q, q),
            g: Vector::zeros(q),
            s: 0.0,
            n,
            m,
            d,
        }
    }

    pub fn dim(&self) -> usize {
        self.n + self.m + self.d
    }

    /// Block view in the layout of the model-based solver (no per-atom gradients).
    pub fn blocks(&self) -> HBlocks {
        let (n, m, d) = (self.n, self.m, self.d);
        let h = &self.h;
        HBlocks {
            hxx: h.view((0, 0), (n, n)).into_owned(),
            hxu: h.view((0, n), (n, m)).into_owned(),
            hxw: h.view((0, n + m), (n, d)).into_owned(),
            huu: h.view((n, n), (m, m)).into_owned(),
            huw: h.view((n, n + m), (m, d)).into_owned(),
            hww: h.view((n + m, n + m), (d, d)).into_owned(),
            gx: self.g.rows(0, n).into_owned(),
            gu: self.g.rows(n, m).into_owned(),
            gw: self.g.rows(n + m, d).into_owned(),
            gwj: Vec::new(),
        }
    }

    pub fn from_blocks(b: &HBlocks, s: f64) -> Self {
        let (n, m, d) = (b.hxx.nrows(), b.huu.nrows(), b.hww.nrows());
        let h = linalg::vstack(&[
            &linalg::hstack(&[&b.hxx, &b.hxu, &b.hxw]),
            &linalg::hstack(&[&b.hxu.transpose(), &b.huu, &b.huw]),
            &linalg::hstack(&[&b.hxw.transpose(), &b.huw.transpose(), &b.hww]),
        ]);
        let g = linalg::concat(&[&b.gx, &b.gu, &b.gw]);
        Self {
            h: linalg::symmetrize(&h),
            g,
            s,
            n,
            m,
            d,
        }
    }

    /// Largest entrywise difference in `(H, G, s)` relative to `max(|other|, 1)`.
    pub fn max_rel_diff(&self, other: &QParams) -> f64 {
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1.0);
        let h = self.h.iter().zip(other.h.iter()).map(|(a, b)| rel(*a, *b));
        let g = self.g.iter().zip(other.g.iter()).map(|(a, b)| rel(*a, *b));
        h.chain(g)
            .chain(std::iter::once(rel(self.s, other.s)))
            .fold(0.0, f64::max)
    }
}

/// Packed regression vector `theta = [h; G; s]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ThetaVector(pub Vector);

impl ThetaVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_vector(&self) -> &Vector {
        &self.0
    }

    /// One value per line.
    pub fn to_csv_writer<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(writer);
        for v in self.0.iter() {
            wtr.write_record([v.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut out = Vec::new();
        for record in rdr.records() {
            let record = record?;
            if record.len() != 1 {
                return Err(Error::Parse("theta files have a single column".into()));
            }
            out.push(
                record[0]
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("theta entry: {e}")))?,
            );
        }
        Ok(Self(Vector::from_vec(out)))
    }
}

/// Length of the packed vector for `q` joint variables.
pub fn theta_len(q: usize) -> usize {
    q * (q + 1) / 2 + q + 1
}

/// Feature vector of the joint variable `e`.
pub fn basis_of(e: &Vector) -> Vector {
    let q = e.len();
    let mut out = Vec::with_capacity(theta_len(q));
    for i in 0..q {
        for j in i..q {
            out.push(e[i] * e[j]);
        }
    }
    out.extend(e.iter().copied());
    out.push(1.0);
    Vector::from_vec(out)
}

/// Feature vector of `(x, u, w)`.
pub fn basis_vector(x: &Vector, u: &Vector, w: &Vector) -> Vector {
    basis_of(&linalg::concat(&[x, u, w]))
}

pub fn pack_theta(qp: &QParams) -> ThetaVector {
    let q = qp.dim();
    let mut out = Vec::with_capacity(theta_len(q));
    for i in 0..q {
        out.push(qp.h[(i, i)]);
        for j in i + 1..q {
            out.push(2.0 * qp.h[(i, j)]);
        }
    }
    out.extend(qp.g.iter().copied());
    out.push(qp.s);
    ThetaVector(Vector::from_vec(out))
}

pub fn unpack_theta(theta: &ThetaVector, n: usize, m: usize, d: usize) -> Result<QParams> {
    let q = n + m + d;
    if theta.len() != theta_len(q) {
        return Err(Error::Dimension(format!(
            "theta has length {}, expected {} for q={q}",
            theta.len(),
            theta_len(q)
        )));
    }
    let t = &theta.0;
    let mut h = Matrix::zeros(q, q);
    let mut k = 0;
    for i in 0..q {
        h[(i, i)] = t[k];
        k += 1;
        for j in i + 1..q {
            h[(i, j)] = 0.5 * t[k];
            h[(j, i)] = 0.5 * t[k];
            k += 1;
        }
    }
    let g = t.rows(k, q).into_owned();
    let s = t[k + q];
    Ok(QParams { h, g, s, n, m, d })
}

/// `e'He + G'e + s` at `e = (x, u, w)`.
pub fn eval_q(qp: &QParams, x: &Vector, u: &Vector, w: &Vector) -> Result<f64> {
    linalg::check_len(x, qp.n, "state")?;
    linalg::check_len(u, qp.m, "input")?;
    linalg::check_len(w, qp.d, "disturbance")?;
    let e = linalg::concat(&[x, u, w]);
    Ok(e.dot(&(&qp.h * &e)) + qp.g.dot(&e) + qp.s)
}

/// Q-function of the deterministic game at value `vf`; the constant uses `vf.z_det`.
pub fn q_from_value(
    sys: &LtiSystem,
    cost: &CostSpec,
    vf: &ValueFunction,
    stats: &SampleStats,
) -> Result<QParams> {
    cost.check_compatible(sys)?;
    if stats.dim() != sys.disturbance_dim() || vf.g.len() != sys.state_dim() {
        return Err(Error::Dimension(
            "value function or statistics do not match the plant".into(),
        ));
    }
    let blocks = HBlocks::from_value(sys, cost, vf, &stats.mean);
    let s = cost.alpha() * vf.z_det - cost.lambda() * stats.mean.norm_squared();
    Ok(QParams::from_blocks(&blocks, s))
}

/// Saddle-point policies of a quadratic Q-function.
///
/// The curvature is checked first through both Schur complements; the pair is
/// then obtained from the joint stationarity conditions in `(u, w)`.
pub fn greedy_policies(qp: &QParams) -> Result<PolicyPair> {
    let (m, d) = (qp.m, qp.d);
    let b = qp.blocks();
    if !linalg::is_pd(&(-&b.hww)) {
        return Err(Error::SaddleStructure(format!(
            "disturbance curvature is not negative definite (max eigenvalue {:e})",
            linalg::max_eigenvalue(&b.hww)
        )));
    }
    let s = b.control_schur()?;
    if !linalg::is_pd(&s) {
        return Err(Error::SaddleStructure(format!(
            "controller Schur complement is not positive definite (min eigenvalue {:e})",
            linalg::min_eigenvalue(&s)
        )));
    }
    let sw = b.adversary_schur()?;
    if !linalg::is_pd(&(-&sw)) {
        return Err(Error::SaddleStructure(
            "adversary Schur complement is not negative definite".into(),
        ));
    }
    let joint = b.joint_curvature();
    let coupling = b.state_coupling().transpose();
    let gains = -linalg::solve(&joint, &coupling, "joint curvature")?;
    let offsets = linalg::solve_vec(&joint, &b.input_gradient(), "joint curvature")? * -0.5;
    Ok(PolicyPair {
        gain: gains.rows(0, m).into_owned(),
        offset: offsets.rows(0, m).into_owned(),
        adversary_gain: gains.rows(m, d).into_owned(),
        adversary_offset: offsets.rows(m, d).into_owned(),
    })
}

/// Q-function over `(x, u, w_1, ..., w_N)` with one disturbance per atom, each
/// atom weighted `1/N`. Returned with disturbance dimension `N * d`.
pub fn tilde_q_params(
    sys: &LtiSystem,
    cost: &CostSpec,
    vf: &ValueFunction,
    samples: &DisturbanceSamples,
) -> Result<QParams> {
    let stats = SampleStats::from_samples(samples);
    let blocks = crate::dr_riccati::assemble_blocks(sys, cost, vf, &stats, samples)?;
    let (n, m, d) = (sys.state_dim(), sys.input_dim(), sys.disturbance_dim());
    let k = samples.len();
    let inv = 1.0 / k as f64;
    let q = n + m + k * d;
    let mut h = Matrix::zeros(q, q);
    h.view_mut((0, 0), (n, n)).copy_from(&blocks.hxx);
    h.view_mut((0, n), (n, m)).copy_from(&blocks.hxu);
    h.view_mut((n, 0), (m, n))
        .copy_from(&blocks.hxu.transpose());
    h.view_mut((n, n), (m, m)).copy_from(&blocks.huu);
    let mut g = Vector::zeros(q);
    g.rows_mut(0, n).copy_from(&blocks.gx);
    g.rows_mut(n, m).copy_from(&blocks.gu);
    for j in 0..k {
        let o = n + m + j * d;
        h.view_mut((0, o), (n, d)).copy_from(&(&blocks.hxw * inv));
        h.view_mut((o, 0), (d, n))
            .copy_from(&(blocks.hxw.transpose() * inv));
        h.view_mut((n, o), (m, d)).copy_from(&(&blocks.huw * inv));
        h.view_mut((o, n), (d, m))
            .copy_from(&(blocks.huw.transpose() * inv));
        h.view_mut((o, o), (d, d)).copy_from(&(&blocks.hww * inv));
        g.rows_mut(o, d).copy_from(&(&blocks.gwj[j] * inv));
    }
    let s = cost.alpha() * vf.z - cost.lambda() * samples.mean_square_norm();
    Ok(QParams {
        h,
        g,
        s,
        n,
        m,
        d: k * d,
    })
}

/// Optimum of the per-atom Q-function at `x`.
#[derive(Clone, Debug, PartialEq)]
pub struct TildeMinMax {
    pub value: f64,
    pub control: Vector,
    pub atoms: Vec<Vector>,
}

/// `min_u max_{w_1..w_N}` of [`tilde_q_params`] at `x`.
pub fn tilde_q_minmax(
    sys: &LtiSystem,
    cost: &CostSpec,
    vf: &ValueFunction,
    samples: &DisturbanceSamples,
    x: &Vector,
) -> Result<TildeMinMax> {
    let qt = tilde_q_params(sys, cost, vf, samples)?;
    let policy = greedy_policies(&qt)?;
    let control = policy.control(x);
    let stacked = policy.adversary(x);
    let value = eval_q(&qt, x, &control, &stacked)?;
    let d = sys.disturbance_dim();
    let atoms = (0..samples.len())
        .map(|j| stacked.rows(j * d, d).into_owned())
        .collect();
    Ok(TildeMinMax {
        value,
        control,
        atoms,
    })
}
