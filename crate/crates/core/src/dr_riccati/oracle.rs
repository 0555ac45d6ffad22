//! Brute-force dynamic programming on a state grid, used to cross-check the
//! closed-form solver. Nothing here uses the Riccati formulas: every stage is a
//! numerical min over `u` of the stage cost plus the average over atoms of a
//! numerical max over `w`.
//!
//! Values live on a uniform tensor grid (state dimension at most 2) and are read
//! back by local three-point Lagrange interpolation per axis, which reproduces
//! quadratics exactly. One-dimensional searches scan a coarse grid and then run
//! a golden-section search inside the bracket around the best point; boxes of
//! dimension 2 are searched coordinate by coordinate.

use crate::empirical::DisturbanceSamples;
use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::model::{CostSpec, LtiSystem};

const GOLDEN: f64 = 0.618_033_988_749_894_8;

/// Direction of a search.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

impl Sense {
    fn better(self, a: f64, b: f64) -> bool {
        match self {
            Sense::Minimize => a < b,
            Sense::Maximize => a > b,
        }
    }
}

/// Coarse scan plus golden-section refinement of a unimodal function on `[lo, hi]`.
///
/// `f` returns `None` where it cannot be evaluated. Returns `Ok(None)` when the
/// optimum sits next to such a point, and a [`Error::GridBounds`] error when it
/// sits on the edge of the search interval itself.
pub fn search_1d(
    f: &mut dyn FnMut(f64) -> Result<Option<f64>>,
    lo: f64,
    hi: f64,
    coarse: usize,
    tol: f64,
    sense: Sense,
) -> Result<Option<(f64, f64)>> {
    let coarse = coarse.max(3);
    let step = (hi - lo) / (coarse - 1) as f64;
    let mut values = Vec::with_capacity(coarse);
    for i in 0..coarse {
        values.push(f(lo + step * i as f64)?);
    }
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.iter().enumerate() {
        if let Some(v) = v {
            if best.is_none_or(|(_, b)| sense.better(*v, b)) {
                best = Some((i, *v));
            }
        }
    }
    let Some((i, _)) = best else { return Ok(None) };
    if i == 0 || i == coarse - 1 {
        return Err(Error::GridBounds(format!(
            "optimum at the edge of the search interval [{lo}, {hi}]"
        )));
    }
    if values[i - 1].is_none() || values[i + 1].is_none() {
        return Ok(None);
    }

    let (mut a, mut b) = (lo + step * (i - 1) as f64, lo + step * (i + 1) as f64);
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let (Some(mut fc), Some(mut fd)) = (f(c)?, f(d)?) else {
        return Ok(None);
    };
    while (b - a) > tol * (1.0 + c.abs()) {
        if sense.better(fc, fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            match f(c)? {
                Some(v) => fc = v,
                None => return Ok(None),
            }
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            match f(d)? {
                Some(v) => fd = v,
                None => return Ok(None),
            }
        }
    }
    let (x, v) = if sense.better(fc, fd) {
        (c, fc)
    } else {
        (d, fd)
    };
    Ok(Some((x, v)))
}

/// Optimizes over a box of dimension 1 or 2, nesting one-dimensional searches.
pub fn search_box(
    f: &mut dyn FnMut(&[f64]) -> Result<Option<f64>>,
    lo: &[f64],
    hi: &[f64],
    coarse: usize,
    tol: f64,
    sense: Sense,
) -> Result<Option<(Vec<f64>, f64)>> {
    match lo.len() {
        1 => Ok(
            search_1d(&mut |t| f(&[t]), lo[0], hi[0], coarse, tol, sense)?
                .map(|(x, v)| (vec![x], v)),
        ),
        2 => {
            let mut outer = |t: f64| -> Result<Option<f64>> {
                Ok(
                    search_1d(&mut |s| f(&[t, s]), lo[1], hi[1], coarse, tol, sense)?
                        .map(|(_, v)| v),
                )
            };
            let Some((t, _)) = search_1d(&mut outer, lo[0], hi[0], coarse, tol, sense)? else {
                return Ok(None);
            };
            let r = search_1d(&mut |s| f(&[t, s]), lo[1], hi[1], coarse, tol, sense)?;
            Ok(r.map(|(s, v)| (vec![t, s], v)))
        }
        k => Err(Error::Dimension(format!(
            "box searches support dimension 1 or 2, got {k}"
        ))),
    }
}

/// Search boxes and resolution for [`DpOracle`].
#[derive(Clone, Debug, PartialEq)]
pub struct DpGrid {
    pub state_lo: Vec<f64>,
    pub state_hi: Vec<f64>,
    /// Nodes per state axis.
    pub state_points: usize,
    pub input_lo: Vec<f64>,
    pub input_hi: Vec<f64>,
    pub disturbance_lo: Vec<f64>,
    pub disturbance_hi: Vec<f64>,
    /// Points of the coarse scan before golden-section refinement.
    pub coarse_points: usize,
    /// Relative bracket width at which refinement stops.
    pub tol: f64,
}

impl DpGrid {
    /// Symmetric boxes `[-s, s]^n`, `[-u, u]^m`, `[-w, w]^d`.
    pub fn symmetric(
        n: usize,
        m: usize,
        d: usize,
        state: f64,
        input: f64,
        disturbance: f64,
    ) -> Self {
        Self {
            state_lo: vec![-state; n],
            state_hi: vec![state; n],
            state_points: 81,
            input_lo: vec![-input; m],
            input_hi: vec![input; m],
            disturbance_lo: vec![-disturbance; d],
            disturbance_hi: vec![disturbance; d],
            coarse_points: 41,
            tol: 1e-10,
        }
    }

    fn validate(&self, n: usize, m: usize, d: usize) -> Result<()> {
        let dims_ok = self.state_lo.len() == n
            && self.state_hi.len() == n
            && self.input_lo.len() == m
            && self.input_hi.len() == m
            && self.disturbance_lo.len() == d
            && self.disturbance_hi.len() == d;
        if !dims_ok {
            return Err(Error::Dimension("grid boxes do not match the plant".into()));
        }
        let ordered = |lo: &[f64], hi: &[f64]| lo.iter().zip(hi).all(|(l, h)| l < h);
        if !(ordered(&self.state_lo, &self.state_hi)
            && ordered(&self.input_lo, &self.input_hi)
            && ordered(&self.disturbance_lo, &self.disturbance_hi))
        {
            return Err(Error::InvalidParameter("grid boxes need lo < hi".into()));
        }
        if self.state_points < 3 || self.coarse_points < 3 || !(self.tol > 0.0) {
            return Err(Error::InvalidParameter(
                "grid needs at least 3 points per axis".into(),
            ));
        }
        Ok(())
    }
}

/// Values on the state grid; `None` marks nodes whose optimum left the grid.
#[derive(Clone, Debug)]
pub struct DpTable {
    lo: Vec<f64>,
    step: Vec<f64>,
    points: usize,
    values: Vec<Option<f64>>,
}

impl DpTable {
    fn zeros(grid: &DpGrid) -> Self {
        let n = grid.state_lo.len();
        let step = (0..n)
            .map(|c| (grid.state_hi[c] - grid.state_lo[c]) / (grid.state_points - 1) as f64)
            .collect();
        Self {
            lo: grid.state_lo.clone(),
            step,
            points: grid.state_points,
            values: vec![Some(0.0); grid.state_points.pow(n as u32)],
        }
    }

    fn node(&self, flat: usize) -> Vector {
        let n = self.lo.len();
        let mut idx = flat;
        Vector::from_fn(n, |c, _| {
            let i = idx % self.points;
            idx /= self.points;
            self.lo[c] + self.step[c] * i as f64
        })
    }

    fn len(&self) -> usize {
        self.values.len()
    }

    /// Interpolated value at `x`, or `None` outside the valid part of the grid.
    pub fn interpolate(&self, x: &[f64]) -> Option<f64> {
        let n = self.lo.len();
        let mut base = [0usize; 2];
        let mut weights = [[0.0; 3]; 2];
        for c in 0..n {
            let t = (x[c] - self.lo[c]) / self.step[c];
            if !(t >= -1e-9 && t <= (self.points - 1) as f64 + 1e-9) {
                return None;
            }
            let i = (t.round() as usize).clamp(1, self.points - 2);
            let s = t - i as f64;
            base[c] = i - 1;
            weights[c] = [0.5 * s * (s - 1.0), 1.0 - s * s, 0.5 * s * (s + 1.0)];
        }
        let mut acc = 0.0;
        match n {
            1 => {
                for (a, w) in weights[0].iter().enumerate() {
                    acc += w * self.values[base[0] + a]?;
                }
            }
            _ => {
                for (a, wa) in weights[0].iter().enumerate() {
                    for (b, wb) in weights[1].iter().enumerate() {
                        let flat = (base[0] + a) + self.points * (base[1] + b);
                        acc += wa * wb * self.values[flat]?;
                    }
                }
            }
        }
        Some(acc)
    }

    /// Interpolated value at `x`; an error if `x` is outside the valid grid.
    pub fn value_at(&self, x: &Vector) -> Result<f64> {
        self.interpolate(x.as_slice()).ok_or_else(|| {
            Error::GridBounds(format!(
                "query state {} is outside the valid grid",
                x.transpose()
            ))
        })
    }
}

/// Backward dynamic programming for the penalized game on a grid.
#[derive(Clone, Debug)]
pub struct DpOracle<'a> {
    sys: &'a LtiSystem,
    cost: &'a CostSpec,
    samples: &'a DisturbanceSamples,
    grid: DpGrid,
}

impl<'a> DpOracle<'a> {
    pub fn new(
        sys: &'a LtiSystem,
        cost: &'a CostSpec,
        samples: &'a DisturbanceSamples,
        grid: DpGrid,
    ) -> Result<Self> {
        let (n, m, d) = (sys.state_dim(), sys.input_dim(), sys.disturbance_dim());
        if n > 2 || m > 2 || d > 2 {
            return Err(Error::Dimension(format!(
                "grid oracle supports n, m, d <= 2, got n={n}, m={m}, d={d}"
            )));
        }
        cost.check_compatible(sys)?;
        if samples.dim() != d {
            return Err(Error::Dimension(
                "samples do not match the disturbance channel".into(),
            ));
        }
        grid.validate(n, m, d)?;
        Ok(Self {
            sys,
            cost,
            samples,
            grid,
        })
    }

    /// Value table of the `horizon`-step game.
    pub fn run(&self, horizon: usize) -> Result<DpTable> {
        let mut table = DpTable::zeros(&self.grid);
        for _ in 0..horizon {
            table = self.stage(&table)?;
        }
        Ok(table)
    }

    /// `max_w alpha V(y + E w) - lambda |w - atom|^2` for a fixed post-decision state `y`.
    pub fn inner_max(&self, next: &DpTable, y: &Vector, atom: &Vector) -> Result<Option<f64>> {
        let alpha = self.cost.alpha();
        let lambda = self.cost.lambda();
        let e = self.sys.e();
        let g = &self.grid;
        let mut f = |w: &[f64]| -> Result<Option<f64>> {
            let w = Vector::from_column_slice(w);
            let x_next = y + e * &w;
            Ok(next
                .interpolate(x_next.as_slice())
                .map(|v| alpha * v - lambda * (&w - atom).norm_squared()))
        };
        Ok(search_box(
            &mut f,
            &g.disturbance_lo,
            &g.disturbance_hi,
            g.coarse_points,
            g.tol,
            Sense::Maximize,
        )?
        .map(|(_, v)| v))
    }

    fn stage(&self, next: &DpTable) -> Result<DpTable> {
        let g = &self.grid;
        let atoms = self.samples.atoms();
        let n_atoms = atoms.len() as f64;

        // Averaged inner maxima on the grid of post-decision states y = Ax + Bu.
        let mut phi = DpTable {
            values: vec![None; next.len()],
            ..next.clone()
        };
        for k in 0..next.len() {
            let y = next.node(k);
            let mut sum = 0.0;
            let mut valid = true;
            for atom in atoms {
                match self.inner_max(next, &y, atom)? {
                    Some(v) => sum += v,
                    None => {
                        valid = false;
                        break;
                    }
                }
            }
            phi.values[k] = valid.then_some(sum / n_atoms);
        }

        let mut out = DpTable {
            values: vec![None; next.len()],
            ..next.clone()
        };
        for k in 0..next.len() {
            let x = next.node(k);
            let ax = self.sys.a() * &x;
            let state_cost = x.dot(&(self.cost.q() * &x));
            let mut f = |u: &[f64]| -> Result<Option<f64>> {
                let u = Vector::from_column_slice(u);
                let y = &ax + self.sys.b() * &u;
                Ok(phi
                    .interpolate(y.as_slice())
                    .map(|v| state_cost + u.dot(&(self.cost.r() * &u)) + v))
            };
            out.values[k] = search_box(
                &mut f,
                &g.input_lo,
                &g.input_hi,
                g.coarse_points,
                g.tol,
                Sense::Minimize,
            )?
            .map(|(_, v)| v);
        }
        Ok(out)
    }
}

/// Value of the `horizon`-step penalized game at `x`, by grid dynamic programming.
pub fn dp_oracle(
    sys: &LtiSystem,
    cost: &CostSpec,
    samples: &DisturbanceSamples,
    horizon: usize,
    x: &Vector,
    grid: DpGrid,
) -> Result<f64> {
    if horizon == 0 {
        return Ok(0.0);
    }
    DpOracle::new(sys, cost, samples, grid)?
        .run(horizon)?
        .value_at(x)
}
