//! Plant, stage cost, disturbance generators and the rollout simulator.
//!
//! The plant is the discrete-time linear system
//!
//! ```text
//! x[k+1] = A x[k] + B u[k] + E w[k]
//! ```
//!
//! with stage cost `x'Qx + u'Ru`. Everything random in this crate is driven by
//! an explicit [`SimRng`] so results are reproducible per seed. Gaussian draws
//! use the cosine branch of the Box-Muller transform on two uniforms from the
//! stream (see [`standard_normal`]), which keeps the mapping from seed to
//! samples fixed independently of any distribution crate.

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::dr_riccati::PolicyPair;
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};

/// The random stream used throughout: ChaCha8, seeded from a `u64`.
pub type SimRng = rand_chacha::ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// One standard normal draw from two uniforms (Box-Muller, cosine branch).
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // u1 in (0, 1] so the logarithm is finite.
    let u1 = 1.0 - rng.random::<f64>();
    let u2 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Rollouts abort once `|x|_inf` exceeds this bound.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

/// Linear time-invariant plant `(A, B, E)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LtiSystem {
    a: Matrix,
    b: Matrix,
    e: Matrix,
}

impl LtiSystem {
    pub fn new(a: Matrix, b: Matrix, e: Matrix) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || !a.is_square() {
            return Err(Error::Dimension(format!(
                "A must be square and non-empty, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != n || b.ncols() == 0 {
            return Err(Error::Dimension(format!(
                "B must be {n}xm with m >= 1, got {}x{}",
                b.nrows(),
                b.ncols()
            )));
        }
        if e.nrows() != n || e.ncols() == 0 {
            return Err(Error::Dimension(format!(
                "E must be {n}xd with d >= 1, got {}x{}",
                e.nrows(),
                e.ncols()
            )));
        }
        if !(linalg::all_finite(&a) && linalg::all_finite(&b) && linalg::all_finite(&e)) {
            return Err(Error::InvalidParameter(
                "plant matrices must be finite".into(),
            ));
        }
        Ok(Self { a, b, e })
    }

    /// Planar double integrator with sample period `period`; the wind enters
    /// through the same channel as the acceleration command.
    pub fn quadrotor(period: f64) -> Self {
        let t = period;
        let a = Matrix::from_row_slice(
            4,
            4,
            &[
                1.0, 0.0, t, 0.0, //
                0.0, 1.0, 0.0, t, //
                0.0, 0.0, 1.0, 0.0, //
                0.0, 0.0, 0.0, 1.0,
            ],
        );
        let h = t * t / 2.0;
        let b = Matrix::from_row_slice(4, 2, &[h, 0.0, 0.0, h, t, 0.0, 0.0, t]);
        Self { a, e: b.clone(), b }
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn e(&self) -> &Matrix {
        &self.e
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn disturbance_dim(&self) -> usize {
        self.e.ncols()
    }

    /// `A x + B u + E w`.
    pub fn step(&self, x: &Vector, u: &Vector, w: &Vector) -> Result<Vector> {
        linalg::check_len(x, self.state_dim(), "state")?;
        linalg::check_len(u, self.input_dim(), "input")?;
        linalg::check_len(w, self.disturbance_dim(), "disturbance")?;
        Ok(&self.a * x + &self.b * u + &self.e * w)
    }

    /// `A + B K + E L` for a policy pair.
    pub fn closed_loop(&self, policy: &PolicyPair) -> Matrix {
        &self.a + &self.b * &policy.gain + &self.e * &policy.adversary_gain
    }
}

/// Black-box access to a plant: the learner only ever calls [`Simulator::simulate`].
pub trait Simulator {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn disturbance_dim(&self) -> usize;
    fn simulate(&self, x: &Vector, u: &Vector, w: &Vector) -> Result<Vector>;
}

impl Simulator for LtiSystem {
    fn state_dim(&self) -> usize {
        LtiSystem::state_dim(self)
    }
    fn input_dim(&self) -> usize {
        LtiSystem::input_dim(self)
    }
    fn disturbance_dim(&self) -> usize {
        LtiSystem::disturbance_dim(self)
    }
    fn simulate(&self, x: &Vector, u: &Vector, w: &Vector) -> Result<Vector> {
        self.step(x, u, w)
    }
}

/// Stage-cost weights, discount and Wasserstein penalty.
#[derive(Clone, Debug, PartialEq)]
pub struct CostSpec {
    q: Matrix,
    r: Matrix,
    alpha: f64,
    lambda: f64,
}

impl CostSpec {
    pub fn new(q: Matrix, r: Matrix, alpha: f64, lambda: f64) -> Result<Self> {
        if !q.is_square() || q.nrows() == 0 || !r.is_square() || r.nrows() == 0 {
            return Err(Error::Dimension(
                "Q and R must be square and non-empty".into(),
            ));
        }
        if !(linalg::all_finite(&q) && linalg::all_finite(&r)) {
            return Err(Error::InvalidParameter("Q and R must be finite".into()));
        }
        if !linalg::is_psd(&q) {
            return Err(Error::Assumption(format!(
                "Q must be symmetric positive semi-definite (min eigenvalue {:e})",
                linalg::min_eigenvalue(&q)
            )));
        }
        if !linalg::is_pd(&r) {
            return Err(Error::Assumption(format!(
                "R must be symmetric positive definite (min eigenvalue {:e})",
                linalg::min_eigenvalue(&r)
            )));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in (0, 1), got {alpha}"
            )));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "lambda must be positive, got {lambda}"
            )));
        }
        Ok(Self {
            q,
            r,
            alpha,
            lambda,
        })
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        Self::new(self.q.clone(), self.r.clone(), self.alpha, lambda)
    }

    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        Self::new(self.q.clone(), self.r.clone(), alpha, self.lambda)
    }

    pub fn q(&self) -> &Matrix {
        &self.q
    }

    pub fn r(&self) -> &Matrix {
        &self.r
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn check_compatible(&self, sys: &LtiSystem) -> Result<()> {
        if self.q.nrows() != sys.state_dim() || self.r.nrows() != sys.input_dim() {
            return Err(Error::Dimension(format!(
                "cost weights are {}x{} / {}x{} but the plant has n={}, m={}",
                self.q.nrows(),
                self.q.ncols(),
                self.r.nrows(),
                self.r.ncols(),
                sys.state_dim(),
                sys.input_dim()
            )));
        }
        Ok(())
    }

    /// `x'Qx + u'Ru`.
    pub fn stage_cost(&self, x: &Vector, u: &Vector) -> Result<f64> {
        linalg::check_len(x, self.q.nrows(), "state")?;
        linalg::check_len(u, self.r.nrows(), "input")?;
        Ok(x.dot(&(&self.q * x)) + u.dot(&(&self.r * u)))
    }
}

/// One diagonal-Gaussian component of a mixture.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

/// Unvalidated description of a disturbance law, as it appears in configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum GeneratorSpec {
    /// Independent coordinates `w_i ~ N(mean_i, variance_i)`.
    Gaussian {
        mean: Vec<f64>,
        variance: Vec<f64>,
    },
    Mixture {
        components: Vec<MixtureComponent>,
    },
    /// Uniform draw among the atoms.
    Empirical {
        atoms: Vec<Vec<f64>>,
    },
}

/// A validated disturbance law used to drive evaluation rollouts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GeneratorSpec", into = "GeneratorSpec")]
pub struct DisturbanceGenerator {
    spec: GeneratorSpec,
    dim: usize,
}

fn check_gaussian(mean: &[f64], variance: &[f64]) -> Result<usize> {
    if mean.is_empty() || mean.len() != variance.len() {
        return Err(Error::Dimension(format!(
            "gaussian mean has length {} but variance has length {}",
            mean.len(),
            variance.len()
        )));
    }
    if mean.iter().any(|m| !m.is_finite()) {
        return Err(Error::InvalidParameter(
            "gaussian mean must be finite".into(),
        ));
    }
    if variance.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::InvalidParameter(
            "variances must be finite and nonnegative".into(),
        ));
    }
    Ok(mean.len())
}

impl TryFrom<GeneratorSpec> for DisturbanceGenerator {
    type Error = Error;

    fn try_from(spec: GeneratorSpec) -> Result<Self> {
        let dim = match &spec {
            GeneratorSpec::Gaussian { mean, variance } => check_gaussian(mean, variance)?,
            GeneratorSpec::Mixture { components } => {
                if components.is_empty() {
                    return Err(Error::InvalidParameter("mixture needs a component".into()));
                }
                let mut dim = None;
                for c in components {
                    let d = check_gaussian(&c.mean, &c.variance)?;
                    if *dim.get_or_insert(d) != d {
                        return Err(Error::Dimension(
                            "mixture components differ in dimension".into(),
                        ));
                    }
                    if !(c.weight.is_finite() && c.weight >= 0.0) {
                        return Err(Error::InvalidParameter(
                            "mixture weights must be nonnegative".into(),
                        ));
                    }
                }
                let total: f64 = components.iter().map(|c| c.weight).sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidParameter(format!(
                        "mixture weights sum to {total}, expected 1"
                    )));
                }
                dim.unwrap_or(0)
            }
            GeneratorSpec::Empirical { atoms } => {
                let d = atoms.first().map(Vec::len).ok_or(Error::EmptySamples)?;
                if d == 0 || atoms.iter().any(|a| a.len() != d) {
                    return Err(Error::Dimension(
                        "empirical atoms differ in dimension".into(),
                    ));
                }
                if atoms.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidParameter(
                        "empirical atoms must be finite".into(),
                    ));
                }
                d
            }
        };
        Ok(Self { spec, dim })
    }
}

impl From<DisturbanceGenerator> for GeneratorSpec {
    fn from(g: DisturbanceGenerator) -> Self {
        g.spec
    }
}

impl DisturbanceGenerator {
    pub fn gaussian(mean: Vec<f64>, variance: Vec<f64>) -> Result<Self> {
        GeneratorSpec::Gaussian { mean, variance }.try_into()
    }

    pub fn mixture(components: Vec<MixtureComponent>) -> Result<Self> {
        GeneratorSpec::Mixture { components }.try_into()
    }

    pub fn empirical(atoms: Vec<Vec<f64>>) -> Result<Self> {
        GeneratorSpec::Empirical { atoms }.try_into()
    }

    /// Always returns zero.
    pub fn zero(dim: usize) -> Result<Self> {
        Self::gaussian(vec![0.0; dim], vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn spec(&self) -> &GeneratorSpec {
        &self.spec
    }

    /// Draws one disturbance vector.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        match &self.spec {
            GeneratorSpec::Gaussian { mean, variance } => sample_diag_gaussian(mean, variance, rng),
            GeneratorSpec::Mixture { components } => {
                let u = rng.random::<f64>();
                let mut acc = 0.0;
                let mut chosen = components.last().expect("validated non-empty");
                for c in components {
                    acc += c.weight;
                    if u < acc {
                        chosen = c;
                        break;
                    }
                }
                sample_diag_gaussian(&chosen.mean, &chosen.variance, rng)
            }
            GeneratorSpec::Empirical { atoms } => {
                let idx =
                    ((rng.random::<f64>() * atoms.len() as f64) as usize).min(atoms.len() - 1);
                Vector::from_column_slice(&atoms[idx])
            }
        }
    }
}

fn sample_diag_gaussian<R: Rng + ?Sized>(mean: &[f64], variance: &[f64], rng: &mut R) -> Vector {
    Vector::from_iterator(
        mean.len(),
        mean.iter()
            .zip(variance)
            .map(|(m, v)| m + v.sqrt() * standard_normal(rng)),
    )
}

/// Draws `N(0, cov)` via the symmetric square root of `cov`.
#[derive(Clone, Debug, PartialEq)]
struct GaussianNoise {
    cov: Matrix,
    factor: Matrix,
}

impl GaussianNoise {
    fn new(cov: Matrix, what: &str) -> Result<Self> {
        if !linalg::is_psd(&cov) {
            return Err(Error::InvalidParameter(format!(
                "{what} covariance must be symmetric PSD"
            )));
        }
        let eig = linalg::symmetrize(&cov).symmetric_eigen();
        let sqrt_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
        let factor =
            &eig.eigenvectors * Matrix::from_diagonal(&sqrt_vals) * eig.eigenvectors.transpose();
        Ok(Self { cov, factor })
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        let z = Vector::from_fn(self.factor.ncols(), |_, _| standard_normal(rng));
        &self.factor * z
    }
}

/// Exploration noise added to both players' inputs during data collection.
#[derive(Clone, Debug, PartialEq)]
pub struct ExplorationSpec {
    control: GaussianNoise,
    disturbance: GaussianNoise,
}

impl ExplorationSpec {
    pub fn new(control_cov: Matrix, disturbance_cov: Matrix) -> Result<Self> {
        Ok(Self {
            control: GaussianNoise::new(control_cov, "control exploration")?,
            disturbance: GaussianNoise::new(disturbance_cov, "disturbance exploration")?,
        })
    }

    /// `sigma^2 I` on both channels.
    pub fn isotropic(input_dim: usize, disturbance_dim: usize, sigma: f64) -> Result<Self> {
        let v = sigma * sigma;
        Self::new(
            Matrix::identity(input_dim, input_dim) * v,
            Matrix::identity(disturbance_dim, disturbance_dim) * v,
        )
    }

    pub fn control_cov(&self) -> &Matrix {
        &self.control.cov
    }

    pub fn disturbance_cov(&self) -> &Matrix {
        &self.disturbance.cov
    }

    /// Same noise structure, standard deviations multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let f2 = factor * factor;
        Self::new(&self.control.cov * f2, &self.disturbance.cov * f2)
    }
}

/// Axis-aligned box of initial states.
#[derive(Clone, Debug, PartialEq)]
pub struct StateBox {
    lower: Vector,
    upper: Vector,
}

impl StateBox {
    pub fn new(lower: Vector, upper: Vector) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::Dimension("box bounds differ in length".into()));
        }
        if lower
            .iter()
            .zip(upper.iter())
            .any(|(l, u)| !(l <= u) || !l.is_finite() || !u.is_finite())
        {
            return Err(Error::InvalidParameter(
                "box requires finite lower <= upper".into(),
            ));
        }
        Ok(Self { lower, upper })
    }

    /// `[-half_width, half_width]^n`.
    pub fn symmetric(n: usize, half_width: f64) -> Result<Self> {
        Self::new(
            Vector::from_element(n, -half_width),
            Vector::from_element(n, half_width),
        )
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &Vector {
        &self.lower
    }

    pub fn upper(&self) -> &Vector {
        &self.upper
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        Vector::from_fn(self.dim(), |i, _| {
            self.lower[i] + (self.upper[i] - self.lower[i]) * rng.random::<f64>()
        })
    }
}

/// One recorded step `(x, u, w, x_next)` of the simulator.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub x: Vector,
    pub u: Vector,
    pub w: Vector,
    pub x_next: Vector,
}

/// Simulates `len` consecutive steps from `x0` with `u = Kx + r + o1` and
/// `w = Lx + l + o2`, the noises drawn from `noise`.
pub fn rollout<S, R>(
    sim: &S,
    policy: &PolicyPair,
    noise: &ExplorationSpec,
    x0: &Vector,
    len: usize,
    rng: &mut R,
) -> Result<Vec<Transition>>
where
    S: Simulator + ?Sized,
    R: Rng + ?Sized,
{
    if len == 0 {
        return Err(Error::InvalidParameter(
            "rollout length must be at least 1".into(),
        ));
    }
    linalg::check_len(x0, sim.state_dim(), "initial state")?;
    policy.check_dims(sim.state_dim(), sim.input_dim(), sim.disturbance_dim())?;
    if noise.control.cov.nrows() != sim.input_dim()
        || noise.disturbance.cov.nrows() != sim.disturbance_dim()
    {
        return Err(Error::Dimension(
            "exploration covariances do not match the plant".into(),
        ));
    }

    let mut out = Vec::with_capacity(len);
    let mut x = x0.clone();
    for step in 0..len {
        let u = policy.control(&x) + noise.control.sample(rng);
        let w = policy.adversary(&x) + noise.disturbance.sample(rng);
        let x_next = sim.simulate(&x, &u, &w)?;
        if x_next
            .iter()
            .any(|v| !v.is_finite() || v.abs() > DIVERGENCE_LIMIT)
        {
            return Err(Error::RolloutDivergence {
                step,
                limit: DIVERGENCE_LIMIT,
            });
        }
        out.push(Transition {
            x: x.clone(),
            u,
            w,
            x_next: x_next.clone(),
        });
        x = x_next;
    }
    Ok(out)
}
