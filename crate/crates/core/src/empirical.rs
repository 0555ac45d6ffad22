//! Empirical disturbance distribution, sample statistics and discrete 2-Wasserstein distance.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};

/// Ten wind samples for the quadrotor study, one atom per row.
const QUADROTOR_FIXTURE: &str = include_str!("../fixtures/quadrotor_samples.csv");

/// The `N` observed disturbance atoms.
#[derive(Clone, Debug, PartialEq)]
pub struct DisturbanceSamples {
    atoms: Vec<Vector>,
}

impl DisturbanceSamples {
    pub fn new(atoms: Vec<Vector>) -> Result<Self> {
        let d = atoms.first().ok_or(Error::EmptySamples)?.len();
        if d == 0 {
            return Err(Error::Dimension(
                "disturbance atoms must be non-empty".into(),
            ));
        }
        if atoms.iter().any(|a| a.len() != d) {
            return Err(Error::Dimension(
                "disturbance atoms differ in dimension".into(),
            ));
        }
        if atoms.iter().any(|a| a.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidParameter(
                "disturbance atoms must be finite".into(),
            ));
        }
        Ok(Self { atoms })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(rows.iter().map(|r| Vector::from_column_slice(r)).collect())
    }

    /// The pinned ten-atom quadrotor wind fixture.
    pub fn quadrotor_fixture() -> Self {
        Self::from_csv_reader(QUADROTOR_FIXTURE.as_bytes()).expect("bundled fixture is valid")
    }

    pub fn atoms(&self) -> &[Vector] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.atoms[0].len()
    }

    /// `(1/N) sum_j |w_j|^2`.
    pub fn mean_square_norm(&self) -> f64 {
        self.atoms.iter().map(|a| a.norm_squared()).sum::<f64>() / self.len() as f64
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.atoms
            .iter()
            .map(|a| a.iter().copied().collect())
            .collect()
    }

    /// Reads headerless CSV, one atom per row.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut rows = Vec::new();
        for (line, record) in rdr.records().enumerate() {
            let record = record?;
            let row = record
                .iter()
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|e| Error::Parse(format!("row {}: '{f}': {e}", line + 1)))
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Self::from_rows(&rows)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }

    pub fn to_csv_writer<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(writer);
        for a in &self.atoms {
            wtr.write_record(a.iter().map(|v| v.to_string()))?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_csv_writer(std::fs::File::create(path)?)
    }
}

/// Sample mean and (divisor-`N`) covariance of the atoms.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleStats {
    pub mean: Vector,
    pub covariance: Matrix,
}

impl SampleStats {
    pub fn from_samples(samples: &DisturbanceSamples) -> Self {
        let n = samples.len() as f64;
        let d = samples.dim();
        let mean = samples
            .atoms()
            .iter()
            .fold(Vector::zeros(d), |acc, a| acc + a)
            / n;
        let mut covariance = Matrix::zeros(d, d);
        for a in samples.atoms() {
            let c = a - &mean;
            covariance += &c * c.transpose();
        }
        covariance /= n;
        Self {
            mean,
            covariance: linalg::symmetrize(&covariance),
        }
    }

    /// Zero mean and zero covariance.
    pub fn zero(dim: usize) -> Self {
        Self {
            mean: Vector::zeros(dim),
            covariance: Matrix::zeros(dim, dim),
        }
    }

    pub fn new(mean: Vector, covariance: Matrix) -> Result<Self> {
        if covariance.nrows() != mean.len() || !linalg::is_psd(&covariance) {
            return Err(Error::InvalidParameter(
                "covariance must be a symmetric PSD matrix matching the mean".into(),
            ));
        }
        Ok(Self { mean, covariance })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `tr(Sigma) + |mean|^2`, the mean squared atom norm.
    pub fn second_moment(&self) -> f64 {
        self.covariance.trace() + self.mean.norm_squared()
    }
}

/// Squared 2-Wasserstein distance between two uniform measures with `k` atoms each.
pub fn wasserstein2_uniform(p: &[Vector], q: &[Vector]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Dimension(format!(
            "atom counts differ: {} vs {}",
            p.len(),
            q.len()
        )));
    }
    if p.is_empty() {
        return Err(Error::EmptySamples);
    }
    let d = p[0].len();
    if p.iter().chain(q).any(|a| a.len() != d) {
        return Err(Error::Dimension("atoms differ in dimension".into()));
    }
    let k = p.len();
    let cost = Matrix::from_fn(k, k, |i, j| (&p[i] - &q[j]).norm_squared());
    let (total, _) = min_cost_assignment(&cost);
    Ok(total / k as f64)
}

/// Exact minimum-cost perfect matching on a square cost matrix (Hungarian method
/// with potentials). Returns the cost and the column assigned to each row.
pub fn min_cost_assignment(cost: &Matrix) -> (f64, Vec<usize>) {
    let n = cost.nrows();
    assert!(cost.is_square(), "assignment needs a square cost matrix");
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    // p[j]: row matched to column j (1-based, 0 = free); way[j]: previous column on the path.
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        if p[j] != 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    let total = assignment
        .iter()
        .enumerate()
        .map(|(i, &j)| cost[(i, j)])
        .sum();
    (total, assignment)
}
