//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Eigenvalues at or above this value count as nonnegative in PSD tests.
pub const PSD_THRESHOLD: f64 = -1e-10;

/// Relative tolerance used when checking that a matrix is symmetric.
pub const SYMMETRY_TOL: f64 = 1e-9;

pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

pub fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn max_abs_vec(v: &Vector) -> f64 {
    v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

pub fn is_symmetric(m: &Matrix) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = max_abs(m).max(1.0);
    max_abs(&(m - m.transpose())) <= SYMMETRY_TOL * scale
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_eigenvalue(m: &Matrix) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    symmetrize(m).symmetric_eigenvalues().min()
}

/// Largest eigenvalue of the symmetric part of `m`.
pub fn max_eigenvalue(m: &Matrix) -> f64 {
    if m.nrows() == 0 {
        return f64::NEG_INFINITY;
    }
    symmetrize(m).symmetric_eigenvalues().max()
}

pub fn is_psd(m: &Matrix) -> bool {
    is_symmetric(m) && min_eigenvalue(m) >= PSD_THRESHOLD
}

pub fn is_pd(m: &Matrix) -> bool {
    is_symmetric(m) && min_eigenvalue(m) > 0.0
}

/// Largest eigenvalue magnitude of a square matrix.
pub fn spectral_radius(m: &Matrix) -> f64 {
    assert!(m.is_square(), "spectral radius of a non-square matrix");
    if m.nrows() == 0 {
        return 0.0;
    }
    m.complex_eigenvalues()
        .iter()
        .map(|c| c.norm())
        .fold(0.0_f64, f64::max)
}

/// Solves `a * x = b` with partial-pivoting LU.
pub fn solve(a: &Matrix, b: &Matrix, what: &str) -> Result<Matrix> {
    let lu = a.clone().lu();
    lu.solve(b)
        .filter(|x| x.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::Conditioning(format!("{what} is singular")))
}

pub fn solve_vec(a: &Matrix, b: &Vector, what: &str) -> Result<Vector> {
    let lu = a.clone().lu();
    lu.solve(b)
        .filter(|x| x.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::Conditioning(format!("{what} is singular")))
}

pub fn inverse(a: &Matrix, what: &str) -> Result<Matrix> {
    a.clone()
        .try_inverse()
        .filter(|x| x.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::Conditioning(format!("{what} is singular")))
}

/// Builds a matrix from row slices. All rows must share a length.
pub fn from_rows(rows: &[Vec<f64>]) -> Result<Matrix> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Dimension("ragged matrix rows".into()));
    }
    Ok(Matrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

/// `[a b]`, horizontally concatenated.
pub fn hstack(blocks: &[&Matrix]) -> Matrix {
    let nrows = blocks.first().map_or(0, |b| b.nrows());
    let ncols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Matrix::zeros(nrows, ncols);
    let mut col = 0;
    for b in blocks {
        assert_eq!(b.nrows(), nrows, "hstack row mismatch");
        out.view_mut((0, col), (nrows, b.ncols())).copy_from(*b);
        col += b.ncols();
    }
    out
}

/// `[a; b]`, vertically concatenated.
pub fn vstack(blocks: &[&Matrix]) -> Matrix {
    let ncols = blocks.first().map_or(0, |b| b.ncols());
    let nrows = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Matrix::zeros(nrows, ncols);
    let mut row = 0;
    for b in blocks {
        assert_eq!(b.ncols(), ncols, "vstack column mismatch");
        out.view_mut((row, 0), (b.nrows(), ncols)).copy_from(*b);
        row += b.nrows();
    }
    out
}

pub fn concat(parts: &[&Vector]) -> Vector {
    Vector::from_iterator(
        parts.iter().map(|p| p.len()).sum(),
        parts.iter().flat_map(|p| p.iter().copied()),
    )
}

pub fn all_finite(m: &Matrix) -> bool {
    m.iter().all(|v| v.is_finite())
}

pub(crate) fn check_len(v: &Vector, expected: usize, what: &str) -> Result<()> {
    if v.len() != expected {
        return Err(Error::Dimension(format!(
            "{what} has length {}, expected {expected}",
            v.len()
        )));
    }
    Ok(())
}

/// Serde adapters writing matrices as nested row arrays.
pub mod serde_rows {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use super::{from_rows, to_rows, Matrix, Vector};

    pub fn serialize<S: Serializer>(m: &Matrix, s: S) -> Result<S::Ok, S::Error> {
        to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Matrix, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        from_rows(&rows).map_err(serde::de::Error::custom)
    }

    pub mod vector {
        use super::*;

        pub fn serialize<S: Serializer>(v: &Vector, s: S) -> Result<S::Ok, S::Error> {
            v.as_slice().serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vector, D::Error> {
            Ok(Vector::from_vec(Vec::<f64>::deserialize(d)?))
        }
    }

    pub mod vectors {
        use super::*;

        pub fn serialize<S: Serializer>(v: &[Vector], s: S) -> Result<S::Ok, S::Error> {
            v.iter()
                .map(|x| x.as_slice())
                .collect::<Vec<_>>()
                .serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vector>, D::Error> {
            Ok(Vec::<Vec<f64>>::deserialize(d)?
                .into_iter()
                .map(Vector::from_vec)
                .collect())
        }
    }
}
