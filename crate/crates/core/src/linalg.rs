use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Result};

/// Eigenvalue floor for symmetric square roots.
pub const EIGEN_FLOOR: f64 = 1e-12;

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    m.is_square() && (m - m.transpose()).amax() <= tol * (1.0 + m.amax())
}

/// Checks symmetry and that Cholesky succeeds.
pub fn check_spd(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if !m.is_square() || m.nrows() == 0 {
        return Err(invalid(format!("{what} must be a nonempty square matrix")));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(invalid(format!("{what} has non-finite entries")));
    }
    if !is_symmetric(m, 1e-10) {
        return Err(invalid(format!("{what} is not symmetric")));
    }
    if m.clone().cholesky().is_none() {
        return Err(invalid(format!("{what} is not positive definite")));
    }
    Ok(())
}

fn sym_fn(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let vals = eig.eigenvalues.map(|l| f(l.max(EIGEN_FLOOR)));
    let q = &eig.eigenvectors;
    q * DMatrix::from_diagonal(&vals) * q.transpose()
}

pub fn sym_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    sym_fn(m, f64::sqrt)
}

pub fn sym_inv_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    sym_fn(m, |l| 1.0 / l.sqrt())
}

/// Lower Cholesky factor of an SPD matrix.
pub fn cholesky_lower(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    m.clone()
        .cholesky()
        .map(|c| c.l())
        .ok_or_else(|| invalid("matrix is not positive definite"))
}

pub fn dvec(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

/// Row-major nested vectors to a matrix.
pub fn dmat(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let c = rows.first().map(Vec::len).unwrap_or(0);
    if rows.iter().any(|r| r.len() != c) {
        return Err(invalid("ragged matrix rows"));
    }
    Ok(DMatrix::from_row_iterator(rows.len(), c, rows.iter().flatten().copied()))
}

pub fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}
