//! Small dense linear-algebra and summation helpers.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Pairwise (cascade) summation in slice order; deterministic for a fixed order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if values.len() <= BLOCK {
        values.iter().sum()
    } else {
        let mid = values.len() / 2;
        pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
    }
}

pub fn pairwise_mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        f64::NAN
    } else {
        pairwise_sum(values) / values.len() as f64
    }
}

/// Inverse of a symmetric positive definite matrix, refusing matrices whose
/// condition number reaches `max_condition`.
pub fn spd_inverse(m: &DMatrix<f64>, max_condition: f64, what: &str) -> Result<DMatrix<f64>> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.clone().symmetric_eigen();
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(min > 0.0) || !(max / min < max_condition) {
        return Err(Error::Estimation(format!(
            "{what} is singular or ill-conditioned: smallest eigenvalue {min:.3e}, largest {max:.3e}"
        )));
    }
    let inv_vals = eig.eigenvalues.map(|v| 1.0 / v);
    let q = &eig.eigenvectors;
    Ok(q * DMatrix::from_diagonal(&inv_vals) * q.transpose())
}

/// Symmetrizes a covariance estimate and checks it is positive semidefinite
/// up to an eigenvalue floor of `-1e-8 * trace`.
pub fn checked_covariance(m: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sym = (&m + m.transpose()) * 0.5;
    if sym.iter().any(|v| !v.is_finite()) {
        return Err(Error::Estimation("covariance estimate is not finite".into()));
    }
    let trace = sym.trace();
    let min = sym.clone().symmetric_eigenvalues().min();
    if min < -1e-8 * trace.abs() {
        return Err(Error::Estimation(format!(
            "covariance estimate is not positive semidefinite (eigenvalue {min:.3e}, trace {trace:.3e})"
        )));
    }
    Ok(sym)
}
