//! Dense helpers for the handful of small-matrix operations the controller
//! side needs. Everything here works on `nalgebra::DMatrix<f64>`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Relative size below which a Taylor term is considered negligible.
const EXPM_TERM_TOL: f64 = 1e-12;
const EXPM_MAX_TERMS: usize = 64;

/// Matrix exponential by scaling and squaring.
///
/// The argument is halved until its 1-norm is below 0.5, the exponential of the
/// scaled matrix is summed as a Taylor series until the next term drops below
/// `1e-12` relative to the running sum, and the result is squared back up.
pub fn expm(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(Error::dim(format!(
            "expm needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let n = m.nrows();
    let norm = one_norm(m);
    if !norm.is_finite() {
        return Err(Error::Numeric("expm argument has non-finite entries".into()));
    }

    let mut squarings = 0u32;
    let mut scaled_norm = norm;
    while scaled_norm > 0.5 {
        scaled_norm *= 0.5;
        squarings += 1;
    }
    let scaled = m / 2f64.powi(squarings as i32);

    let mut sum = DMatrix::<f64>::identity(n, n);
    let mut term = DMatrix::<f64>::identity(n, n);
    for k in 1..=EXPM_MAX_TERMS {
        term = &term * &scaled / k as f64;
        sum += &term;
        if one_norm(&term) <= EXPM_TERM_TOL * one_norm(&sum) {
            break;
        }
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }

    if sum.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("matrix exponential overflowed".into()));
    }
    Ok(sum)
}

/// Maximum absolute column sum.
pub fn one_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Largest absolute entry.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    m.is_square() && (m - m.transpose()).iter().all(|v| v.abs() <= tol)
}

pub fn is_diagonal(m: &DMatrix<f64>) -> bool {
    m.is_square()
        && m.row_iter()
            .enumerate()
            .all(|(i, row)| row.iter().enumerate().all(|(j, v)| i == j || *v == 0.0))
}

/// Inverse through LU with partial pivoting.
pub fn inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    m.clone()
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::Numeric("singular matrix in inversion".into()))
}
