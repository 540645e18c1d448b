//! Dense linear-algebra helpers shared by the ridge regressor and the
//! reservoir readout.

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("system matrix is singular or not positive definite")]
    Singular,
    #[error("eigenvalue iteration did not converge")]
    NoConvergence,
}

/// Pivots below this fraction of the largest diagonal entry count as zero.
const PIVOT_TOLERANCE: f64 = 1e-12;

/// Solves `A X = B` for symmetric positive definite `A`.
pub fn solve_spd(a: DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
    let max_diag = a.diagonal().iter().fold(0.0_f64, |m, &v| m.max(v.abs()));
    if !(max_diag.is_finite() && max_diag > 0.0) {
        return Err(LinalgError::Singular);
    }
    let chol = a.cholesky().ok_or(LinalgError::Singular)?;
    let l = chol.l_dirty();
    let min_pivot = (0..l.nrows())
        .map(|i| l[(i, i)] * l[(i, i)])
        .fold(f64::INFINITY, f64::min);
    if min_pivot <= PIVOT_TOLERANCE * max_diag {
        return Err(LinalgError::Singular);
    }
    Ok(chol.solve(b))
}

/// Solves the ridge system `(XᵀX + λI) W = XᵀY`.
pub fn ridge_solve(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    lambda: f64,
) -> Result<DMatrix<f64>, LinalgError> {
    let mut gram = x.tr_mul(x);
    for i in 0..gram.nrows() {
        gram[(i, i)] += lambda;
    }
    solve_spd(gram, &x.tr_mul(y))
}

/// `‖(XᵀX + λI) W − XᵀY‖∞`, the normal-equations residual of a ridge solution.
pub fn ridge_residual(x: &DMatrix<f64>, y: &DMatrix<f64>, w: &DMatrix<f64>, lambda: f64) -> f64 {
    let lhs = x.tr_mul(&(x * w)) + w * lambda;
    (lhs - x.tr_mul(y)).amax()
}

/// Largest eigenvalue modulus, from a real Schur decomposition.
pub fn spectral_radius(m: &DMatrix<f64>) -> Result<f64, LinalgError> {
    let schur = m
        .clone()
        .try_schur(f64::EPSILON, 10_000)
        .ok_or(LinalgError::NoConvergence)?;
    let radius = schur
        .complex_eigenvalues()
        .iter()
        .map(|c| c.norm())
        .fold(0.0_f64, f64::max);
    if radius.is_finite() {
        Ok(radius)
    } else {
        Err(LinalgError::NoConvergence)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spd_solve() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let b = DMatrix::from_row_slice(2, 1, &[1.0, 2.0]);
        let x = solve_spd(a.clone(), &b).unwrap();
        assert!((&a * &x - &b).amax() < 1e-14);
    }

    #[test]
    fn singular_is_reported() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let b = DMatrix::from_row_slice(2, 1, &[1.0, 2.0]);
        assert_eq!(solve_spd(a, &b), Err(LinalgError::Singular));
        assert_eq!(
            solve_spd(DMatrix::zeros(3, 3), &DMatrix::zeros(3, 1)),
            Err(LinalgError::Singular)
        );
    }

    #[test]
    fn radius_of_rotation_and_diagonal() {
        // Complex pair 0.6 ± 0.8i has modulus 1; power iteration would oscillate.
        let rot = DMatrix::from_row_slice(2, 2, &[0.6, -0.8, 0.8, 0.6]);
        assert!((spectral_radius(&rot).unwrap() - 1.0).abs() < 1e-12);
        let diag = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.5, -2.0, 1.0]));
        assert!((spectral_radius(&diag).unwrap() - 2.0).abs() < 1e-12);
    }
}
