//! Shared dense linear-algebra helpers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative asymmetry tolerated before a gram-style input is rejected.
const SYM_REL_TOL: f64 = 1e-9;

/// Condition estimate beyond which least squares falls back to the
/// pseudo-inverse.
pub const COND_LIMIT: f64 = 1e12;

/// max |a - a^T| over max(1, max |a|).
pub fn symmetry_gap(a: &DMatrix<f64>) -> f64 {
    let mut gap: f64 = 0.0;
    let mut scale: f64 = 1.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            scale = scale.max(a[(i, j)].abs());
            if i < j {
                gap = gap.max((a[(i, j)] - a[(j, i)]).abs());
            }
        }
    }
    gap / scale
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(a: &DMatrix<f64>) -> Result<f64> {
    if a.nrows() != a.ncols() || a.nrows() == 0 {
        return Err(Error::Shape(format!(
            "min_eigenvalue needs a nonempty square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if symmetry_gap(a) > SYM_REL_TOL {
        return Err(Error::Symmetry(format!(
            "asymmetry {:.3e} exceeds {SYM_REL_TOL:.0e}",
            symmetry_gap(a)
        )));
    }
    let sym = (a + a.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    Ok(eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min))
}

/// Solve a symmetric system, preferring Cholesky and degrading to LU and then
/// a pseudo-inverse. Errors only when no route yields finite values.
pub fn solve_sym(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if a.nrows() != a.ncols() || a.nrows() != b.len() {
        return Err(Error::Shape(format!(
            "solve_sym: {}x{} matrix with length-{} rhs",
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    if let Some(chol) = a.clone().cholesky() {
        return Ok(chol.solve(b));
    }
    if let Some(sol) = a.clone().lu().solve(b) {
        if sol.iter().all(|v| v.is_finite()) {
            return Ok(sol);
        }
    }
    let svd = a.clone().svd(true, true);
    let eps = svd.singular_values.max() * 1e-12;
    svd.solve(b, eps)
        .map_err(|e| Error::Singular(format!("solve_sym pseudo-inverse failed: {e}")))
}

pub struct Lstsq {
    pub solution: DVector<f64>,
    /// True when QR was abandoned for an SVD pseudo-inverse (underdetermined
    /// system or condition estimate past [`COND_LIMIT`]).
    pub pinv_fallback: bool,
}

/// Least squares `argmin ||a x - b||` via thin QR, with an SVD fallback.
pub fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<Lstsq> {
    if a.nrows() != b.len() || a.ncols() == 0 || a.nrows() == 0 {
        return Err(Error::Shape(format!(
            "lstsq: {}x{} matrix with length-{} rhs",
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    if a.nrows() >= a.ncols() {
        let qr = a.clone().qr();
        let r = qr.r();
        let mut rmax: f64 = 0.0;
        let mut rmin = f64::INFINITY;
        for i in 0..r.nrows().min(r.ncols()) {
            let v = r[(i, i)].abs();
            rmax = rmax.max(v);
            rmin = rmin.min(v);
        }
        if rmin > 0.0 && rmax / rmin < COND_LIMIT {
            let qtb = qr.q().transpose() * b;
            if let Some(sol) = r.solve_upper_triangular(&qtb) {
                return Ok(Lstsq { solution: sol, pinv_fallback: false });
            }
        }
    }
    let svd = a.clone().svd(true, true);
    let eps = svd.singular_values.max() * 1e-12;
    let solution = svd
        .solve(b, eps)
        .map_err(|e| Error::Singular(format!("lstsq pseudo-inverse failed: {e}")))?;
    Ok(Lstsq { solution, pinv_fallback: true })
}

pub fn max_row_norm(a: &DMatrix<f64>) -> f64 {
    (0..a.nrows()).map(|i| a.row(i).norm()).fold(0.0, f64::max)
}
