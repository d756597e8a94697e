//! Renyi-DP accounting for the Gaussian mixing release.
//!
//! A release M(X) = S X + sigma * xi with S ~ N(0, I_{k x n}) and
//! xi ~ N(0, I_{k x d}) has rows i.i.d. N(0, X^T X + sigma^2 I_d). Under a row
//! bound ||x_i|| <= C_X and a lower bound lam on lambda_min(X^T X), its entire
//! Renyi curve is controlled by the single scale-free ratio
//! gamma = (sigma^2 + lam) / C_X^2 (valid for gamma > 1) through [`phi`]. The curve is linear in k and tight: [`exact_renyi_gaussmix`]
//! recovers it exactly when X^T X = C_X^2 I and the removed row has norm C_X.
//! Conversions to (eps, delta)-DP and to tCDP live here too, as does the
//! general two-Gaussian divergence used to audit everything.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::symmetry_gap;

/// One point of a Renyi-DP curve: the divergence bound `eps` at order `order`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RdpPoint {
    pub order: f64,
    pub eps: f64,
}

impl RdpPoint {
    pub fn new(order: f64, eps: f64) -> Result<Self> {
        if !(order > 1.0) || !order.is_finite() {
            return Err(Error::Domain(format!("RDP order must be finite and > 1, got {order}")));
        }
        if !(eps >= 0.0) || !eps.is_finite() {
            return Err(Error::Domain(format!("RDP eps must be finite and >= 0, got {eps}")));
        }
        Ok(Self { order, eps })
    }
}

/// Truncated-CDP parameters `(rho, omega)`: rho * alpha RDP for orders up to
/// omega.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TcdpParams {
    pub rho: f64,
    pub omega: f64,
}

/// ln(1 - 1/g) for g > 1, stable at both ends.
pub(crate) fn ln_one_minus_recip(g: f64) -> f64 {
    if g < 2.0 {
        (g - 1.0).ln() - g.ln()
    } else {
        (-1.0 / g).ln_1p()
    }
}

/// ln(1 - a/g) for 0 < a < g, stable when a/g is close to 1.
fn ln_one_minus_ratio(a: f64, g: f64) -> f64 {
    if a / g > 0.5 {
        (g - a).ln() - g.ln()
    } else {
        (-a / g).ln_1p()
    }
}

/// Unvalidated curve evaluation; callers guarantee gamma > 1 and
/// 1 < alpha < gamma.
pub(crate) fn phi_raw(alpha: f64, k: f64, gamma: f64) -> f64 {
    let num = k * alpha * ln_one_minus_recip(gamma) - k * ln_one_minus_ratio(alpha, gamma);
    (num / (2.0 * (alpha - 1.0))).max(0.0)
}

/// The Renyi curve of the mixing release at normalized scale `gamma` with `k`
/// sketch rows. Finite exactly on 1 < alpha < gamma; nonnegative, linear in
/// k, and nondecreasing in alpha.
pub fn phi(alpha: f64, k: usize, gamma: f64) -> Result<f64> {
    if k == 0 {
        return Err(Error::Domain("sketch dimension k must be >= 1".into()));
    }
    if !(gamma > 1.0) || !gamma.is_finite() {
        return Err(Error::Domain(format!("phi needs gamma > 1, got {gamma}")));
    }
    if !(alpha > 1.0 && alpha < gamma) {
        return Err(Error::Domain(format!(
            "phi needs 1 < alpha < gamma, got alpha {alpha}, gamma {gamma}"
        )));
    }
    Ok(phi_raw(alpha, k as f64, gamma))
}

/// Classical conversion of one RDP point into an (eps, delta)-DP guarantee:
/// eps = eps(alpha) + ln(1 - 1/alpha) - ln(alpha * delta) / (alpha - 1).
pub fn rdp_to_dp(point: RdpPoint, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Domain(format!("delta must lie in (0,1), got {delta}")));
    }
    let a = point.order;
    Ok(point.eps + ln_one_minus_recip(a) - (a * delta).ln() / (a - 1.0))
}

/// Conversion of (rho, omega)-tCDP into (eps, delta)-DP.
pub fn tcdp_to_dp(params: TcdpParams, delta: f64) -> Result<f64> {
    let TcdpParams { rho, omega } = params;
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::Domain(format!("tCDP rho must be positive, got {rho}")));
    }
    if !(omega > 1.0) || !omega.is_finite() {
        return Err(Error::Domain(format!("tCDP omega must be > 1, got {omega}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Domain(format!("delta must lie in (0,1), got {delta}")));
    }
    let l = (1.0 / delta).ln();
    if l <= (omega - 1.0).powi(2) * rho {
        Ok(rho + 2.0 * (rho * l).sqrt())
    } else {
        Ok(rho * omega + l / (omega - 1.0))
    }
}

/// tCDP parameters of the mixing release: (k / (2 gamma^2), 2 gamma / 5),
/// valid for gamma > 5/2.
pub fn gaussmix_tcdp(k: usize, gamma: f64) -> Result<TcdpParams> {
    if k == 0 {
        return Err(Error::Domain("sketch dimension k must be >= 1".into()));
    }
    if !(gamma > 2.5) || !gamma.is_finite() {
        return Err(Error::Domain(format!("tCDP form needs gamma > 5/2, got {gamma}")));
    }
    Ok(TcdpParams { rho: k as f64 / (2.0 * gamma * gamma), omega: 2.0 * gamma / 5.0 })
}

/// (eps, delta) cost of the classical Gaussian mechanism at noise multiplier
/// `sigma` (in units of the query's L2 sensitivity).
pub fn gaussian_mechanism_eps(sigma: f64, delta: f64) -> Result<f64> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::Domain(format!("sigma must be positive, got {sigma}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Domain(format!("delta must lie in (0,1), got {delta}")));
    }
    Ok((2.0 * (1.25 / delta).ln()).sqrt() / sigma)
}

const SYM_TOL: f64 = 1e-9;
/// Relative floor for the positive-definiteness check of the order-alpha
/// covariance combination.
const PD_REL_TOL: f64 = 1e-12;

fn check_covariance(name: &str, m: &DMatrix<f64>, dim: usize) -> Result<()> {
    if m.nrows() != dim || m.ncols() != dim {
        return Err(Error::Shape(format!(
            "{name} must be {dim}x{dim}, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if symmetry_gap(m) > SYM_TOL {
        return Err(Error::Symmetry(format!("{name} asymmetry {:.3e}", symmetry_gap(m))));
    }
    Ok(())
}

fn log_det_spd(name: &str, m: &DMatrix<f64>) -> Result<(nalgebra::Cholesky<f64, nalgebra::Dyn>, f64)> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Validity(format!("{name} is not positive definite")))?;
    let ld = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    Ok((chol, ld))
}

/// Renyi divergence of order `alpha` between N(mu1, sigma1) and N(mu2, sigma2).
///
/// Finite only when alpha*sigma1^{-1} + (1-alpha)*sigma2^{-1} stays positive
/// definite; otherwise this returns a validity error.
pub fn renyi_gaussian_pair(
    mu1: &DVector<f64>,
    sigma1: &DMatrix<f64>,
    mu2: &DVector<f64>,
    sigma2: &DMatrix<f64>,
    alpha: f64,
) -> Result<f64> {
    let d = mu1.len();
    if d == 0 || mu2.len() != d {
        return Err(Error::Shape(format!("mean lengths {d} and {} differ", mu2.len())));
    }
    check_covariance("sigma1", sigma1, d)?;
    check_covariance("sigma2", sigma2, d)?;
    if !(alpha > 1.0) || !alpha.is_finite() {
        return Err(Error::Domain(format!("divergence order must be > 1, got {alpha}")));
    }

    let (chol1, ld1) = log_det_spd("sigma1", sigma1)?;
    let (chol2, ld2) = log_det_spd("sigma2", sigma2)?;

    // Finiteness of the integral defining the divergence.
    let combo = chol1.inverse() * alpha + chol2.inverse() * (1.0 - alpha);
    let combo_scale = combo.diagonal().amax().max(1.0);
    let combo_min = ((&combo + combo.transpose()) * 0.5).symmetric_eigen().eigenvalues.min();
    if combo_min <= PD_REL_TOL * combo_scale {
        return Err(Error::Validity(format!(
            "order {alpha} is past the finite range for this covariance pair"
        )));
    }

    // sigma_alpha = sigma1 + alpha (sigma2 - sigma1); PD iff the combination
    // above is PD.
    let sigma_alpha = sigma1 + (sigma2 - sigma1) * alpha;
    let (chol_a, ld_a) = log_det_spd("order-alpha combination", &sigma_alpha)?;

    let dmu = mu1 - mu2;
    let quad = 0.5 * alpha * dmu.dot(&chol_a.solve(&dmu));
    let log_term = (ld_a - (1.0 - alpha) * ld1 - alpha * ld2) / (2.0 * (alpha - 1.0));
    Ok(quad - log_term)
}

/// Leverage of row `i` against the release covariance:
/// t = x_i^T (X^T X + sigma^2 I)^{-1} x_i. Always lies in [0, 1) when the row
/// is part of X.
fn release_leverage(x: &DMatrix<f64>, removed_row: usize, sigma: f64) -> Result<f64> {
    if removed_row >= x.nrows() {
        return Err(Error::Shape(format!(
            "row index {removed_row} out of range for {} rows",
            x.nrows()
        )));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::Domain(format!("sigma must be positive, got {sigma}")));
    }
    let d = x.ncols();
    let mut gram = x.transpose() * x;
    for j in 0..d {
        gram[(j, j)] += sigma * sigma;
    }
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::Validity("release covariance not positive definite".into()))?;
    let row = x.row(removed_row).transpose();
    Ok(row.dot(&chol.solve(&row)))
}

/// Exact Renyi divergence of the release when row `removed_row` of X is
/// zeroed out: (k / (2(alpha-1))) * ln[(1-t)^alpha / (1 - alpha t)] with the
/// leverage t of that row. Errors with [`Error::Validity`] once
/// alpha * t >= 1, where the divergence is infinite.
pub fn exact_renyi_gaussmix(
    x: &DMatrix<f64>,
    removed_row: usize,
    sigma: f64,
    k: usize,
    alpha: f64,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::Domain("sketch dimension k must be >= 1".into()));
    }
    if !(alpha > 1.0) || !alpha.is_finite() {
        return Err(Error::Domain(format!("divergence order must be > 1, got {alpha}")));
    }
    let t = release_leverage(x, removed_row, sigma)?;
    if alpha * t >= 1.0 {
        return Err(Error::Validity(format!(
            "divergence infinite: alpha * t = {:.6} >= 1",
            alpha * t
        )));
    }
    let ln_1mt = (-t).ln_1p();
    let ln_1mat =
        if alpha * t > 0.5 { (1.0 - alpha * t).ln() } else { (-alpha * t).ln_1p() };
    Ok((k as f64 * (alpha * ln_1mt - ln_1mat) / (2.0 * (alpha - 1.0))).max(0.0))
}

/// The reverse (insertion) direction: divergence between the release without
/// row `removed_row` and the release with it. Always finite, and dominated by
/// [`exact_renyi_gaussmix`] for every alpha > 1.
pub fn exact_renyi_gaussmix_insertion(
    x: &DMatrix<f64>,
    removed_row: usize,
    sigma: f64,
    k: usize,
    alpha: f64,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::Domain("sketch dimension k must be >= 1".into()));
    }
    if !(alpha > 1.0) || !alpha.is_finite() {
        return Err(Error::Domain(format!("divergence order must be > 1, got {alpha}")));
    }
    let t = release_leverage(x, removed_row, sigma)?;
    // Leverage against the gram with the row removed, by rank-one update.
    let u = t / (1.0 - t);
    let value = k as f64 * (alpha * u.ln_1p() - (alpha * u).ln_1p()) / (2.0 * (alpha - 1.0));
    Ok(value.max(0.0))
}
