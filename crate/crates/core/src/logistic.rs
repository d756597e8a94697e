//! Private logistic regression.
//!
//! The main route is a reduction: approximate the logistic loss by a
//! quadratic q(s) = b0 + b1 s + b2 s^2 on an interval [-Q, Q], observe that
//! the surrogate empirical risk is a least-squares objective in disguise, and
//! reuse the linear-regression release with labels left at their +-1 values
//! (c_y = 1). The returned parameter is the linear solution scaled by
//! -b1/(2 b2), a data-independent constant, so privacy carries over by
//! post-processing. [`objective_perturbation`] is the classical baseline.

use nalgebra::{DMatrix, DVector};

use crate::calibrate::PrivacyBudget;
use crate::error::{Error, Result};
use crate::linalg;
use crate::regression::{empirical_loss, linear_mixing, FitResult, LabeledDataset, Method};
use crate::rng::{normal_vector, role, RngStream};

/// Grid resolution used for the surrogate fit everywhere in this crate.
pub const SURROGATE_GRID_POINTS: usize = 1001;

/// Classification data: rows bounded by c_x, labels exactly +-1.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryLabeledDataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
    c_x: f64,
}

impl BinaryLabeledDataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, c_x: f64) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::Shape(format!(
                "design matrix must be nonempty, got {}x{}",
                x.nrows(),
                x.ncols()
            )));
        }
        if y.len() != x.nrows() {
            return Err(Error::Shape(format!("{} rows but {} labels", x.nrows(), y.len())));
        }
        if !(c_x > 0.0) || !c_x.is_finite() {
            return Err(Error::Domain(format!("row bound must be positive, got {c_x}")));
        }
        if let Some(bad) = y.iter().find(|v| **v != 1.0 && **v != -1.0) {
            return Err(Error::Validity(format!("labels must be exactly +-1, got {bad}")));
        }
        let worst = linalg::max_row_norm(&x);
        if worst > c_x * (1.0 + 1e-9) {
            return Err(Error::Validity(format!(
                "row norm {worst:.12e} exceeds bound {c_x:.12e}"
            )));
        }
        Ok(Self { x, y, c_x })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn c_x(&self) -> f64 {
        self.c_x
    }

    pub fn nrows(&self) -> usize {
        self.x.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.x.ncols()
    }

    /// The same data viewed as a regression problem with c_y = 1.
    pub fn as_regression(&self) -> Result<LabeledDataset> {
        LabeledDataset::new(self.x.clone(), self.y.clone(), self.c_x, 1.0)
    }
}

/// A quadratic approximation of the logistic loss on [-interval_q,
/// interval_q], with its worst grid error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurrogateCoeffs {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    /// Max |loss - quadratic| over the fit grid.
    pub q_bound: f64,
    pub interval_q: f64,
}

impl SurrogateCoeffs {
    /// The data-independent factor -b1 / (2 b2) relating the linear solution
    /// to the surrogate minimizer.
    pub fn theta_scale(&self) -> f64 {
        -self.b1 / (2.0 * self.b2)
    }
}

/// Overflow-safe ln(1 + e^{-s}).
fn softplus_neg(s: f64) -> f64 {
    if s > 0.0 {
        (-s).exp().ln_1p()
    } else {
        -s + s.exp().ln_1p()
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Least-squares fit of ln(1 + e^{-s}) by a quadratic over a uniform grid on
/// [-q, q]. The fit runs in the scaled variable s/q so the design stays
/// well-conditioned for tiny q.
pub fn fit_quadratic_surrogate(q: f64, grid_points: usize) -> Result<SurrogateCoeffs> {
    if !(q > 0.0) || !q.is_finite() {
        return Err(Error::Domain(format!("interval half-width must be positive, got {q}")));
    }
    if grid_points < 3 {
        return Err(Error::Domain(format!("need at least 3 grid points, got {grid_points}")));
    }
    let m = grid_points;
    let mut design = DMatrix::zeros(m, 3);
    let mut target = DVector::zeros(m);
    for j in 0..m {
        let u = -1.0 + 2.0 * j as f64 / (m - 1) as f64;
        design[(j, 0)] = 1.0;
        design[(j, 1)] = u;
        design[(j, 2)] = u * u;
        target[j] = softplus_neg(u * q);
    }
    let solved = linalg::lstsq(&design, &target)?;
    let c = solved.solution;
    let b0 = c[0];
    let b1 = c[1] / q;
    let b2 = c[2] / (q * q);
    if !(b2 > 0.0) {
        return Err(Error::Degenerate(format!(
            "surrogate curvature must be positive, got b2 = {b2}"
        )));
    }
    let mut q_bound = 0.0f64;
    for j in 0..m {
        let s = q * (-1.0 + 2.0 * j as f64 / (m - 1) as f64);
        let err = (softplus_neg(s) - (b0 + b1 * s + b2 * s * s)).abs();
        q_bound = q_bound.max(err);
    }
    Ok(SurrogateCoeffs { b0, b1, b2, q_bound, interval_q: q })
}

/// Average logistic loss (1/n) sum ln(1 + e^{-y_i x_i^T theta}).
pub fn logistic_loss(data: &BinaryLabeledDataset, theta: &DVector<f64>) -> Result<f64> {
    if theta.len() != data.ncols() {
        return Err(Error::Shape(format!(
            "theta has {} entries for {} columns",
            theta.len(),
            data.ncols()
        )));
    }
    let scores = data.x() * theta;
    let n = data.nrows() as f64;
    Ok(scores.iter().zip(data.y().iter()).map(|(s, y)| softplus_neg(y * s)).sum::<f64>() / n)
}

/// The surrogate empirical risk
/// b0 + b1 theta^T (X^T Y / n) + b2 theta^T (X^T X / n) theta.
pub fn surrogate_loss(
    data: &BinaryLabeledDataset,
    theta: &DVector<f64>,
    coeffs: &SurrogateCoeffs,
) -> Result<f64> {
    if theta.len() != data.ncols() {
        return Err(Error::Shape(format!(
            "theta has {} entries for {} columns",
            theta.len(),
            data.ncols()
        )));
    }
    let n = data.nrows() as f64;
    let xty = data.x().transpose() * data.y();
    let xtheta = data.x() * theta;
    Ok(coeffs.b0 + coeffs.b1 * theta.dot(&xty) / n + coeffs.b2 * xtheta.norm_squared() / n)
}

/// Exact surrogate minimizer -(b1/(2 b2)) (X^T X)^{-1} X^T Y. A singular gram
/// gets a 1e-6 ridge jitter; the flag reports whether that happened.
pub fn surrogate_argmin_exact(
    data: &BinaryLabeledDataset,
    coeffs: &SurrogateCoeffs,
) -> Result<(DVector<f64>, bool)> {
    let gram = data.x().transpose() * data.x();
    let xty = data.x().transpose() * data.y();
    let scaled = xty * coeffs.theta_scale();
    if let Some(chol) = gram.clone().cholesky() {
        return Ok((chol.solve(&scaled), false));
    }
    let d = data.ncols();
    let jittered = gram + DMatrix::identity(d, d) * 1e-6;
    let chol = jittered
        .cholesky()
        .ok_or_else(|| Error::Singular("gram remains singular after 1e-6 jitter".into()))?;
    Ok((chol.solve(&scaled), true))
}

/// Number of training points whose score leaves the surrogate's validity
/// interval: |x_i^T theta| > q (labels are +-1, so the margin magnitude is
/// the score magnitude).
pub fn count_margin_violations(
    data: &BinaryLabeledDataset,
    theta: &DVector<f64>,
    q: f64,
) -> Result<usize> {
    if theta.len() != data.ncols() {
        return Err(Error::Shape(format!(
            "theta has {} entries for {} columns",
            theta.len(),
            data.ncols()
        )));
    }
    let scores = data.x() * theta;
    Ok(scores.iter().filter(|s| s.abs() > q).count())
}

/// Fraction of points classified correctly by sign(x_i^T theta), counting a
/// zero score as +1.
pub fn accuracy(data: &BinaryLabeledDataset, theta: &DVector<f64>) -> Result<f64> {
    if theta.len() != data.ncols() {
        return Err(Error::Shape(format!(
            "theta has {} entries for {} columns",
            theta.len(),
            data.ncols()
        )));
    }
    let scores = data.x() * theta;
    let hits = scores
        .iter()
        .zip(data.y().iter())
        .filter(|(s, y)| {
            let pred = if **s >= 0.0 { 1.0 } else { -1.0 };
            pred == **y
        })
        .count();
    Ok(hits as f64 / data.nrows() as f64)
}

/// DP logistic regression by reduction: fit the surrogate on [-q, q], run the
/// linear release on (X, Y) with c_y = 1, scale the solution by -b1/(2 b2).
pub fn logistic_mixing(
    data: &BinaryLabeledDataset,
    budget: PrivacyBudget,
    k: usize,
    q: f64,
    rng: RngStream,
) -> Result<FitResult> {
    let coeffs = fit_quadratic_surrogate(q, SURROGATE_GRID_POINTS)?;
    let regression_view = data.as_regression()?;
    let linear = linear_mixing(&regression_view, budget, k, rng)?;
    let theta = linear.theta * coeffs.theta_scale();
    let empirical_loss = empirical_loss(&regression_view, &theta)?;
    Ok(FitResult {
        method: Method::LogisticMixing,
        theta,
        gamma_used: linear.gamma_used,
        branch: linear.branch,
        empirical_loss,
        seed: rng.seed(),
        converged: true,
        pinv_fallback: linear.pinv_fallback,
    })
}

struct LbfgsOutcome {
    theta: DVector<f64>,
    converged: bool,
}

/// Limited-memory BFGS with Armijo backtracking. `f_and_grad` returns the
/// objective and its gradient; convergence means gradient norm <= grad_tol.
fn minimize_lbfgs(
    f_and_grad: &dyn Fn(&DVector<f64>) -> (f64, DVector<f64>),
    theta0: DVector<f64>,
    grad_tol: f64,
    max_iter: usize,
) -> LbfgsOutcome {
    const MEMORY: usize = 10;
    const ARMIJO: f64 = 1e-4;
    let mut theta = theta0;
    let (mut fval, mut grad) = f_and_grad(&theta);
    let mut history: Vec<(DVector<f64>, DVector<f64>, f64)> = Vec::new();

    for _ in 0..max_iter {
        if grad.norm() <= grad_tol {
            return LbfgsOutcome { theta, converged: true };
        }

        // Two-loop recursion for the search direction.
        let mut q = grad.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let alpha = rho * s.dot(&q);
            q -= y * alpha;
            alphas.push(alpha);
        }
        if let Some((s, y, _)) = history.last() {
            q *= s.dot(y) / y.norm_squared();
        }
        for ((s, y, rho), alpha) in history.iter().zip(alphas.into_iter().rev()) {
            let beta = rho * y.dot(&q);
            q += s * (alpha - beta);
        }
        let mut dir = -q;
        let mut slope = grad.dot(&dir);
        if slope >= 0.0 {
            // Curvature information went stale; restart from steepest descent.
            history.clear();
            dir = -&grad;
            slope = -grad.norm_squared();
        }

        let mut accepted = None;
        let mut t = 1.0;
        for _ in 0..60 {
            let cand = &theta + &dir * t;
            let (fc, gc) = f_and_grad(&cand);
            if fc <= fval + ARMIJO * t * slope {
                accepted = Some((cand, fc, gc));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, fc, gc)) = accepted else {
            break;
        };

        let s = &cand - &theta;
        let y = &gc - &grad;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if history.len() == MEMORY {
                history.remove(0);
            }
            history.push((s, y, 1.0 / sy));
        }
        theta = cand;
        fval = fc;
        grad = gc;
    }
    let converged = grad.norm() <= grad_tol;
    LbfgsOutcome { theta, converged }
}

const OBJECTIVE_GRAD_TOL: f64 = 1e-6;
const OBJECTIVE_MAX_ITER: usize = 500;

fn objective_perturbation_with_b(
    data: &BinaryLabeledDataset,
    budget: PrivacyBudget,
    b: &DVector<f64>,
    seed: u64,
) -> Result<FitResult> {
    let n = data.nrows() as f64;
    let d = data.ncols();
    let delta_reg = data.c_x() * data.c_x() / (2.0 * budget.eps);

    let f_and_grad = |theta: &DVector<f64>| {
        let scores = data.x() * theta;
        let mut loss = 0.0;
        let mut weights = DVector::zeros(data.nrows());
        for i in 0..data.nrows() {
            let t = data.y()[i] * scores[i];
            loss += softplus_neg(t);
            // d/ds softplus_neg(y s) = y (sigmoid(y s) - 1).
            weights[i] = data.y()[i] * (sigmoid(t) - 1.0);
        }
        let value = loss / n + b.dot(theta) / n + delta_reg * theta.norm_squared() / (2.0 * n);
        let grad = (data.x().transpose() * weights + b + theta * delta_reg) / n;
        (value, grad)
    };

    let outcome = minimize_lbfgs(&f_and_grad, DVector::zeros(d), OBJECTIVE_GRAD_TOL, OBJECTIVE_MAX_ITER);
    if !outcome.converged {
        eprintln!(
            "warning: objective perturbation hit the {OBJECTIVE_MAX_ITER}-iteration cap; result flagged"
        );
    }
    let regression_view = data.as_regression()?;
    let empirical_loss = empirical_loss(&regression_view, &outcome.theta)?;
    Ok(FitResult {
        method: Method::ObjectivePerturbation,
        theta: outcome.theta,
        gamma_used: None,
        branch: None,
        empirical_loss,
        seed,
        converged: outcome.converged,
        pinv_fallback: false,
    })
}

/// The classical objective-perturbation baseline: noise vector
/// b ~ N(0, sigma^2 I_d) with sigma = sqrt(4 eps + 8 ln(2/delta)) / eps * C_X
/// added linearly to the objective, ridge term C_X^2/(2 eps) / n, minimized
/// by limited-memory BFGS.
pub fn objective_perturbation(
    data: &BinaryLabeledDataset,
    budget: PrivacyBudget,
    rng: RngStream,
) -> Result<FitResult> {
    let sigma =
        (4.0 * budget.eps + 8.0 * (2.0 / budget.delta).ln()).sqrt() / budget.eps * data.c_x();
    let raw = normal_vector(&mut rng.substream(role::OBJECTIVE), data.ncols());
    let b = raw * sigma;
    objective_perturbation_with_b(data, budget, &b, rng.seed())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanism::{self, SketchRelease};
    use crate::regression::solve_joint_release;
    use crate::rng::normal_matrix;
    use approx::assert_relative_eq;

    fn two_cluster_data(n: usize, d: usize, separation: f64, seed: u64) -> BinaryLabeledDataset {
        let stream = RngStream::new(seed, 0);
        let mut x = normal_matrix(&mut stream.substream(role::DATA), n, d) * 0.25;
        let y = DVector::from_fn(n, |i, _| if i % 2 == 0 { 1.0 } else { -1.0 });
        for i in 0..n {
            x[(i, 0)] += y[i] * separation / 2.0;
        }
        let bound = linalg::max_row_norm(&x);
        x /= bound;
        BinaryLabeledDataset::new(x, y, 1.0).unwrap()
    }

    #[test]
    fn dataset_rejects_non_binary_labels() {
        let x = DMatrix::identity(2, 2);
        assert!(BinaryLabeledDataset::new(x.clone(), DVector::from_vec(vec![1.0, 0.5]), 1.0)
            .is_err());
        assert!(BinaryLabeledDataset::new(x, DVector::from_vec(vec![1.0, -1.0]), 1.0).is_ok());
    }

    #[test]
    fn surrogate_matches_taylor_for_tiny_interval() {
        let c = fit_quadratic_surrogate(1e-3, SURROGATE_GRID_POINTS).unwrap();
        assert_relative_eq!(c.b0, std::f64::consts::LN_2, epsilon = 1e-4);
        assert_relative_eq!(c.b1, -0.5, epsilon = 1e-4);
        assert_relative_eq!(c.b2, 0.125, epsilon = 1e-4);
        assert_relative_eq!(c.theta_scale(), 2.0, epsilon = 1e-3);
    }

    #[test]
    fn surrogate_default_interval_frozen_coefficients() {
        let c = fit_quadratic_surrogate(4.0, SURROGATE_GRID_POINTS).unwrap();
        assert_relative_eq!(c.b0, 0.74434899085449724, max_relative = 1e-9);
        assert_relative_eq!(c.b1, -0.5, max_relative = 1e-9);
        assert_relative_eq!(c.b2, 0.085615002303305876, max_relative = 1e-9);
        assert_relative_eq!(c.q_bound, 0.096039099789582139, max_relative = 1e-9);

        // The worst error sits at the interval ends, which every uniform grid
        // contains, so a dense re-evaluation of the same quadratic agrees.
        let mut dense = 0.0f64;
        for j in 0..100_000 {
            let s = 4.0 * (-1.0 + 2.0 * j as f64 / 99_999.0);
            dense = dense.max((softplus_neg(s) - (c.b0 + c.b1 * s + c.b2 * s * s)).abs());
        }
        assert!((dense - c.q_bound).abs() <= 1e-4);

        // Refitting on the dense grid barely moves the coefficients.
        let refit = fit_quadratic_surrogate(4.0, 100_000).unwrap();
        assert!((refit.b0 - c.b0).abs() <= 1e-3);
        assert!((refit.b1 - c.b1).abs() <= 1e-3);
        assert!((refit.b2 - c.b2).abs() <= 1e-3);
    }

    #[test]
    fn q_bound_grows_with_interval() {
        let mut prev = 0.0;
        for q in [1.0, 2.0, 4.0, 8.0] {
            let c = fit_quadratic_surrogate(q, SURROGATE_GRID_POINTS).unwrap();
            assert!(c.q_bound >= prev, "q={q}");
            prev = c.q_bound;
        }
    }

    #[test]
    fn surrogate_loss_forms_agree() {
        let data = two_cluster_data(40, 3, 0.8, 5);
        let coeffs = fit_quadratic_surrogate(4.0, SURROGATE_GRID_POINTS).unwrap();
        let theta = DVector::from_vec(vec![0.3, -0.2, 0.1]);
        assert_relative_eq!(
            surrogate_loss(&data, &DVector::zeros(3), &coeffs).unwrap(),
            coeffs.b0,
            max_relative = 1e-15
        );
        let v = surrogate_loss(&data, &theta, &coeffs).unwrap();

        // Completed square: b0 - b1^2 ||Y||^2 / (4 n b2) + (b2/n) || -(b1/2b2) Y - X theta ||^2.
        let n = data.nrows() as f64;
        let scale = coeffs.theta_scale();
        let resid = data.y() * scale - data.x() * &theta;
        let square = coeffs.b0 - coeffs.b1 * coeffs.b1 * data.y().norm_squared() / (4.0 * n * coeffs.b2)
            + coeffs.b2 / n * resid.norm_squared();
        assert_relative_eq!(v, square, epsilon = 1e-10, max_relative = 1e-10);

        // Termwise summation oracle.
        let mut naive = coeffs.b0;
        for i in 0..data.nrows() {
            let s: f64 = (0..3).map(|j| data.x()[(i, j)] * theta[j]).sum();
            naive += (coeffs.b1 * data.y()[i] * s + coeffs.b2 * s * s) / n;
        }
        assert_relative_eq!(v, naive, max_relative = 1e-12);
    }

    #[test]
    fn argmin_identity_design_and_gradient() {
        let coeffs = fit_quadratic_surrogate(4.0, SURROGATE_GRID_POINTS).unwrap();
        let y = DVector::from_vec(vec![1.0, -1.0, 1.0]);
        let data = BinaryLabeledDataset::new(DMatrix::identity(3, 3), y.clone(), 1.0).unwrap();
        let (theta, jittered) = surrogate_argmin_exact(&data, &coeffs).unwrap();
        assert!(!jittered);
        assert_relative_eq!(theta, y * coeffs.theta_scale(), max_relative = 1e-12);

        let data = two_cluster_data(60, 4, 0.7, 9);
        let (theta, _) = surrogate_argmin_exact(&data, &coeffs).unwrap();
        let n = data.nrows() as f64;
        let grad = (data.x().transpose() * data.y()) * (coeffs.b1 / n)
            + (data.x().transpose() * (data.x() * &theta)) * (2.0 * coeffs.b2 / n);
        let scale = 1.0 + (data.x().transpose() * data.y()).norm() / n;
        assert!(grad.norm() <= 1e-8 * scale, "gradient norm {}", grad.norm());
    }

    #[test]
    fn argmin_matches_conjugate_gradient_oracle() {
        let coeffs = fit_quadratic_surrogate(4.0, SURROGATE_GRID_POINTS).unwrap();
        let data = two_cluster_data(100, 8, 0.6, 13);
        let (theta, jittered) = surrogate_argmin_exact(&data, &coeffs).unwrap();
        assert!(!jittered);

        // CG on X^T X theta = scale * X^T Y.
        let a = data.x().transpose() * data.x();
        let rhs = (data.x().transpose() * data.y()) * coeffs.theta_scale();
        let mut sol: DVector<f64> = DVector::zeros(8);
        let mut r = rhs.clone();
        let mut p = r.clone();
        let mut rs = r.norm_squared();
        for _ in 0..64 {
            let ap = &a * &p;
            let alpha = rs / p.dot(&ap);
            sol += &p * alpha;
            r -= ap * alpha;
            let rs_new = r.norm_squared();
            if rs_new.sqrt() < 1e-12 {
                break;
            }
            p = &r + &p * (rs_new / rs);
            rs = rs_new;
        }
        assert_relative_eq!(theta, sol, epsilon = 1e-8, max_relative = 1e-8);
    }

    #[test]
    fn argmin_jitters_singular_gram() {
        let coeffs = fit_quadratic_surrogate(4.0, SURROGATE_GRID_POINTS).unwrap();
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 0.0]);
        let data =
            BinaryLabeledDataset::new(x, DVector::from_vec(vec![1.0, -1.0]), 1.0).unwrap();
        let (theta, jittered) = surrogate_argmin_exact(&data, &coeffs).unwrap();
        assert!(jittered);
        assert!(theta.norm().is_finite());
    }

    #[test]
    fn logistic_loss_reference_points() {
        let data = two_cluster_data(30, 3, 1.0, 3);
        assert_relative_eq!(
            logistic_loss(&data, &DVector::zeros(3)).unwrap(),
            std::f64::consts::LN_2,
            max_relative = 1e-12
        );
        // On exactly separated data the loss decays to zero along the
        // separating direction.
        let sep_x = DMatrix::from_fn(10, 2, |i, j| {
            if j == 0 {
                if i % 2 == 0 { 0.8 } else { -0.8 }
            } else {
                0.1
            }
        });
        let sep_y = DVector::from_fn(10, |i, _| if i % 2 == 0 { 1.0 } else { -1.0 });
        let sep = BinaryLabeledDataset::new(sep_x, sep_y, 1.0).unwrap();
        let dir = DVector::from_vec(vec![1.0, 0.0]);
        let mut prev = f64::INFINITY;
        for scale in [1.0, 4.0, 16.0, 64.0] {
            let l = logistic_loss(&sep, &(&dir * scale)).unwrap();
            assert!(l < prev);
            prev = l;
        }
        assert!(prev < 1e-20);

        let theta = DVector::from_vec(vec![0.4, -0.3, 0.2]);
        let mut naive = 0.0;
        for i in 0..data.nrows() {
            let s: f64 = (0..3).map(|j| data.x()[(i, j)] * theta[j]).sum();
            naive += (1.0 + (-data.y()[i] * s).exp()).ln();
        }
        naive /= data.nrows() as f64;
        assert_relative_eq!(logistic_loss(&data, &theta).unwrap(), naive, max_relative = 1e-10);
    }

    #[test]
    fn reduction_identity_without_noise() {
        // Identity sketch, zero noise: the released solve scaled by
        // -b1/(2 b2) IS the exact surrogate minimizer.
        let data = two_cluster_data(50, 3, 0.9, 21);
        let coeffs = fit_quadratic_surrogate(4.0, SURROGATE_GRID_POINTS).unwrap();
        let n = data.nrows();
        let mut values = DMatrix::zeros(n, 4);
        values.view_mut((0, 0), (n, 3)).copy_from(data.x());
        values.view_mut((0, 3), (n, 1)).copy_from(data.y());
        let release = SketchRelease {
            values,
            k: n,
            noise_std_used: 0.0,
            branch: mechanism::Branch::EigAssisted,
            lambda_tilde: Some(0.0),
        };
        let (linear, _) = solve_joint_release(&release, 3).unwrap();
        let reduced = linear * coeffs.theta_scale();
        let (exact, _) = surrogate_argmin_exact(&data, &coeffs).unwrap();
        assert_relative_eq!(reduced, exact, epsilon = 1e-8, max_relative = 1e-8);
    }

    #[test]
    fn logistic_mixing_deterministic_and_handles_degenerate_labels() {
        let budget = PrivacyBudget::new(2.0, 1e-5).unwrap();
        let data = two_cluster_data(40, 3, 0.8, 7);
        let a = logistic_mixing(&data, budget, 32, 4.0, RngStream::new(10, 5)).unwrap();
        let b = logistic_mixing(&data, budget, 32, 4.0, RngStream::new(10, 5)).unwrap();
        assert_eq!(a.theta, b.theta);
        assert_eq!(a.method, Method::LogisticMixing);

        let x = DMatrix::identity(6, 2) * 0.5;
        let all_pos = BinaryLabeledDataset::new(x, DVector::from_element(6, 1.0), 1.0).unwrap();
        let fit = logistic_mixing(&all_pos, budget, 8, 4.0, RngStream::new(1, 0)).unwrap();
        assert!(fit.theta.norm().is_finite());
    }

    #[test]
    fn objective_perturbation_matches_newton_oracle_without_noise() {
        // Overlapping clusters keep the unregularized minimizer finite and
        // the Hessian well-conditioned, so the 1e-6 gradient stop maps to a
        // tight parameter gap.
        let data = two_cluster_data(80, 3, 0.4, 31);
        let budget = PrivacyBudget::new(1e6, 1e-5).unwrap();
        let fit =
            objective_perturbation_with_b(&data, budget, &DVector::zeros(3), 0).unwrap();
        assert!(fit.converged);

        // Newton iterations on the same objective (b = 0).
        let n = data.nrows() as f64;
        let delta_reg = 1.0 / (2.0 * budget.eps);
        let mut theta: DVector<f64> = DVector::zeros(3);
        for _ in 0..50 {
            let scores = data.x() * &theta;
            let mut grad = &theta * (delta_reg / n);
            let mut hess = DMatrix::identity(3, 3) * (delta_reg / n);
            for i in 0..data.nrows() {
                let t = data.y()[i] * scores[i];
                let sig = sigmoid(t);
                let row = data.x().row(i).transpose();
                grad += &row * (data.y()[i] * (sig - 1.0) / n);
                hess += &row * row.transpose() * (sig * (1.0 - sig) / n);
            }
            let step = hess.cholesky().unwrap().solve(&grad);
            theta -= &step;
            if step.norm() < 1e-14 {
                break;
            }
        }
        assert!((&fit.theta - &theta).norm() <= 1e-4, "gap {}", (&fit.theta - &theta).norm());
    }

    #[test]
    fn objective_perturbation_gradient_contract_and_determinism() {
        let data = two_cluster_data(60, 4, 0.9, 17);
        let budget = PrivacyBudget::new(2.0, 1e-5).unwrap();
        let a = objective_perturbation(&data, budget, RngStream::new(4, 2)).unwrap();
        let b = objective_perturbation(&data, budget, RngStream::new(4, 2)).unwrap();
        assert_eq!(a.theta, b.theta);
        assert!(a.converged);

        // Recompute the perturbed gradient at the returned point.
        let sigma = (4.0 * budget.eps + 8.0 * (2.0f64 / budget.delta).ln()).sqrt() / budget.eps;
        let noise = normal_vector(&mut RngStream::new(4, 2).substream(role::OBJECTIVE), 4) * sigma;
        let n = data.nrows() as f64;
        let delta_reg = 1.0 / (2.0 * budget.eps);
        let scores = data.x() * &a.theta;
        let mut weights = DVector::zeros(data.nrows());
        for i in 0..data.nrows() {
            let t = data.y()[i] * scores[i];
            weights[i] = data.y()[i] * (sigmoid(t) - 1.0);
        }
        let grad = (data.x().transpose() * weights + &noise + &a.theta * delta_reg) / n;
        assert!(grad.norm() <= 1e-6, "gradient norm {}", grad.norm());
    }

    #[test]
    fn margin_counting_and_accuracy_conventions() {
        let x = DMatrix::from_row_slice(3, 1, &[0.9, -0.2, 0.0]);
        let data =
            BinaryLabeledDataset::new(x, DVector::from_vec(vec![1.0, -1.0, 1.0]), 1.0).unwrap();
        let theta = DVector::from_vec(vec![10.0]);
        // Scores 9, -2, 0: two exceed margin 4 in magnitude... (9 and none);
        // |-2| < 4, |0| < 4.
        assert_eq!(count_margin_violations(&data, &theta, 4.0).unwrap(), 1);
        // Predictions +1, -1, +1 (zero counts as +1): all three correct.
        assert_relative_eq!(accuracy(&data, &theta).unwrap(), 1.0);
        let flipped = DVector::from_vec(vec![-10.0]);
        // Predictions -1, +1, +1: only the zero-score point is right.
        assert_relative_eq!(accuracy(&data, &flipped).unwrap(), 1.0 / 3.0);
    }
}
