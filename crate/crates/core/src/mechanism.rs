//! The randomized releases.
//!
//! [`gauss_mix`] is the basic sketch-plus-noise release M(X) = SX + sigma xi.
//! [`modified_gauss_mix`] is the two-branch variant that privately estimates
//! the smallest gram eigenvalue and buys back noise from it: the release
//! targets total normalized scale gamma, so noise_std^2 + lambda_tilde covers
//! gamma * C_X^2 whenever the private estimate did not overshoot the true
//! eigenvalue. Everything downstream of a release is post-processing.

use nalgebra::DMatrix;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::linalg;
pub use crate::linalg::min_eigenvalue;
use crate::rng::{normal_matrix, role, RngStream};

/// A data matrix with a certified row-norm bound. Construction validates
/// every row against the bound (1e-9 relative slack).
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: DMatrix<f64>,
    row_bound: f64,
}

impl DataMatrix {
    pub fn new(values: DMatrix<f64>, row_bound: f64) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::Shape(format!(
                "data matrix must be nonempty, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        if !(row_bound > 0.0) || !row_bound.is_finite() {
            return Err(Error::Domain(format!("row bound must be positive, got {row_bound}")));
        }
        let worst = linalg::max_row_norm(&values);
        if worst > row_bound * (1.0 + 1e-9) {
            return Err(Error::Validity(format!(
                "row norm {worst:.12e} exceeds declared bound {row_bound:.12e}"
            )));
        }
        Ok(Self { values, row_bound })
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn row_bound(&self) -> f64 {
        self.row_bound
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }
}

/// Which arm of the two-branch release produced the output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// gamma <= tau: flat noise, no eigenvalue estimate.
    LowGamma,
    /// gamma > tau: noise reduced by the private eigenvalue estimate.
    EigAssisted,
}

/// Noise convention for the LowGamma arm. The listed form multiplies the
/// noise by gamma itself; the normalization behind the privacy claim puts the
/// per-entry standard deviation at sqrt(gamma) * C_X. The privacy statement
/// is computed from the normalized form either way, so the listed form is
/// strictly noisier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LowGammaScale {
    #[default]
    RootGamma,
    ListingGamma,
}

/// A released sketch with its provenance. All fields are public: the release
/// is the privacy boundary, and everything derived from it afterwards must be
/// computable from this struct alone.
#[derive(Debug, Clone, PartialEq)]
pub struct SketchRelease {
    /// k x d released matrix.
    pub values: DMatrix<f64>,
    pub k: usize,
    /// Per-entry standard deviation of the additive noise, in data units.
    pub noise_std_used: f64,
    pub branch: Branch,
    /// Private eigenvalue estimate; present exactly on the EigAssisted arm.
    pub lambda_tilde: Option<f64>,
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::Domain("sketch dimension k must be >= 1".into()));
    }
    Ok(())
}

/// Sketch-and-noise with an explicit sketch matrix: sketch * values + sigma *
/// noise, noise drawn from `noise_rng`. This is the seam the plumbing tests
/// use with an identity sketch; [`gauss_mix`] supplies the Gaussian sketch.
pub fn gauss_mix_with_sketch(
    values: &DMatrix<f64>,
    sketch: &DMatrix<f64>,
    sigma: f64,
    noise_rng: &mut ChaCha12Rng,
) -> Result<DMatrix<f64>> {
    if sketch.ncols() != values.nrows() {
        return Err(Error::Shape(format!(
            "sketch has {} columns but data has {} rows",
            sketch.ncols(),
            values.nrows()
        )));
    }
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::Domain(format!("sigma must be nonnegative, got {sigma}")));
    }
    let mut out = sketch * values;
    if sigma > 0.0 {
        let noise = normal_matrix(noise_rng, out.nrows(), out.ncols());
        out += noise * sigma;
    }
    Ok(out)
}

/// The basic release M(X) = SX + sigma * xi with S ~ N(0, I_{k x n}) and
/// xi ~ N(0, I_{k x d}). Each output row is distributed
/// N(0, X^T X + sigma^2 I_d).
pub fn gauss_mix(x: &DataMatrix, k: usize, sigma: f64, rng: RngStream) -> Result<DMatrix<f64>> {
    check_k(k)?;
    let sketch = normal_matrix(&mut rng.substream(role::SKETCH), k, x.nrows());
    gauss_mix_with_sketch(x.values(), &sketch, sigma, &mut rng.substream(role::NOISE))
}

/// Private lower estimate of the smallest gram eigenvalue:
/// max{lambda_min(X^T X) - eta * C_X^2 * (tau - z), 0} with z standard
/// normal. Underestimates the truth except on the z >= tau tail.
pub fn private_min_eig(x: &DataMatrix, eta: f64, tau: f64, rng: RngStream) -> Result<f64> {
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(Error::Domain(format!("eta must be positive, got {eta}")));
    }
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::Domain(format!("tau must be positive, got {tau}")));
    }
    let gram = x.values().transpose() * x.values();
    let lam_min = linalg::min_eigenvalue(&gram)?;
    let z: f64 = rand_distr::Distribution::sample(
        &rand_distr::StandardNormal,
        &mut rng.substream(role::EIG),
    );
    let c2 = x.row_bound() * x.row_bound();
    Ok((lam_min - eta * c2 * (tau - z)).max(0.0))
}

/// Two-branch release targeting normalized scale gamma, with the default
/// sqrt(gamma) LowGamma noise convention.
pub fn modified_gauss_mix(
    x: &DataMatrix,
    k: usize,
    gamma: f64,
    tau: f64,
    eta: f64,
    rng: RngStream,
) -> Result<SketchRelease> {
    modified_gauss_mix_scaled(x, k, gamma, tau, eta, LowGammaScale::RootGamma, rng)
}

/// [`modified_gauss_mix`] with an explicit LowGamma noise convention.
pub fn modified_gauss_mix_scaled(
    x: &DataMatrix,
    k: usize,
    gamma: f64,
    tau: f64,
    eta: f64,
    low_gamma_scale: LowGammaScale,
    rng: RngStream,
) -> Result<SketchRelease> {
    check_k(k)?;
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::Domain(format!("gamma must be positive, got {gamma}")));
    }
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::Domain(format!("tau must be positive, got {tau}")));
    }
    let c = x.row_bound();
    let (noise_std, branch, lambda_tilde) = if gamma <= tau {
        let std = match low_gamma_scale {
            LowGammaScale::RootGamma => gamma.sqrt() * c,
            LowGammaScale::ListingGamma => gamma * c,
        };
        (std, Branch::LowGamma, None)
    } else {
        let lam = private_min_eig(x, eta, tau, rng)?;
        ((gamma * c * c - lam).max(0.0).sqrt(), Branch::EigAssisted, Some(lam))
    };
    let sketch = normal_matrix(&mut rng.substream(role::SKETCH), k, x.nrows());
    let values =
        gauss_mix_with_sketch(x.values(), &sketch, noise_std, &mut rng.substream(role::NOISE))?;
    Ok(SketchRelease { values, k, noise_std_used: noise_std, branch, lambda_tilde })
}

/// Inner-product post-processing of two releases sharing a sketch:
/// M1^T M2. Deterministic; consumes no privacy.
pub fn inner_product_post(m1: &DMatrix<f64>, m2: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m1.nrows() != m2.nrows() {
        return Err(Error::Shape(format!(
            "row counts differ: {} vs {}",
            m1.nrows(),
            m2.nrows()
        )));
    }
    Ok(m1.transpose() * m2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DVector;

    fn unit_rows_spread(n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, 2, |i, j| {
            let angle = std::f64::consts::PI * i as f64 / n as f64;
            if j == 0 {
                angle.cos()
            } else {
                angle.sin()
            }
        })
    }

    #[test]
    fn data_matrix_validates_rows() {
        let m = DMatrix::from_row_slice(2, 2, &[3.0, 4.0, 0.0, 1.0]);
        assert!(DataMatrix::new(m.clone(), 5.0).is_ok());
        assert!(DataMatrix::new(m.clone(), 5.0 * (1.0 - 1e-6)).is_err());
        // Inside the relative slack.
        assert!(DataMatrix::new(m, 5.0 / (1.0 + 5e-10)).is_ok());
        assert!(DataMatrix::new(DMatrix::zeros(2, 2), 0.0).is_err());
    }

    #[test]
    fn zero_data_zero_sigma_gives_zero() {
        let x = DataMatrix::new(DMatrix::zeros(4, 3), 1.0).unwrap();
        let out = gauss_mix(&x, 5, 0.0, RngStream::new(7, 0)).unwrap();
        assert_eq!(out, DMatrix::zeros(5, 3));
    }

    #[test]
    fn identity_sketch_recovers_data() {
        let values = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, -0.5, 0.25, 0.0, 1.0]);
        let eye = DMatrix::identity(3, 3);
        let mut noise_rng = RngStream::new(1, 0).substream(role::NOISE);
        let out = gauss_mix_with_sketch(&values, &eye, 0.0, &mut noise_rng).unwrap();
        assert_eq!(out, values);
    }

    #[test]
    fn releases_are_deterministic_per_stream() {
        let x = DataMatrix::new(unit_rows_spread(6), 1.0).unwrap();
        let a = gauss_mix(&x, 4, 1.5, RngStream::new(11, 3)).unwrap();
        let b = gauss_mix(&x, 4, 1.5, RngStream::new(11, 3)).unwrap();
        assert_eq!(a, b);
        let c = gauss_mix(&x, 4, 1.5, RngStream::new(11, 4)).unwrap();
        assert_ne!(a, c);
        let r1 = modified_gauss_mix(&x, 4, 3.0, 1.5, 0.5, RngStream::new(11, 3)).unwrap();
        let r2 = modified_gauss_mix(&x, 4, 3.0, 1.5, 0.5, RngStream::new(11, 3)).unwrap();
        assert_eq!(r1, r2);
    }

    #[test]
    fn sample_row_covariance_concentrates() {
        // Output rows are i.i.d. N(0, X^T X + sigma^2 I), so one tall release
        // is a covariance sample.
        let x = DataMatrix::new(unit_rows_spread(4), 1.0).unwrap();
        let sigma = 1.5;
        let k = 4000;
        let out = gauss_mix(&x, k, sigma, RngStream::new(3, 0)).unwrap();
        let sample_cov = out.transpose() * &out / k as f64;
        let d = x.ncols();
        let target =
            x.values().transpose() * x.values() + DMatrix::identity(d, d) * sigma * sigma;
        let gap = (&sample_cov - &target).norm() / target.norm();
        assert!(gap < 0.1, "covariance gap {gap}");
    }

    #[test]
    fn branch_selection_and_noise_scales() {
        let x = DataMatrix::new(DMatrix::zeros(4, 2), 2.0).unwrap();
        let stream = RngStream::new(5, 0);
        // gamma <= tau: flat-noise arm, both conventions.
        let low = modified_gauss_mix(&x, 3, 1.0, 2.86, 0.5, stream).unwrap();
        assert_eq!(low.branch, Branch::LowGamma);
        assert!(low.lambda_tilde.is_none());
        assert_relative_eq!(low.noise_std_used, 2.0, max_relative = 1e-15);
        let listed = modified_gauss_mix_scaled(
            &x,
            3,
            1.0,
            2.86,
            0.5,
            LowGammaScale::ListingGamma,
            stream,
        )
        .unwrap();
        assert_relative_eq!(listed.noise_std_used, 2.0, max_relative = 1e-15);
        let listed_wider = modified_gauss_mix_scaled(
            &x,
            3,
            2.0,
            2.86,
            0.5,
            LowGammaScale::ListingGamma,
            stream,
        )
        .unwrap();
        assert_relative_eq!(listed_wider.noise_std_used, 4.0, max_relative = 1e-15);
        // gamma > tau: eigenvalue-assisted arm.
        let eig = modified_gauss_mix(&x, 3, 3.0, 2.86, 0.5, stream).unwrap();
        assert_eq!(eig.branch, Branch::EigAssisted);
        assert!(eig.lambda_tilde.is_some());
    }

    #[test]
    fn strong_eigenvalue_cancels_noise_entirely() {
        // 12 well-spread unit rows: gram = 6 I, so lambda_tilde ~ 6 swamps
        // gamma * C^2 = 2 and the release is the bare sketch.
        let x = DataMatrix::new(unit_rows_spread(12), 1.0).unwrap();
        let stream = RngStream::new(9, 1);
        let r = modified_gauss_mix(&x, 5, 2.0, 1.49, 1e-9, stream).unwrap();
        assert_eq!(r.branch, Branch::EigAssisted);
        assert_eq!(r.noise_std_used, 0.0);
        let sketch = normal_matrix(&mut stream.substream(role::SKETCH), 5, 12);
        assert_eq!(r.values, sketch * x.values());
        // Covered scale invariant: noise^2 + lambda_tilde >= gamma * C^2.
        let covered = r.noise_std_used.powi(2) + r.lambda_tilde.unwrap();
        assert!(covered >= 2.0);
    }

    #[test]
    fn noise_floor_matches_low_gamma_scale_when_eigenvalue_vanishes() {
        let x = DataMatrix::new(DMatrix::zeros(6, 2), 1.0).unwrap();
        let r = modified_gauss_mix(&x, 3, 2.0, 1.49, 1e-12, RngStream::new(2, 0)).unwrap();
        assert_eq!(r.branch, Branch::EigAssisted);
        assert_relative_eq!(r.noise_std_used, 2.0f64.sqrt(), epsilon = 1e-6);
    }

    #[test]
    fn private_min_eig_limits() {
        let x = DataMatrix::new(unit_rows_spread(12), 1.0).unwrap();
        // Noiseless limit recovers the true eigenvalue.
        let v = private_min_eig(&x, 1e-14, 2.0, RngStream::new(4, 0)).unwrap();
        assert_relative_eq!(v, 6.0, max_relative = 1e-9);
        // Zero matrix: clamped at zero unless z exceeds tau.
        let zero = DataMatrix::new(DMatrix::zeros(3, 2), 1.0).unwrap();
        let v = private_min_eig(&zero, 1.0, 5.0, RngStream::new(4, 0)).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn inner_product_post_shapes() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let b = DMatrix::zeros(2, 3);
        assert_eq!(inner_product_post(&a, &b).unwrap(), DMatrix::zeros(2, 3));
        let gram = inner_product_post(&a, &a).unwrap();
        assert_eq!(gram, DMatrix::identity(2, 2));
        assert!(inner_product_post(&a, &DMatrix::zeros(3, 1)).is_err());
    }

    #[test]
    fn shared_sketch_inner_product_concentrates() {
        // (1/k)(SA + s xi1)^T (SB + s xi2) -> A^T B for A != B blocks when S
        // is shared and the noises are independent.
        let a_raw = DMatrix::from_row_slice(3, 2, &[0.6, 0.0, 0.0, 0.7, 0.3, 0.3]);
        let b_raw = DVector::from_vec(vec![0.5, -0.2, 0.4]);
        let k = 60_000;
        let sigma = 0.8;
        let stream = RngStream::new(21, 0);
        let sketch = normal_matrix(&mut stream.substream(role::SKETCH), k, 3);
        let ma =
            gauss_mix_with_sketch(&a_raw, &sketch, sigma, &mut stream.substream(role::NOISE))
                .unwrap();
        let mb = gauss_mix_with_sketch(
            &DMatrix::from_column_slice(3, 1, b_raw.as_slice()),
            &sketch,
            sigma,
            &mut stream.substream(role::NOISE2),
        )
        .unwrap();
        let prod = inner_product_post(&ma, &mb).unwrap() / k as f64;
        let target = a_raw.transpose() * b_raw;
        let gap = (&prod - &target).norm() / target.norm().max(1.0);
        assert!(gap < 0.02, "inner product gap {gap}");
    }
}
