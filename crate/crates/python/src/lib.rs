//! Python surface for the sketching toolkit. Matrices cross the boundary as
//! lists of row lists; results come back as small frozen classes. Row and
//! label bounds are taken from the data, matching the CSV loader.

use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use gaussmix::harness::RIDGE_NU;
use gaussmix::linalg::max_row_norm;
use gaussmix::mechanism::DataMatrix;
use gaussmix::regression::{FitResult, LabeledDataset, Method, SheffetVariant};
use gaussmix::rng::RngStream;
use gaussmix::{BinaryLabeledDataset, PrivacyBudget};

fn err(e: gaussmix::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_matrix(rows: Vec<Vec<f64>>) -> PyResult<DMatrix<f64>> {
    if rows.is_empty() || rows[0].is_empty() {
        return Err(PyValueError::new_err("x must be a nonempty list of nonempty rows"));
    }
    let d = rows[0].len();
    if let Some(bad) = rows.iter().position(|r| r.len() != d) {
        return Err(PyValueError::new_err(format!(
            "row {bad} has {} entries, expected {d}",
            rows[bad].len()
        )));
    }
    Ok(DMatrix::from_row_iterator(rows.len(), d, rows.into_iter().flatten()))
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn regression_dataset(x: Vec<Vec<f64>>, y: Vec<f64>) -> PyResult<LabeledDataset> {
    let x = to_matrix(x)?;
    let y = DVector::from_vec(y);
    let c_x = match max_row_norm(&x) {
        b if b > 0.0 => b,
        _ => 1.0,
    };
    let c_y = match y.iter().fold(0.0f64, |m, v| m.max(v.abs())) {
        b if b > 0.0 => b,
        _ => 1.0,
    };
    LabeledDataset::new(x, y, c_x, c_y).map_err(err)
}

fn binary_dataset(x: Vec<Vec<f64>>, y: Vec<f64>) -> PyResult<BinaryLabeledDataset> {
    let x = to_matrix(x)?;
    let c_x = match max_row_norm(&x) {
        b if b > 0.0 => b,
        _ => 1.0,
    };
    BinaryLabeledDataset::new(x, DVector::from_vec(y), c_x).map_err(err)
}

/// Calibrated sketch-noise level for a target budget.
#[pyclass(frozen, get_all, module = "gaussmix_py")]
struct Calibration {
    gamma: f64,
    eta: f64,
    alpha_star: f64,
    eps_achieved: f64,
    iterations: usize,
}

/// One gamma point in the old-vs-new epsilon comparison.
#[pyclass(frozen, get_all, module = "gaussmix_py")]
struct BoundComparison {
    gamma: f64,
    eps_ours_exact: f64,
    eps_ours_closed: f64,
    eps_sheffet: f64,
    ratio: f64,
}

/// Output of the mixing mechanism: the sketched matrix plus the noise branch
/// bookkeeping.
#[pyclass(frozen, get_all, module = "gaussmix_py")]
struct Release {
    values: Vec<Vec<f64>>,
    k: usize,
    noise_std_used: f64,
    branch: String,
    lambda_tilde: Option<f64>,
}

/// A fitted parameter vector with its provenance.
#[pyclass(frozen, get_all, module = "gaussmix_py")]
struct Fit {
    method: String,
    theta: Vec<f64>,
    gamma_used: Option<f64>,
    branch: Option<String>,
    empirical_loss: f64,
    seed: u64,
    converged: bool,
    pinv_fallback: bool,
}

impl From<FitResult> for Fit {
    fn from(fit: FitResult) -> Self {
        Fit {
            method: fit.method.as_str().to_string(),
            theta: fit.theta.iter().copied().collect(),
            gamma_used: fit.gamma_used,
            branch: fit.branch.map(|b| b.as_str().to_string()),
            empirical_loss: fit.empirical_loss,
            seed: fit.seed,
            converged: fit.converged,
            pinv_fallback: fit.pinv_fallback,
        }
    }
}

/// Smallest feasible gamma for (eps, delta) at sketch size k.
#[pyfunction]
#[pyo3(signature = (eps, delta=1e-5, k=256))]
fn calibrate(eps: f64, delta: f64, k: usize) -> PyResult<Calibration> {
    let cal = gaussmix::find_gamma(eps, delta, k).map_err(err)?;
    Ok(Calibration {
        gamma: cal.gamma,
        eta: cal.eta,
        alpha_star: cal.alpha_star,
        eps_achieved: cal.eps_achieved,
        iterations: cal.iterations,
    })
}

/// The Renyi curve of the mixing mechanism at order alpha.
#[pyfunction]
fn phi(alpha: f64, k: usize, gamma: f64) -> PyResult<f64> {
    gaussmix::phi(alpha, k, gamma).map_err(err)
}

/// Total epsilon certified by the accountant for noise level gamma.
#[pyfunction]
#[pyo3(signature = (eta, gamma, k, delta=1e-5))]
fn eps_tilde(eta: f64, gamma: f64, k: usize, delta: f64) -> PyResult<f64> {
    gaussmix::eps_tilde(eta, gamma, k, delta).map_err(err)
}

/// Closed-form epsilon from the curve analysis.
#[pyfunction]
#[pyo3(signature = (gamma, k, delta=1e-5))]
fn closed_form_eps(gamma: f64, k: usize, delta: f64) -> PyResult<f64> {
    gaussmix::ours_closed_form_eps(gamma, k, delta).map_err(err)
}

/// Epsilon from the legacy single-round analysis.
#[pyfunction]
#[pyo3(signature = (gamma, k, delta=1e-5))]
fn sheffet_eps(gamma: f64, k: usize, delta: f64) -> PyResult<f64> {
    gaussmix::sheffet_eps(gamma, k, delta).map_err(err)
}

/// Old and new epsilon at each gamma in the grid.
#[pyfunction]
#[pyo3(signature = (gammas, k, delta=1e-5))]
fn compare_bounds(gammas: Vec<f64>, k: usize, delta: f64) -> PyResult<Vec<BoundComparison>> {
    let rows = gaussmix::compare_bounds(&gammas, k, delta).map_err(err)?;
    Ok(rows
        .into_iter()
        .map(|r| BoundComparison {
            gamma: r.gamma,
            eps_ours_exact: r.eps_ours_exact,
            eps_ours_closed: r.eps_ours_closed,
            eps_sheffet: r.eps_sheffet,
            ratio: r.ratio,
        })
        .collect())
}

/// Exact Renyi divergence of the mechanism between x and x with one row
/// zeroed.
#[pyfunction]
fn exact_renyi(
    x: Vec<Vec<f64>>,
    removed_row: usize,
    sigma: f64,
    k: usize,
    alpha: f64,
) -> PyResult<f64> {
    let x = to_matrix(x)?;
    gaussmix::exact_renyi_gaussmix(&x, removed_row, sigma, k, alpha).map_err(err)
}

/// Raw mechanism: k sketched rows of x plus per-entry noise sigma.
#[pyfunction]
#[pyo3(signature = (x, k, sigma, seed=0))]
fn gauss_mix(x: Vec<Vec<f64>>, k: usize, sigma: f64, seed: u64) -> PyResult<Vec<Vec<f64>>> {
    let x = to_matrix(x)?;
    let bound = max_row_norm(&x).max(f64::MIN_POSITIVE);
    let data = DataMatrix::new(x, bound).map_err(err)?;
    let released = gaussmix::gauss_mix(&data, k, sigma, RngStream::new(seed, 0)).map_err(err)?;
    Ok(to_rows(&released))
}

/// Branching mechanism: flat noise at low gamma, eigenvalue-assisted above.
#[pyfunction]
#[pyo3(signature = (x, k, gamma, tau, eta, seed=0))]
fn modified_gauss_mix(
    x: Vec<Vec<f64>>,
    k: usize,
    gamma: f64,
    tau: f64,
    eta: f64,
    seed: u64,
) -> PyResult<Release> {
    let x = to_matrix(x)?;
    let bound = max_row_norm(&x).max(f64::MIN_POSITIVE);
    let data = DataMatrix::new(x, bound).map_err(err)?;
    let release =
        gaussmix::modified_gauss_mix(&data, k, gamma, tau, eta, RngStream::new(seed, 0))
            .map_err(err)?;
    Ok(Release {
        values: to_rows(&release.values),
        k: release.k,
        noise_std_used: release.noise_std_used,
        branch: match release.branch {
            gaussmix::Branch::LowGamma => "low_gamma".to_string(),
            gaussmix::Branch::EigAssisted => "eig_assisted".to_string(),
        },
        lambda_tilde: release.lambda_tilde,
    })
}

/// Linear regression under the named method.
#[pyfunction]
#[pyo3(signature = (x, y, method="linear_mixing", eps=1.0, delta=1e-5, k=None, seed=0))]
fn linear_fit(
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    method: &str,
    eps: f64,
    delta: f64,
    k: Option<usize>,
    seed: u64,
) -> PyResult<Fit> {
    let data = regression_dataset(x, y)?;
    let k = k.unwrap_or(4 * data.ncols());
    let method = Method::parse(method).map_err(err)?;
    let stream = RngStream::new(seed, 0);
    let fit = match method {
        Method::Ridge => gaussmix::ridge(&data, RIDGE_NU),
        Method::LinearMixing => {
            gaussmix::linear_mixing(&data, PrivacyBudget::new(eps, delta).map_err(err)?, k, stream)
        }
        Method::AdaSsp => gaussmix::adassp(
            &data,
            PrivacyBudget::new(eps, delta).map_err(err)?,
            0.05,
            stream,
        ),
        Method::Sheffet => gaussmix::sheffet(
            &data,
            PrivacyBudget::new(eps, delta).map_err(err)?,
            k,
            SheffetVariant::Legacy,
            stream,
        ),
        Method::SheffetNewAnalysis => gaussmix::sheffet(
            &data,
            PrivacyBudget::new(eps, delta).map_err(err)?,
            k,
            SheffetVariant::NewAnalysis,
            stream,
        ),
        other => {
            return Err(PyValueError::new_err(format!(
                "{} is a classification method; use logistic_fit",
                other.as_str()
            )))
        }
    }
    .map_err(err)?;
    Ok(fit.into())
}

/// Binary classification under the named method. Labels must be +/-1.
#[pyfunction]
#[pyo3(signature = (x, y, method="logistic_mixing", eps=1.0, delta=1e-5, k=None, q=4.0, seed=0))]
fn logistic_fit(
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    method: &str,
    eps: f64,
    delta: f64,
    k: Option<usize>,
    q: f64,
    seed: u64,
) -> PyResult<Fit> {
    let data = binary_dataset(x, y)?;
    let k = k.unwrap_or(4 * data.ncols());
    let method = Method::parse(method).map_err(err)?;
    let budget = PrivacyBudget::new(eps, delta).map_err(err)?;
    let stream = RngStream::new(seed, 0);
    let fit = match method {
        Method::LogisticMixing => gaussmix::logistic_mixing(&data, budget, k, q, stream),
        Method::ObjectivePerturbation => gaussmix::objective_perturbation(&data, budget, stream),
        other => {
            return Err(PyValueError::new_err(format!(
                "{} is a regression method; use linear_fit",
                other.as_str()
            )))
        }
    }
    .map_err(err)?;
    Ok(fit.into())
}

/// Mean squared residual of theta on (x, y).
#[pyfunction]
fn mse(x: Vec<Vec<f64>>, y: Vec<f64>, theta: Vec<f64>) -> PyResult<f64> {
    let data = regression_dataset(x, y)?;
    gaussmix::empirical_loss(&data, &DVector::from_vec(theta)).map_err(err)
}

/// Sign-agreement accuracy of theta on (x, y) with +/-1 labels.
#[pyfunction]
fn accuracy(x: Vec<Vec<f64>>, y: Vec<f64>, theta: Vec<f64>) -> PyResult<f64> {
    let data = binary_dataset(x, y)?;
    gaussmix::accuracy(&data, &DVector::from_vec(theta)).map_err(err)
}

/// Low-rank regression benchmark data: rows in a random q-dimensional
/// subspace, linear responses with uniform noise.
#[pyfunction]
#[pyo3(signature = (n, d, q=4, noise_std=0.1, seed=0))]
fn synth_gaussian(
    n: usize,
    d: usize,
    q: usize,
    noise_std: f64,
    seed: u64,
) -> PyResult<(Vec<Vec<f64>>, Vec<f64>)> {
    let data = gaussmix::harness::synth_gaussian_subspace(n, d, q, noise_std, RngStream::new(seed, 0))
        .map_err(err)?;
    Ok((to_rows(data.x()), data.y().iter().copied().collect()))
}

/// Two spherical classes at the given separation, labels +/-1.
#[pyfunction]
#[pyo3(signature = (n, d, separation=1.0, seed=0))]
fn synth_two_gaussian(
    n: usize,
    d: usize,
    separation: f64,
    seed: u64,
) -> PyResult<(Vec<Vec<f64>>, Vec<f64>)> {
    let data = gaussmix::harness::synth_two_gaussian(n, d, separation, RngStream::new(seed, 0))
        .map_err(err)?;
    Ok((to_rows(data.x()), data.y().iter().copied().collect()))
}

#[pymodule]
fn gaussmix_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Calibration>()?;
    m.add_class::<BoundComparison>()?;
    m.add_class::<Release>()?;
    m.add_class::<Fit>()?;
    m.add_function(wrap_pyfunction!(calibrate, m)?)?;
    m.add_function(wrap_pyfunction!(phi, m)?)?;
    m.add_function(wrap_pyfunction!(eps_tilde, m)?)?;
    m.add_function(wrap_pyfunction!(closed_form_eps, m)?)?;
    m.add_function(wrap_pyfunction!(sheffet_eps, m)?)?;
    m.add_function(wrap_pyfunction!(compare_bounds, m)?)?;
    m.add_function(wrap_pyfunction!(exact_renyi, m)?)?;
    m.add_function(wrap_pyfunction!(gauss_mix, m)?)?;
    m.add_function(wrap_pyfunction!(modified_gauss_mix, m)?)?;
    m.add_function(wrap_pyfunction!(linear_fit, m)?)?;
    m.add_function(wrap_pyfunction!(logistic_fit, m)?)?;
    m.add_function(wrap_pyfunction!(mse, m)?)?;
    m.add_function(wrap_pyfunction!(accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(synth_gaussian, m)?)?;
    m.add_function(wrap_pyfunction!(synth_two_gaussian, m)?)?;
    Ok(())
}
