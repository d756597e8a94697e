//! Differentially private matrix sketching via Gaussian mixing.
//!
//! The mechanism releases S X + sigma Z for a gaussian sketch S, so each
//! released row is N(0, X^T X + sigma^2 I). [`rdp`] carries its Renyi
//! divergence curve and the exact per-row divergences used to audit it,
//! [`calibrate`] turns a target (eps, delta) into the smallest feasible
//! noise level gamma, and [`mechanism`] draws the release itself, with a
//! private smallest-eigenvalue estimate deciding how much noise the data
//! already provides. [`regression`] and [`logistic`] build private linear
//! and logistic fits on top of the release; [`harness`] adds synthetic
//! datasets, the trial protocol, and CSV/JSON reporting behind the CLI.

pub mod calibrate;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod logistic;
pub mod mechanism;
pub mod rdp;
pub mod regression;
pub mod rng;

pub use calibrate::{
    compare_bounds, eps_tilde, find_gamma, find_gamma_dp_curve, minimize_over_alpha,
    ours_closed_form_eps, rdp_curve_to_dp, sheffet_eps, BoundRow, CalibrationResult,
    PrivacyBudget,
};
pub use error::{Error, Result};
pub use logistic::{
    accuracy, count_margin_violations, fit_quadratic_surrogate, logistic_loss, logistic_mixing,
    objective_perturbation, surrogate_argmin_exact, surrogate_loss, BinaryLabeledDataset,
    SurrogateCoeffs,
};
pub use mechanism::{
    gauss_mix, modified_gauss_mix, private_min_eig, Branch, DataMatrix, LowGammaScale,
    SketchRelease,
};
pub use rdp::{
    exact_renyi_gaussmix, exact_renyi_gaussmix_insertion, gaussian_mechanism_eps, gaussmix_tcdp,
    phi, rdp_to_dp, renyi_gaussian_pair, tcdp_to_dp, RdpPoint, TcdpParams,
};
pub use regression::{
    adassp, empirical_loss, excess_risk_report, linear_mixing, ridge, sheffet, FitBranch,
    FitResult, LabeledDataset, Method, SheffetVariant,
};
pub use rng::RngStream;
