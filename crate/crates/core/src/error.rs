//! Crate-wide error type.
//!
//! Fits that merely hit an iteration cap do not error; they return a result
//! flagged as unconverged. Errors are reserved for inputs the operations
//! cannot meaningfully process.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside the mathematical domain of the operation.
    #[error("domain: {0}")]
    Domain(String),

    /// Inputs are individually fine but jointly invalid (for example a
    /// divergence order past the finite range, or a non-PD combination).
    #[error("validity: {0}")]
    Validity(String),

    /// Matrix or vector dimensions do not line up.
    #[error("shape: {0}")]
    Shape(String),

    /// A matrix that must be symmetric is not, beyond tolerance.
    #[error("symmetry: {0}")]
    Symmetry(String),

    /// A linear system has no usable solution.
    #[error("singular system: {0}")]
    Singular(String),

    /// Data degenerate for the requested operation (empty split, all-zero
    /// rows where a scale is needed, ...).
    #[error("degenerate data: {0}")]
    Degenerate(String),

    /// Malformed numeric text. `row` and `col` are 1-based positions in the
    /// source file; the header line is row 1.
    #[error("parse error at row {row}, column {col}: {msg}")]
    Parse { row: usize, col: usize, msg: String },

    /// Malformed experiment configuration.
    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
