use thiserror::Error;

/// Errors raised by the modelling and optimisation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Input data violates a structural requirement. `path` is a JSON-pointer
    /// style location when the data came from a scenario file, otherwise a
    /// short description of the offending object.
    #[error("validation error at {path}: {message}")]
    Validation { path: String, message: String },

    /// The optimality pencil `sD - M` is singular (its determinant vanishes
    /// identically), so no unique singular arc exists.
    #[error("irregular pencil: det(sD - M) vanishes at all {samples} sample points (max |det| = {max_abs_det:e}, tolerance {tolerance:e}); the optimality pencil must be regular")]
    IrregularPencil {
        samples: usize,
        max_abs_det: f64,
        tolerance: f64,
    },

    /// A numerical procedure produced an unusable result.
    #[error("numerical failure in {stage}: {message}")]
    Numerical { stage: &'static str, message: String },

    /// The forcing has a harmonic that coincides with an eigenvalue of the
    /// dynamic part, so no bounded periodic solution exists.
    #[error("resonance at harmonic {harmonic}: ||(i k w0 I - J)^-1|| = {norm:e}")]
    Resonance { harmonic: i64, norm: f64 },

    /// A signal does not have the structure an operation needs.
    #[error("signal error: {0}")]
    Signal(String),

    #[error("solver did not converge after {iterations} iterations (KKT residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn validation(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn numerical(stage: &'static str, message: impl Into<String>) -> Self {
        Error::Numerical {
            stage,
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
