use thiserror::Error;

/// Every failure the library can report.
///
/// The CLI maps these onto process exit codes: configuration and validation
/// problems become 2, numerical trouble becomes 3.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("non-finite value in term `{term}`")]
    NumericOverflow { term: String },

    #[error("time step {dt:.3e} exceeds the admissible step {admissible:.3e}")]
    CflViolation { dt: f64, admissible: f64 },

    #[error("right-hand side has mean {mean:.3e}, above tolerance {tol:.3e}")]
    Solvability { mean: f64, tol: f64 },

    #[error("Krylov solve stalled after {iterations} iterations, residual {residual:.3e}")]
    Convergence { iterations: usize, residual: f64 },

    #[error("need at least {needed} snapshots around the evaluation time, found {found}")]
    Window { needed: usize, found: usize },

    #[error("operation not defined in dimension {0}")]
    UnsupportedDimension(usize),

    #[error("rate fit: {0}")]
    Fit(String),

    #[error("constraint drift: {0}")]
    Constraint(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("io error at {path}: {message}")]
    Io { path: String, message: String },
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, err: impl std::fmt::Display) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            message: err.to_string(),
        }
    }

    /// True for failures caused by the numerics rather than by the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NumericOverflow { .. }
                | Error::CflViolation { .. }
                | Error::Convergence { .. }
                | Error::Constraint(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
