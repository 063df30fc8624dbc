use thiserror::Error;

/// Errors produced by the numerical kernels, the simulator and the CLI.
///
/// Every variant maps onto one of the process exit codes used by the CLI
/// (see [`Error::exit_code`]).
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the function.
    #[error("domain error: {0}")]
    Domain(String),

    /// Configuration or input file could not be understood.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// CSV/TOML parse error with a 1-based line number.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Not enough data for the requested estimate.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// An iterative method ran out of iterations.
    #[error("no convergence after {iterations} iterations: {what}")]
    NoConvergence { what: String, iterations: usize },

    /// Rational fit could not reach its accuracy target.
    #[error("fit accuracy not met: max magnitude error {mag_err:.3e}, max phase error {phase_err_deg:.3}°")]
    FitAccuracy { mag_err: f64, phase_err_deg: f64 },

    /// Least-squares normal equations are singular.
    #[error("singular system: {0}")]
    Singular(String),

    /// A closed-loop simulation blew up.
    #[error("simulation diverged at t = {time_s:.6e} s")]
    Diverged { time_s: f64 },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Process exit code: 2 bad input, 3 insufficient data, 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Domain(_) | Error::InvalidInput(_) | Error::Parse { .. } | Error::Io(_) => 2,
            Error::InsufficientData(_) => 3,
            Error::NoConvergence { .. }
            | Error::FitAccuracy { .. }
            | Error::Singular(_)
            | Error::Diverged { .. } => 4,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

/// Reject NaN/inf and non-positive values.
pub(crate) fn require_positive(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must be positive and finite, got {value}")))
    }
}

pub(crate) fn require_non_negative(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must be non-negative and finite, got {value}")))
    }
}

pub(crate) fn require_finite(name: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must be finite, got {value}")))
    }
}
