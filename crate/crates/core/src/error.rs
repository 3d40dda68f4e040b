use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("quadrature did not converge: {what} (estimated error {error:.3e}, tolerance {tolerance:.3e})")]
    Quadrature {
        what: String,
        error: f64,
        tolerance: f64,
    },

    #[error("step size underflow at t = {t:.6} ps (h = {h:.3e} ps); problem may be stiff")]
    StepUnderflow { t: f64, h: f64 },

    #[error("too many integrator steps ({steps}) before reaching t = {t_target:.6} ps")]
    TooManySteps { steps: usize, t_target: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("density matrix lost positivity at t = {t:.4} ps (min eigenvalue {min_eigenvalue:.3e})")]
    Positivity { t: f64, min_eigenvalue: f64 },

    #[error("trajectory has not decayed: {0}")]
    NotDecayed(String),

    #[error("beta factor undefined: no photons emitted")]
    UndefinedBeta,

    #[error("zero denominator in {0}")]
    ZeroDenominator(&'static str),

    #[error("missing density-matrix snapshot at t = {0:.6} ps")]
    MissingSnapshot(f64),

    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    /// True for errors that originate in numerics rather than user input.
    pub fn is_numerical(&self) -> bool {
        !matches!(self, Error::Config { .. } | Error::Io(_))
    }
}
