use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter violates a model precondition.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// The Gaussian envelope is still above the truncation threshold at a grid edge.
    #[error("grid too narrow: edge amplitude ratio {ratio:.3e} exceeds {limit:.1e}")]
    GridTooNarrow { ratio: f64, limit: f64 },

    #[error("spectral window does not overlap the amplitude")]
    ZeroOverlap,

    #[error("frequency {frequency:.6e} rad/s lies outside the calibrated range")]
    OutOfRange { frequency: f64 },

    #[error("herald outcome has zero evidence under the prior")]
    ZeroEvidence,

    #[error("drive amplitude {v0} V exceeds the limit {v0_max} V")]
    Overdrive { v0: f64, v0_max: f64 },

    #[error("filter removes the conditional wavepacket (norm {norm:.3e})")]
    VacuousEvent { norm: f64 },

    #[error("small-squeezing expansion invalid: mu * n_modes = {value} (must be < {limit})")]
    ExpansionDomain { value: f64, limit: f64 },

    #[error("division by zero while estimating {0}")]
    DivisionByZero(&'static str),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("quadrature did not converge: refinement changed the result by {change:.3e} (tolerance {tolerance:.1e})")]
    NotConverged { change: f64, tolerance: f64 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
