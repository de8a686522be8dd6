use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matrix is not Hermitian (relative residual {residual:.3e})")]
    NonHermitian { residual: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("level label {label} out of range 1..={dimension}")]
    LabelOutOfRange { label: usize, dimension: usize },

    #[error("finite-difference step {step} mT is below the minimum of {min} mT")]
    StepTooSmall { step: f64, min: f64 },

    #[error("no stationary point found inside the search bounds")]
    NoStationaryPoint,

    #[error("susceptibility is singular: optical dephasing, spin dephasing and coupling are all zero")]
    SingularParameters,

    #[error("absorption without coupling vanishes at the evaluation point")]
    ZeroAbsorption,
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
