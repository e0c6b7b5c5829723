use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Every failure the library can report.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("empty input")]
    EmptyInput,
    #[error("invalid weight {value} at unit {index}")]
    InvalidWeight { index: usize, value: f64 },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("matrix is not positive definite (pivot {pivot})")]
    NonPdMatrix { pivot: usize },
    #[error("replicate-average Hessian is not positive definite (pivot {pivot})")]
    NonPdHessian { pivot: usize },
    #[error("replicate {index} produced a non-finite score or Hessian")]
    ReplicateFailure { index: usize },
    #[error("stratum {stratum} has a single PSU")]
    SingletonStratum { stratum: u32 },
    #[error("sample covariance of draws is singular")]
    SingularCovariance,
    #[error("inclusion probability exceeds one for units {units:?}")]
    CertaintyUnit { units: Vec<usize> },
    #[error("log density is not finite at the initial point of chain {chain}")]
    InitFailure { chain: usize },
    #[error("diagnostics need at least two chains")]
    InsufficientChains,
    #[error("argument out of domain: {0}")]
    Domain(String),
    #[error("realization {index}: {source}")]
    Realization {
        index: usize,
        #[source]
        source: alloc::boxed::Box<Error>,
    },
    #[error("{failed} of {total} realizations failed, above the 5% cap")]
    TooManyFailures { failed: usize, total: usize },
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Coarse grouping used by front ends to pick exit codes.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) => ErrorKind::Config,
            Error::EmptyInput
            | Error::InvalidWeight { .. }
            | Error::Shape(_)
            | Error::InvalidData(_)
            | Error::SingletonStratum { .. }
            | Error::CertaintyUnit { .. } => ErrorKind::Data,
            Error::Realization { source, .. } => source.kind(),
            _ => ErrorKind::Numerical,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
}
