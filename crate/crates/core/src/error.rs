use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("construction error: {0}")]
    Construction(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("dimension mismatch: {what} (expected {expected}, found {found})")]
    DimensionMismatch { what: String, expected: usize, found: usize },
    #[error("enumeration too large: {0} variables (limit {1})")]
    TooLarge(usize, usize),
    #[error("right-hand side {0} is infeasible")]
    InfeasibleRhs(usize),
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },
    #[error("validation error: {0}")]
    Validation(String),
    #[error("scenario {0} subproblem is infeasible")]
    SubproblemInfeasible(usize),
    #[error("scenario {0} subproblem is unbounded")]
    SubproblemUnbounded(usize),
    #[error("first-stage master is infeasible at this right-hand side")]
    MasterInfeasible,
    #[error("consolidated master infeasible at training point {0}")]
    CmInfeasible(usize),
    #[error("training problem is infeasible")]
    TrainingInfeasible,
    #[error("policy has no cells")]
    EmptyPolicy,
    #[error("policy bundle is empty")]
    EmptyBundle,
    #[error("configuration error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InfeasibleRhs(_)
            | Error::MasterInfeasible
            | Error::CmInfeasible(_)
            | Error::TrainingInfeasible
            | Error::SubproblemInfeasible(_) => 2,
            Error::Numerical(_) | Error::SubproblemUnbounded(_) => 1,
            Error::Parse { .. }
            | Error::Validation(_)
            | Error::Config(_)
            | Error::Io(_)
            | Error::DimensionMismatch { .. }
            | Error::Construction(_)
            | Error::TooLarge(..)
            | Error::EmptyPolicy
            | Error::EmptyBundle => 64,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(what: &str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { what: what.to_string(), expected, found })
    }
}
