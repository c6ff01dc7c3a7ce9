use coad::CoadError;
use thiserror::Error;

/// Exit code 1 for anything the caller can fix by changing the invocation or
/// the input files, 2 when the inputs are fine but a constraint or a
/// verification check fails.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Failure(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Input(_) => 1,
            CliError::Failure(_) => 2,
        }
    }
}

impl From<CoadError> for CliError {
    fn from(e: CoadError) -> Self {
        match e {
            CoadError::ConstraintViolation(_)
            | CoadError::NoFeasiblePair
            | CoadError::ScenarioInvalid(_)
            | CoadError::NoFlip(_)
            | CoadError::DegenerateRates(_)
            | CoadError::Numerical(_) => CliError::Failure(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
