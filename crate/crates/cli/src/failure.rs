//! Process exit codes and the error type that carries them.

use std::fmt;

use lace::Error;

/// Exit status of a `lace` invocation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    Usage = 1,
    Data = 2,
    Degenerate = 3,
    ValidationFailed = 4,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }
}

/// A failed command: the diagnostic plus the exit status it maps to.
#[derive(Debug)]
pub struct Failure {
    pub status: ExitStatus,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn new(status: ExitStatus, error: impl Into<anyhow::Error>) -> Self {
        Self {
            status,
            error: error.into(),
        }
    }

    pub fn usage(msg: impl fmt::Display) -> Self {
        Self::new(ExitStatus::Usage, anyhow::anyhow!("{msg}"))
    }

    pub fn data(error: impl Into<anyhow::Error>) -> Self {
        Self::new(ExitStatus::Data, error)
    }

    pub fn context(self, ctx: impl fmt::Display + Send + Sync + 'static) -> Self {
        Self {
            status: self.status,
            error: self.error.context(ctx),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

/// Classify a library error by what the user has to fix.
pub fn status_of(error: &Error) -> ExitStatus {
    match error {
        Error::DegenerateGame(_)
        | Error::BoundaryPoint(_)
        | Error::InvalidConcentration(_)
        | Error::AllWeightsDegenerate(_) => ExitStatus::Degenerate,
        Error::InvalidConfig(_) | Error::LengthMismatch { .. } => ExitStatus::Usage,
        Error::MissingPeriod(_)
        | Error::Schema(_)
        | Error::Range(_)
        | Error::Io(_)
        | Error::Csv(_)
        | Error::Json(_) => ExitStatus::Data,
    }
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        Self::new(status_of(&error), error)
    }
}
