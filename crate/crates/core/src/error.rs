use thiserror::Error;

/// Errors raised by the recovery pipeline and its building blocks.
///
/// Variants are grouped so callers (the CLI in particular) can map them onto
/// distinct exit statuses: model/argument problems, numerical rank or
/// certification failures, and truncation failures.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("{what} = {value} is outside the admissible range {range}")]
    Range {
        what: &'static str,
        value: String,
        range: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("matrix is rank deficient: tau_min / tau_max = {ratio:e} <= {tolerance:e}")]
    RankDeficient { ratio: f64, tolerance: f64 },

    #[error("truncation could not be certified: {0}")]
    Truncation(String),

    #[error("frame certification failed after {attempts} attempts")]
    Certification { attempts: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("search budget exceeded: {0}")]
    Budget(String),

    #[error("partition search failed: {0}")]
    SearchFailure(String),

    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn range(what: &'static str, value: impl ToString, range: impl ToString) -> Self {
        Error::Range {
            what,
            value: value.to_string(),
            range: range.to_string(),
        }
    }

    /// Numerical failures the CLI reports with the rank/certification status.
    pub fn is_rank_or_certification(&self) -> bool {
        matches!(
            self,
            Error::RankDeficient { .. } | Error::Certification { .. } | Error::SearchFailure(_)
        )
    }

    pub fn is_truncation(&self) -> bool {
        matches!(self, Error::Truncation(_))
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
