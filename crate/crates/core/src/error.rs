use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid value for `{field}`: {message}")]
    InvalidParameter { field: String, message: String },

    #[error("risk ratio is undefined: {0}")]
    UndefinedRatio(String),

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("parameters are not eligible for direction bias")]
    NotEligible,

    #[error("degenerate process: {0}")]
    Degenerate(String),

    #[error("cluster size {size} exceeds the limit of {limit}")]
    SizeLimit { size: usize, limit: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("target incidence {target} is unreachable: {reason}")]
    UnreachableTarget { target: f64, reason: String },

    #[error("no progress after {attempts} attempts: {reason}")]
    ProgressFailure { attempts: usize, reason: String },

    #[error("config line {line}: {message}")]
    Syntax { line: usize, message: String },

    #[error("unknown config key `{0}`")]
    UnknownKey(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
