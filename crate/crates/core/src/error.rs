use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("simulation error: {0}")]
    Simulation(String),

    #[error("query budget exhausted ({spent} of {budget} used)")]
    BudgetExhausted { spent: usize, budget: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("missing data: {0}")]
    Missing(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Builds a parse error from a TOML deserialization failure, resolving
    /// the byte span into a 1-based line number.
    pub(crate) fn from_toml(source: &str, origin: &str, err: toml::de::Error) -> Self {
        let location = match err.span() {
            Some(span) => {
                let line = source[..span.start.min(source.len())].matches('\n').count() + 1;
                format!("{origin}:{line}")
            }
            None => origin.to_string(),
        };
        Error::Parse {
            location,
            message: err.message().to_string(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
