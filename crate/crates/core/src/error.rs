use thiserror::Error;

/// Errors surfaced by the navigation stack.
///
/// Navigation outcomes (timeouts, collisions, solver failures) are data and
/// never appear here; these are tool and contract errors only.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("horizon step {step} out of range for horizon {horizon}")]
    StepOutOfRange { step: usize, horizon: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid config field `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("malformed trace: {0}")]
    Trace(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
