use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A value falls outside the representable range (e.g. TA code above cap).
    #[error("range error: {0}")]
    Range(String),

    /// An input lies outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Inconsistent or invalid parameters.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// A DCI field does not fit its bit width.
    #[error("encoding error: {0}")]
    Encoding(String),

    /// Operation not permitted in the current RRC state.
    #[error("unsupported RRC state: {0}")]
    UnsupportedState(String),

    /// A signaling session could not be run.
    #[error("session error: {0}")]
    Session(String),

    /// Infeasible experiment or system configuration.
    #[error("config error: {0}")]
    Config(String),

    /// Malformed capture, trace or result file.
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
