use thiserror::Error;

/// Errors raised by the engine.
///
/// The variants follow the failure classes the CLI maps onto exit codes:
/// bad inputs and bad configuration are usage errors, numeric and resource
/// failures are runtime errors.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum GimpError {
    #[error("input error: {0}")]
    Input(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("computation error: {0}")]
    Computation(String),
    #[error("resource error: {0}")]
    Resource(String),
}

impl GimpError {
    pub fn input(msg: impl Into<String>) -> Self {
        Self::Input(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Self::Config(msg.into())
    }

    pub fn computation(msg: impl Into<String>) -> Self {
        Self::Computation(msg.into())
    }

    pub fn resource(msg: impl Into<String>) -> Self {
        Self::Resource(msg.into())
    }

    /// True for errors caused by the caller (bad input or configuration).
    pub fn is_usage(&self) -> bool {
        matches!(self, Self::Input(_) | Self::Config(_))
    }
}

pub type Result<T> = std::result::Result<T, GimpError>;
