//! Crate-wide error type.

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum FkError {
    /// Argument outside the documented domain (bad size, index, parameter range).
    Domain(String),
    /// Operation exists but is not supported for these parameters
    /// (e.g. cluster dynamics at non-integer q).
    Unsupported(String),
    /// A configured resource cap was hit (enumeration too large, CFTP did not
    /// coalesce within the sweep budget). Never a silently degraded result.
    ResourceLimit(String),
    /// A series or quadrature failed to reach the requested tolerance.
    Accuracy(String),
    /// A denominator underflowed or a ratio is undefined at these inputs.
    Degenerate(String),
    /// Exponent fit rejected its input (nonpositive mean, too few points).
    Fit(String),
    /// Command-line / config-file usage error.
    Usage(String),
}

impl fmt::Display for FkError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FkError::Domain(m) => write!(f, "domain error: {m}"),
            FkError::Unsupported(m) => write!(f, "unsupported parameter: {m}"),
            FkError::ResourceLimit(m) => write!(f, "resource limit: {m}"),
            FkError::Accuracy(m) => write!(f, "accuracy not reached: {m}"),
            FkError::Degenerate(m) => write!(f, "degenerate value: {m}"),
            FkError::Fit(m) => write!(f, "fit error: {m}"),
            FkError::Usage(m) => write!(f, "usage error: {m}"),
        }
    }
}

impl std::error::Error for FkError {}

pub type Result<T> = std::result::Result<T, FkError>;
