use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Anchor geometry does not carry enough information (coincident points,
    /// coplanar anchors, singular information matrix).
    #[error("degenerate geometry: {reason} (det = {det:e}, cond = {cond:e})")]
    DegenerateGeometry { reason: String, det: f64, cond: f64 },

    /// The caller asked for something the operation cannot do.
    #[error("usage error: {0}")]
    Usage(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error at {path}: {message}")]
    Io { path: String, message: String },
}

impl Error {
    pub(crate) fn degenerate(reason: impl Into<String>) -> Self {
        Error::DegenerateGeometry { reason: reason.into(), det: 0.0, cond: f64::INFINITY }
    }

    pub fn io(path: impl AsRef<std::path::Path>, err: impl std::fmt::Display) -> Self {
        Error::Io { path: path.as_ref().display().to_string(), message: err.to_string() }
    }
}
