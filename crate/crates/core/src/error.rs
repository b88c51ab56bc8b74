use std::fmt;

/// Errors raised anywhere in the engine.
///
/// Every variant maps onto a short category string (see [`Error::category`])
/// that the command-line front end prints in front of the message.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("degenerate length: {0}")]
    DegenerateLength(String),
    #[error("empty support: {0}")]
    EmptySupport(String),
    #[error("rank error: {0}")]
    Rank(String),
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },
    #[error("config error: {0}")]
    Config(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("empty post: {0:?}")]
    EmptyPost(String),
    #[error("split error: {0}")]
    Split(String),
    #[error("coverage error: post {post_id:?} has no {what}")]
    Coverage { post_id: String, what: String },
    #[error("invalid target: {0}")]
    InvalidTarget(String),
    #[error("mapping error: {0}")]
    Mapping(String),
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("explain unavailable: {0}")]
    ExplainUnavailable(String),
    #[error("non-finite gradient in parameter {name} (first bad index {index})")]
    NonFiniteGradient { name: String, index: usize },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serialization(String),
}

impl Error {
    pub fn category(&self) -> &'static str {
        match self {
            Error::Dimension(_) | Error::Rank(_) => "dimension",
            Error::DegenerateLength(_) | Error::EmptySupport(_) => "degenerate",
            Error::Parse { .. } => "parse",
            Error::Format { .. } => "format",
            Error::Config(_) => "config",
            Error::Schema(_) | Error::Mapping(_) => "schema",
            Error::EmptyPost(_) | Error::Split(_) | Error::EmptyInput(_) => "data",
            Error::Coverage { .. } => "coverage",
            Error::InvalidTarget(_) => "target",
            Error::ExplainUnavailable(_) => "explain",
            Error::NonFiniteGradient { .. } => "numeric",
            Error::Io(_) => "io",
            Error::Serialization(_) => "serialization",
        }
    }

    pub(crate) fn dim(msg: impl fmt::Display) -> Self {
        Error::Dimension(msg.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
