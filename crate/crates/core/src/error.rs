use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("unsupported derivative order {0} (max 4)")]
    UnsupportedOrder(u32),
    #[error("invalid mixture: {0}")]
    InvalidMixture(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("{what} cap exceeded: {value} > {cap}")]
    CapExceeded { what: &'static str, value: usize, cap: usize },
    #[error("numeric failure in {stage}: {detail}")]
    Numeric { stage: String, detail: String },
    #[error("did not converge: {0}")]
    NoConvergence(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("in {stage}: {source}")]
    InStage { stage: String, source: Box<Error> },
}

impl Error {
    pub fn numeric(stage: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Numeric { stage: stage.into(), detail: detail.into() }
    }

    /// Prefix the stage of a numeric error, leaving other variants untouched.
    pub fn in_stage(self, outer: &str) -> Self {
        match self {
            Error::Numeric { stage, detail } => Error::Numeric { stage: format!("{outer}/{stage}"), detail },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
