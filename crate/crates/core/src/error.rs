use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("argument out of domain: {0}")]
    Domain(String),
    #[error("tilted distribution undefined: inputs are mutually singular")]
    TiltUndefined,
    #[error("marginalize-tilt undefined for these priors (tilting step at level {level})")]
    MtUndefined { level: usize },
    #[error("degenerate prior: {0}")]
    DegeneratePrior(String),
    #[error("oracle restricted to desk scale: {0}")]
    DeskScale(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("missing input: {0}")]
    MissingInput(&'static str),
    #[error("malformed {field}: {detail}")]
    Format { field: &'static str, detail: String },
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
