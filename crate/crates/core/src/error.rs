use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("corpus parse error at line {line}: {msg}")]
    CorpusParse { line: usize, msg: String },

    #[error("BIO constraint violated at token {token}: {msg}")]
    BioViolation { token: usize, msg: String },

    #[error("lexicon error: {0}")]
    Lexicon(String),

    #[error("invalid span [{start}, {end}] for sentence of length {len}")]
    InvalidSpan { start: usize, end: usize, len: usize },

    #[error("invalid annotation: {0}")]
    InvalidAnnotation(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("gradient check failed for '{param}': analytic {analytic}, numeric {numeric}, rel err {rel_err}")]
    GradientCheck {
        param: String,
        analytic: f64,
        numeric: f64,
        rel_err: f64,
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("decode error: {0}")]
    Decode(String),

    #[error("evaluation error: {0}")]
    Eval(String),

    #[error("alignment error: {0}")]
    Align(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
