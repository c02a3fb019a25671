use thiserror::Error;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },

    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },

    #[error("function `{name}` expects {expected} argument(s), got {found}")]
    Arity {
        name: String,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value {value} at sample point {point:?}")]
    NonFinite { value: f64, point: Vec<f64> },

    #[error("ellipticity violated: smallest eigenvalue {min_eig:e} at y = {point:?}")]
    Ellipticity { min_eig: f64, point: Vec<f64> },

    #[error("boundedness violated: observed {observed} exceeds kappa = {kappa}")]
    Boundedness { observed: f64, kappa: f64 },

    #[error("solver did not converge in {iterations} iterations (relative residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("indefinite or singular system detected: {0}")]
    Indefinite(String),

    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("quadrature under-resolved: epsilon = {epsilon} is below 2h = {two_h}")]
    Underresolved { epsilon: f64, two_h: f64 },

    #[error("missing data: {0}")]
    Missing(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
