use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("non-finite entry at index {0}")]
    NonFinite(usize),

    #[error("eigensolver did not converge after {sweeps} sweeps (relative residual {residual:.3e})")]
    Convergence { sweeps: usize, residual: f64 },

    #[error("matrix is not positive semidefinite: eigenvalue {eigenvalue:.6e} below clamp window")]
    NotPsd { eigenvalue: f64 },

    #[error("degenerate alignment: smallest singular value {0:.3e} of the cross-Gram matrix")]
    DegenerateAlignment(f64),

    #[error("degenerate spectrum: {0}")]
    DegenerateSpectrum(String),

    #[error("degenerate signal: {0}")]
    DegenerateSignal(String),

    #[error("degenerate covariance: {0}")]
    DegenerateCovariance(String),

    #[error("experiment failed: {0}")]
    Experiment(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}
