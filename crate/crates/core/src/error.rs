use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("singular point: {0}")]
    SingularPoint(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("degenerate modulus: {0}")]
    DegenerateModulus(String),
    #[error("fit failed: {0}")]
    Fit(String),
    #[error("quadrature failed: {0}")]
    Quadrature(String),
    #[error("iteration diverged: {0}")]
    Divergence(String),
    #[error("no convergence: {0}")]
    MaxIterations(String),
    #[error("bracketing failed: {0}")]
    Bracketing(String),
    #[error("integration failed: {0}")]
    Integration(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
