use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("argument outside its domain: {0}")]
    Domain(String),

    #[error("paths live on different grids ({left} vs {right} steps)")]
    GridMismatch { left: usize, right: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value at node {node}")]
    NonFinite { node: usize },

    #[error("circulant embedding is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    EmbeddingNotPsd { min_eigenvalue: f64 },

    #[error("covariance factorization failed: {0}")]
    Decomposition(String),

    #[error("Hölder exponents {alpha} + {beta} do not exceed 1")]
    InadmissibleExponents { alpha: f64, beta: f64 },

    #[error("model error: {0}")]
    Model(String),

    #[error("Poisson right-hand side is not centered (residual {residual:e})")]
    Centering { residual: f64 },

    #[error("fast variable of dimension {0} is not supported (only d = 1)")]
    UnsupportedDimension(usize),

    #[error("Hurst parameter {h} outside the {regime} regime")]
    Regime { h: f64, regime: &'static str },

    #[error("inversion failed (smallest eigenvalue {smallest_eigenvalue:e})")]
    Inversion { smallest_eigenvalue: f64 },

    #[error("rate function undefined: {0}")]
    RateUndefined(String),

    #[error("simulation diverged at step {step}")]
    Divergence { step: usize },

    #[error("too many divergent paths: {divergent} of {total}")]
    EnsembleDivergence { divergent: usize, total: usize },

    #[error("verification failed: {0}")]
    Verification(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Errors caused by bad input rather than by a failed computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidGrid(_)
                | Error::Domain(_)
                | Error::GridMismatch { .. }
                | Error::DimensionMismatch { .. }
                | Error::NonFinite { .. }
                | Error::InadmissibleExponents { .. }
                | Error::Model(_)
                | Error::UnsupportedDimension(_)
                | Error::Regime { .. }
                | Error::Config(_)
                | Error::Csv(_)
                | Error::Json(_)
        )
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidGrid(_) => "invalid-grid",
            Error::Domain(_) => "domain",
            Error::GridMismatch { .. } => "grid-mismatch",
            Error::DimensionMismatch { .. } => "dimension-mismatch",
            Error::NonFinite { .. } => "non-finite",
            Error::EmbeddingNotPsd { .. } => "embedding-not-psd",
            Error::Decomposition(_) => "decomposition",
            Error::InadmissibleExponents { .. } => "inadmissible-exponents",
            Error::Model(_) => "model",
            Error::Centering { .. } => "centering",
            Error::UnsupportedDimension(_) => "unsupported-dimension",
            Error::Regime { .. } => "regime",
            Error::Inversion { .. } => "inversion",
            Error::RateUndefined(_) => "rate-undefined",
            Error::Divergence { .. } => "divergence",
            Error::EnsembleDivergence { .. } => "ensemble-divergence",
            Error::Verification(_) => "verification",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}
