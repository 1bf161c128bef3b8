use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum MroError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("point outside the domain of the constraint function: {0}")]
    Domain(String),

    #[error("unsupported combination: {0}")]
    Unsupported(String),

    #[error("backend `{backend}` does not support cone kind `{cone}`")]
    Capability { backend: String, cone: String },

    #[error("too many binary variables ({count} > cap {cap}); use the cutting-plane path or raise the cap")]
    TooManyBinaries { count: usize, cap: usize },

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, MroError>;
