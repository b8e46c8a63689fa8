use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid filter id {id}: catalog has {k} filters")]
    InvalidFilter { id: usize, k: usize },

    #[error("invalid catalog: {0}")]
    InvalidCatalog(String),

    #[error("invalid query: {0}")]
    InvalidQuery(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("model file error: {0}")]
    ModelFile(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;
