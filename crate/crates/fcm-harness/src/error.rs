use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Core(#[from] fcm_core::CoreError),

    #[error(transparent)]
    Fcm(#[from] fcm_core::FcmError),

    #[error(transparent)]
    Ingest(#[from] fcm_core::IngestError),

    #[error("experiment setup: {0}")]
    Setup(String),

    #[error("log has no attitude channels")]
    MissingAttitude,

    #[error("sweep grid is empty or unsorted: {0}")]
    BadGrid(String),

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization: {0}")]
    Serial(#[from] serde_json::Error),
}
