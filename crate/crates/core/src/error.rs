use thiserror::Error;

/// Errors produced anywhere in the matching pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("S-graph has {s_nodes} nodes but A-graph only {a_nodes}")]
    SizeMismatch { a_nodes: usize, s_nodes: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("floor-plan generation failed for seed {seed}: {reason}")]
    Generation { seed: u64, reason: String },

    #[error("training diverged at epoch {epoch}, sample {sample}: loss = {loss}")]
    Diverged { epoch: usize, sample: usize, loss: f64 },

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u64, expected: u64 },

    #[error("{0}")]
    Unsupported(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
