use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid interval [{start}, {end}]")]
    InvalidInterval { start: f64, end: f64 },

    #[error("annotation error for caption {caption_id}: {reason}")]
    Annotation { caption_id: String, reason: String },

    #[error("{path}:{line}: {reason}")]
    Parse { path: PathBuf, line: usize, reason: String },

    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("feature dimension mismatch: {first} has d={first_dim}, {second} has d={second_dim}")]
    DimensionMismatch {
        first: String,
        first_dim: usize,
        second: String,
        second_dim: usize,
    },

    #[error("no feature files found in {0}")]
    NoFeatureFiles(PathBuf),

    #[error("unknown video id {0}")]
    UnknownVideo(String),

    #[error("unknown caption id {0}")]
    UnknownCaption(String),

    #[error("synthetic placement infeasible: {0}")]
    Placement(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("degenerate embedding")]
    DegenerateEmbedding,

    #[error("non-finite loss in batch {batch}")]
    NonFiniteLoss { batch: usize },

    #[error("control set empty; lower gamma")]
    EmptyControlSet,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("caption {caption_id}: {source}")]
    Caption {
        caption_id: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures raised by the numerics (as opposed to bad inputs or config).
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::DegenerateEmbedding | Error::NonFiniteLoss { .. } => true,
            Error::Caption { source, .. } => source.is_numeric(),
            _ => false,
        }
    }

    pub(crate) fn for_caption(caption_id: &str, source: Error) -> Self {
        Error::Caption {
            caption_id: caption_id.to_string(),
            source: Box::new(source),
        }
    }
}
