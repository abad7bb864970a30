use thiserror::Error;

/// Errors shared across the crate.
#[derive(Error, Debug)]
pub enum Error {
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("invalid topology: {0}")]
    InvalidTopology(String),

    #[error("graph is disconnected: joint {unreachable} is unreachable from joint {from}")]
    DisconnectedGraph { unreachable: usize, from: usize },

    #[error("missing parent map: bone features need `parents` on the topology")]
    MissingParents,

    #[error("label {label} out of range for {n_class} classes")]
    LabelOutOfRange { label: usize, n_class: usize },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("search failed: {0}")]
    SearchFailed(String),

    #[error("training diverged: non-finite loss at {0}")]
    Diverged(String),

    #[error("layer cap reached: model already has {0} layers")]
    LayerCapReached(usize),

    #[error("only the last layer can be widened: asked for layer {asked} of {count}")]
    NotFrontierLayer { asked: usize, count: usize },

    #[error("bad file format: {0}")]
    BadFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn shape(expected: impl Into<String>, got: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            expected: expected.into(),
            got: got.into(),
        }
    }
}
