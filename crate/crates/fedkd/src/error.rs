//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: {left:?} vs {right:?}")]
    ShapeMismatch {
        context: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("label {label} out of range for {classes} classes (sample {index})")]
    LabelOutOfRange {
        label: usize,
        classes: usize,
        index: usize,
    },

    #[error("gradient tape already consumed")]
    TapeConsumed,

    #[error("non-finite value produced in {0}")]
    NonFinite(&'static str),

    #[error("divergence is infinite: q is zero at row {row}, class {class} where p > 0")]
    InfiniteDivergence { row: usize, class: usize },

    #[error("empty label counters: total count is zero")]
    EmptyCounters,

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("IDX magic mismatch in {path}: expected {expected:#010x}, found {found:#010x}")]
    IdxMagic {
        path: String,
        expected: u32,
        found: u32,
    },

    #[error("IDX file {path} truncated: expected {expected} bytes of payload, found {found}")]
    IdxTruncated {
        path: String,
        expected: usize,
        found: usize,
    },

    #[error("IDX image/label count mismatch: {images} images vs {labels} labels")]
    IdxCountMismatch { images: usize, labels: usize },

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error("dirichlet partition failed: a client received zero samples in all {attempts} attempts")]
    PartitionExhausted { attempts: usize },

    #[error("all clients were skipped in round {round}")]
    AllClientsSkipped { round: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
