use std::io;

use crate::oracle::Label;

/// Errors produced by the attack library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("cannot select {requested} pixels from an image with {available}")]
    NTooLarge { requested: usize, available: usize },

    #[error("query budget of {0} exhausted")]
    BudgetExhausted(usize),

    #[error("invalid reference: {0}")]
    InvalidReference(String),

    #[error("external oracle protocol error: {0}")]
    ExternalProtocol(String),

    #[error("label {label} out of range for a classifier with {num_classes} classes")]
    LabelOutOfRange { label: Label, num_classes: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("layer dimensions do not chain: {0}")]
    DimensionChain(String),

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("image of {height}x{width} is smaller than the {window}x{window} window")]
    ImageTooSmall { height: usize, width: usize, window: usize },

    #[error("correlation undefined for a constant image")]
    ZeroVariance,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("inconsistent metrics: {0}")]
    InconsistentMetrics(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
