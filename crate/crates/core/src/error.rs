use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid depth at ({u}, {v})")]
    InvalidDepth { u: f64, v: f64 },

    #[error("format error in {path:?} at byte {offset}: {reason}")]
    Format { path: PathBuf, offset: u64, reason: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("image too small: {width}x{height}, need at least {min_width}x{min_height}")]
    ImageTooSmall { width: usize, height: usize, min_width: usize, min_height: usize },

    #[error("feature grids differ: {0}")]
    GridMismatch(String),

    #[error("template window at ({col}, {row}) does not fit the {cells_w}x{cells_h} grid")]
    OutOfBounds { col: i64, row: i64, cells_w: usize, cells_h: usize },

    #[error("model file version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("corrupt model: {0}")]
    CorruptModel(String),

    #[error("quadratic deformation weights must be strictly negative, got ({0}, {1})")]
    NonConcaveDeformation(f64, f64),

    #[error("state space is empty")]
    EmptyStateSpace,

    #[error("instance too large for brute force: {size} > budget {budget}")]
    InstanceTooLarge { size: usize, budget: usize },

    #[error("part {0} has no training samples")]
    InsufficientSamples(usize),

    #[error("no valid samples for {0}")]
    NoValidSamples(String),

    #[error("degenerate training data: {0}")]
    DegenerateData(String),

    #[error("non-finite training loss at epoch {epoch}: {detail}")]
    NonFiniteLoss { epoch: usize, detail: String },

    #[error("no ground truth to evaluate against")]
    NoGroundTruth,

    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
