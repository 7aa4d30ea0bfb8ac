//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("mesh has no vertices")]
    EmptyMesh,
    #[error("input collection is empty")]
    EmptyInput,
    #[error("confusion matrix has no samples")]
    EmptyMatrix,
    #[error("too few points: need at least {needed}, have {have}")]
    TooFewPoints { needed: usize, have: usize },
    #[error("invalid voxel edge: {0}")]
    InvalidEdge(String),
    #[error("degenerate neighborhood: points do not span a plane")]
    DegenerateNeighborhood,
    #[error("insufficient density: dense set has {have} points, target is {target}")]
    InsufficientDensity { have: usize, target: usize },
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        got: usize,
    },
    #[error("class {0} has no training examples")]
    MissingClass(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("missing file(s): {}", .0.join(", "))]
    MissingFile(Vec<String>),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable code, used by the CLI's one-line error output.
    pub fn code(&self) -> &'static str {
        match self {
            Error::EmptyCloud => "EmptyCloud",
            Error::EmptyMesh => "EmptyMesh",
            Error::EmptyInput => "EmptyInput",
            Error::EmptyMatrix => "EmptyMatrix",
            Error::TooFewPoints { .. } => "TooFewPoints",
            Error::InvalidEdge(_) => "InvalidEdge",
            Error::DegenerateNeighborhood => "DegenerateNeighborhood",
            Error::InsufficientDensity { .. } => "InsufficientDensity",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::MissingClass(_) => "MissingClass",
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::IndexOutOfRange { .. } => "IndexOutOfRange",
            Error::Parse { .. } => "ParseError",
            Error::UnsupportedFormat(_) => "UnsupportedFormat",
            Error::MissingFile(_) => "MissingFile",
            Error::Io(_) => "IoError",
        }
    }

    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }
}
