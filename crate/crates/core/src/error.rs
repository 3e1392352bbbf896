use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Two extents that must agree do not. `axis` names the offending dimension.
    #[error("dimension mismatch in {op}: {axis} expected {expected}, found {found}")]
    Shape {
        op: &'static str,
        axis: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("rank mismatch in {op}: expected rank {expected}, found {found}")]
    Rank {
        op: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("mirror padding of {pad} exceeds source extent {extent} along {axis}; kernel too large for tile")]
    PadOutOfRange {
        axis: &'static str,
        pad: usize,
        extent: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("non-finite {what} encountered at step {step}")]
    NonFinite { what: &'static str, step: usize },

    #[error("not a weight file (bad magic bytes)")]
    NotWeightFile,

    #[error("unsupported weight file version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("weight file truncated: {0}")]
    Truncated(String),

    #[error("weight shape mismatch for layer `{layer}`: expected {expected:?}, found {found:?}")]
    WeightShape {
        layer: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("malformed weight file: {0}")]
    Malformed(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable category, used by the command-line front end.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape { .. } | Error::Rank { .. } => "shape",
            Error::PadOutOfRange { .. } => "padding",
            Error::Config(_) => "config",
            Error::Empty(_) => "empty",
            Error::NonFinite { .. } => "non_finite",
            Error::NotWeightFile
            | Error::Version { .. }
            | Error::Truncated(_)
            | Error::WeightShape { .. }
            | Error::Malformed(_) => "weights",
            Error::Io { .. } => "io",
            Error::Image(_) => "image",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}
