use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = LfError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum LfError {
    #[error("data length {got} does not match shape element count {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("non-finite value at flat offset {0}")]
    NonFiniteValue(usize),
    #[error("invalid shape: {0}")]
    BadShape(String),
    #[error("channel mismatch: layer expects {expected}, input has {got}")]
    ChannelMismatch { expected: usize, got: usize },
    #[error("unsupported stride {0} for this layer")]
    BadStride(usize),
    #[error("spatial extent {extent} is smaller than pooling stride {stride}")]
    SpatialTooSmall { extent: usize, stride: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("malformed layer: {0}")]
    BadLayer(String),
    #[error("model shape chain broken at layer {layer}: {reason}")]
    ShapeChainBroken { layer: usize, reason: String },
    #[error("seed for output {output} has length {got}, expected {expected}")]
    SeedShapeMismatch {
        output: usize,
        expected: usize,
        got: usize,
    },
    #[error("angular kernel extent required for {0}")]
    MissingAngularExtent(&'static str),
    #[error("image too small: {rows}x{cols}, need at least {min}x{min}")]
    ImageTooSmall {
        rows: usize,
        cols: usize,
        min: usize,
    },
    #[error("angular grid {u}x{v} too small, need at least 2x2")]
    AngularTooSmall { u: usize, v: usize },
    #[error("need at least {min} rows, got {got}")]
    TooFewRows { min: usize, got: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("zero variance input to correlation")]
    ZeroVariance,
    #[error("empty dataset")]
    EmptyDataset,
    #[error("invalid split ratio {0}; must lie strictly between 0 and 1")]
    BadRatio(f64),
    #[error("invalid input shape for model: {0}")]
    BadInputShape(String),
    #[error("target shape exceeds source: {0}")]
    TargetTooLarge(String),
    #[error("missing subview: {0}")]
    MissingSubview(String),
    #[error("subview {path} is {got_rows}x{got_cols}, expected {rows}x{cols}")]
    InconsistentSubviewSize {
        path: String,
        rows: usize,
        cols: usize,
        got_rows: usize,
        got_cols: usize,
    },
    #[error("bad manifest: {0}")]
    BadManifest(String),
    #[error("bad file format: {0}")]
    BadFormat(String),
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("image decode error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

impl LfError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LfError::Io {
            path: path.into(),
            source,
        }
    }
}
