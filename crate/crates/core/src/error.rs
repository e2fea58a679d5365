use thiserror::Error;

/// Errors raised by tensor kernels, layers, geometry and the harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    #[error("kernel size must be odd, got {0}")]
    EvenKernel(usize),

    #[error("non-finite value produced by {0}")]
    NonFinite(String),

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("group order mismatch: expected {expected}, got {actual}")]
    GroupOrder { expected: usize, actual: usize },

    #[error("degenerate hull: all points are collinear")]
    DegenerateHull,

    #[error("degenerate polygon: {0}")]
    DegeneratePolygon(&'static str),

    #[error("polygon is not convex")]
    NonConvex,

    #[error("image {h}x{w} is smaller than the receptive field ({min})")]
    ImageTooSmall { h: usize, w: usize, min: usize },

    #[error("unknown layer kind `{0}`")]
    UnknownLayer(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("training diverged at epoch {epoch}, step {step}: {detail}")]
    Divergence { epoch: usize, step: usize, detail: String },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_err(op: &'static str, detail: impl Into<String>) -> Error {
    Error::ShapeMismatch { op, detail: detail.into() }
}
