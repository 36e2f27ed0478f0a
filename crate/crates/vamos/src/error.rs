use thiserror::Error;

/// Errors shared across the toolkit.
#[derive(Debug, Error)]
pub enum VamosError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid volume header: {0}")]
    Header(String),

    #[error("payload length mismatch: header declares {expected} voxels, payload holds {actual}")]
    PayloadLength { expected: usize, actual: usize },

    #[error("volume contains non-finite values")]
    NonFinite,

    #[error("dimension mismatch: {0}")]
    DimsMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate histogram: {distinct} distinct bins for {classes} classes")]
    DegenerateHistogram { distinct: usize, classes: usize },

    #[error("malformed skeleton: {0}")]
    MalformedSkeleton(String),

    #[error("graph error: {0}")]
    Graph(String),

    #[error("degenerate class {class}: zero intensity spread")]
    DegenerateClass { class: u8 },

    #[error("aneurysm placement failed: {0}")]
    Placement(String),

    #[error("pipeline error: {0}")]
    Pipeline(String),

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, VamosError>;
