use std::path::PathBuf;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed header {path}: {message}")]
    Header { path: PathBuf, message: String },
    #[error("size mismatch: expected {expected} bytes of data, found {found}")]
    SizeMismatch { expected: usize, found: usize },
    #[error("non-finite value in band {band} at pixel {pixel}")]
    NonFinite { band: String, pixel: usize },
    #[error("duplicate band name {0}")]
    DuplicateBand(String),
    #[error("empty raster")]
    EmptyRaster,
    #[error("missing band {0}")]
    MissingBand(String),
    #[error("Lab bands already present")]
    AlreadyLifted,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("unknown class code {code} at pixel {pixel}")]
    UnknownClassCode { code: u8, pixel: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("single-class input")]
    SingleClass,
    #[error("infeasible nu {nu} for class pair {pair}: must not exceed {bound}")]
    InfeasibleNu { nu: f64, bound: f64, pair: String },
    #[error("class {class} has {count} labeled pixel(s); at least 2 are required")]
    SparseClass { class: u8, count: usize },
    #[error("could not place {ponds} ponds without overlap after {attempts} attempts")]
    PondPlacement { ponds: usize, attempts: usize },
    #[error("revision conflict: expected {expected}, current is {current}")]
    RevisionConflict { expected: u64, current: u64 },
    #[error("unknown region {0}")]
    UnknownRegion(String),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("png encoding failed: {0}")]
    Png(#[from] png::EncodingError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
