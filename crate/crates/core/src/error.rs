use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid quaternion: norm {norm} is not within 1e-3 of 1")]
    InvalidQuaternion { norm: f64 },

    #[error("invalid rigid transform: {0}")]
    InvalidTransform(String),

    #[error("frame mismatch: expected {expected}, found {found}")]
    FrameMismatch { expected: String, found: String },

    #[error("invalid pose series: {0}")]
    InvalidSeries(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: missing required column `{column}`")]
    MissingColumn { path: PathBuf, column: String },

    #[error("{path}: log contains no data rows")]
    EmptyLog { path: PathBuf },

    #[error("{path}: {dropped} of {total} rows dropped, log presumed corrupt")]
    CorruptLog {
        path: PathBuf,
        dropped: usize,
        total: usize,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("manifest: {0}")]
    Manifest(String),

    #[error("tracker and truth time ranges do not overlap")]
    NoTimeOverlap,

    #[error("need at least {needed} point correspondences, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("degenerate point set: singular value ratio {ratio:.3e} below {tolerance:.1e}")]
    DegeneratePoints { ratio: f64, tolerance: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("series spans {actual_s:.1} s but at least {required_s:.1} s are required")]
    SpanTooShort { required_s: f64, actual_s: f64 },

    #[error("unknown preset `{name}`; available: {available}")]
    UnknownPreset { name: String, available: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
