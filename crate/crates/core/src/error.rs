use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CestError>;

#[derive(Debug, Error)]
pub enum CestError {
    #[error("reference offset {0} ppm is not on the sampled grid")]
    MissingReference(f64),
    #[error("reference intensity {0} is not positive")]
    NonPositiveReference(f64),
    #[error("water minimum lies on the first or last sample; offset not bracketed")]
    EdgeMinimum,
    #[error("saturation amplitude must be positive, got {0} uT")]
    NonPositiveAmplitude(f64),
    #[error("mirrored offset {0} ppm falls outside the sampled range")]
    AsymmetricSupport(f64),
    #[error("Z value {value} at {offset_ppm} ppm is too close to zero")]
    ZeroSignal { offset_ppm: f64, value: f64 },
    #[error("invalid spectrum: {0}")]
    InvalidSpectrum(String),
    #[error("index {index} out of range for {len} pools")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("invalid bounds: {0}")]
    InvalidBounds(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("degenerate regression design: sum of squared concentrations is zero")]
    DegenerateDesign,
    #[error("degenerate regression target: sum of squared contrasts is zero")]
    DegenerateTarget,
    #[error("B0 shift {shift} ppm is not smaller than the grid half-span {half_span} ppm")]
    ShiftTooLarge { shift: f64, half_span: f64 },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CestError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CestError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        CestError::Parse {
            path: path.into(),
            message: message.into(),
        }
    }
}
