use std::path::PathBuf;

use crate::mdn::NetworkWeights;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("degenerate phasor at pixel ({row}, {col})")]
    DegeneratePhasor { row: usize, col: usize },

    #[error("window of size {size} centred at ({row}, {col}) does not fit in a {width}x{height} field")]
    OutOfBounds {
        row: usize,
        col: usize,
        size: usize,
        width: usize,
        height: usize,
    },

    #[error("padding margin {margin} must be smaller than both image dimensions ({width}x{height})")]
    InvalidMargin {
        margin: usize,
        width: usize,
        height: usize,
    },

    #[error("format error in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("invalid coherence {0}: must lie in (0, 1]")]
    InvalidCoherence(f64),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("image of {width}x{height} is smaller than the required {required}x{required}")]
    ImageTooSmall {
        width: usize,
        height: usize,
        required: usize,
    },

    #[error("training diverged at step {step} (non-finite loss)")]
    TrainingDiverged {
        step: usize,
        last_good: Box<NetworkWeights<f32>>,
    },

    #[error("the noisy image has no residues to reduce")]
    NoResiduesToReduce,

    #[error("config error at line {line}: {reason}")]
    Config { line: usize, reason: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
