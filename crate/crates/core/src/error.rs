use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    TrainingDiverged { epoch: usize, loss: f64 },

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("model file version {found} is not supported (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },

    #[error("model blob truncated: manifest declares {declared} bytes, found {found}")]
    TruncatedBlob { declared: usize, found: usize },

    #[error("model blob checksum mismatch")]
    ChecksumMismatch,

    #[error("network `{network}` layer {layer} declares {expected} values but blob has {available} left")]
    LayerBlobMismatch {
        network: String,
        layer: usize,
        expected: usize,
        available: usize,
    },

    #[error("singular surrogate design after {attempts} attempts")]
    SingularDesign { attempts: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dims(context: &'static str, expected: usize, actual: usize) -> Self {
        Error::DimensionMismatch {
            context,
            expected,
            actual,
        }
    }

    /// True for failures caused by numerics (divergence, NaN) rather than bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::TrainingDiverged { .. } | Error::NonFinite(_))
    }
}
