use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("joint {joint} angle {angle} rad outside [-pi, pi]")]
    OutOfRange { joint: usize, angle: f64 },
    #[error("cannot recover pose: link {link} has a degenerate projected segment")]
    UnrecoverablePose { link: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("window error: {0}")]
    Window(String),
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },
    #[error("normal matrix is singular")]
    Singular,
    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Diverged { epoch: usize, loss: f64 },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("config hash mismatch for {artifact}: expected {expected}, found {found}")]
    HashMismatch {
        artifact: String,
        expected: String,
        found: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("{path} not found; {hint}")]
    Missing { path: PathBuf, hint: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Format {
            path: path.into(),
            message: message.to_string(),
        }
    }

    /// Short stable identifier, used for machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidDimension(_) => "invalid-dimension",
            Error::NonFinite(_) => "non-finite",
            Error::OutOfRange { .. } => "range",
            Error::UnrecoverablePose { .. } => "unrecoverable-pose",
            Error::InvalidConfig(_) => "invalid-config",
            Error::InsufficientData(_) => "insufficient-data",
            Error::Window(_) => "window",
            Error::Shape { .. } => "shape",
            Error::Singular => "singular",
            Error::Diverged { .. } => "training-diverged",
            Error::LengthMismatch(..) => "length-mismatch",
            Error::HashMismatch { .. } => "hash-mismatch",
            Error::Io { .. } => "io",
            Error::Format { .. } => "format",
            Error::Missing { .. } => "missing-artifact",
        }
    }
}
