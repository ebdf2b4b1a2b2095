use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch at layer {layer}: {msg}")]
    LayerShape { layer: usize, msg: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("label {label} out of range for {classes} classes")]
    InvalidLabel { label: usize, classes: usize },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("stratification failed: {0}")]
    Stratification(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("malformed file {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

/// Process exit status for each failure class.
pub mod exit {
    pub const OK: i32 = 0;
    pub const CONFIG: i32 = 2;
    pub const DATA: i32 = 3;
    pub const NUMERIC: i32 = 4;
}

impl Error {
    /// Short stable name used in machine-readable error lines.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) | Error::Json(_) => "config",
            Error::Numeric(_) => "numeric",
            Error::Io { .. } => "io",
            _ => "data",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.code() {
            "config" => exit::CONFIG,
            "numeric" => exit::NUMERIC,
            _ => exit::DATA,
        }
    }
}
