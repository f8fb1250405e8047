use std::path::PathBuf;

/// Unified error type for the toolkit.
///
/// The variants map onto the failure classes the pipeline distinguishes:
/// bad caller input, backend/state mismatches, malformed files, and I/O.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// The caller handed us something unusable (empty text, dimension
    /// mismatch, unknown id, ...).
    #[error("input error: {0}")]
    Input(String),

    /// A component was used in a state it cannot serve from (backend not
    /// loaded, fingerprint mismatch, ...).
    #[error("state error: {0}")]
    State(String),

    /// A file exists but does not parse as the expected format.
    #[error("format error in {path}: {message}")]
    Format { path: PathBuf, message: String },

    /// Training diverged (NaN loss or gradient).
    #[error("numeric divergence: {0}")]
    Diverged(String),

    /// Configuration file problems, including unknown keys.
    #[error("config error: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub fn state(msg: impl Into<String>) -> Self {
        Error::State(msg.into())
    }

    pub fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: msg.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Machine-readable classification used by the CLI's JSON error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Input(_) => "input",
            Error::State(_) => "state",
            Error::Format { .. } => "format",
            Error::Diverged(_) => "diverged",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
