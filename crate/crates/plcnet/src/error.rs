use std::fmt;
use std::io;
use std::path::PathBuf;

/// Error type shared by the whole crate.
#[derive(Debug)]
pub enum PlcError {
    /// Invalid configuration: bad hyperparameter, inconsistent shapes, bad flag combination.
    Config(String),
    /// An OS-level I/O failure, with the path that was being touched.
    Io { path: PathBuf, source: io::Error },
    /// The file is not a WAV file this crate can parse.
    WavFormat { path: PathBuf, detail: String },
    /// The file is a valid WAV file but uses an encoding this crate does not accept.
    WavUnsupported { path: PathBuf, detail: String },
    /// Checkpoint bytes are damaged: bad magic, truncation, CRC mismatch, shape mismatch.
    CheckpointIntegrity { path: PathBuf, detail: String },
    /// Checkpoint was written by an incompatible format version.
    CheckpointVersion { path: PathBuf, found: u16, supported: u16 },
    /// A numerical failure the run could not recover from.
    Numeric(String),
}

impl fmt::Display for PlcError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlcError::Config(msg) => write!(f, "configuration error: {msg}"),
            PlcError::Io { path, source } => {
                write!(f, "i/o error on {}: {source}", path.display())
            }
            PlcError::WavFormat { path, detail } => {
                write!(f, "malformed wav file {}: {detail}", path.display())
            }
            PlcError::WavUnsupported { path, detail } => {
                write!(f, "unsupported wav file {}: {detail}", path.display())
            }
            PlcError::CheckpointIntegrity { path, detail } => {
                write!(f, "damaged checkpoint {}: {detail}", path.display())
            }
            PlcError::CheckpointVersion { path, found, supported } => write!(
                f,
                "checkpoint {} has format version {found}, this build supports version {supported}",
                path.display()
            ),
            PlcError::Numeric(msg) => write!(f, "numerical error: {msg}"),
        }
    }
}

impl std::error::Error for PlcError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            PlcError::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}

impl PlcError {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        PlcError::Io { path: path.into(), source }
    }

    /// Process exit code used by the command-line interface.
    pub fn exit_code(&self) -> i32 {
        match self {
            PlcError::Config(_) => 2,
            PlcError::Io { .. }
            | PlcError::WavFormat { .. }
            | PlcError::WavUnsupported { .. }
            | PlcError::CheckpointIntegrity { .. }
            | PlcError::CheckpointVersion { .. } => 3,
            PlcError::Numeric(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, PlcError>;
