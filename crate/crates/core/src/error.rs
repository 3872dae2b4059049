use std::path::PathBuf;

use thiserror::Error;

/// Failure modes of the on-disk field and checkpoint formats.
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("truncated file: needed {needed} bytes at offset {offset}, {available} available")]
    Truncated {
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported version {0}")]
    Version(u32),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("invalid utf-8 in {0}")]
    Utf8(&'static str),
    #[error("invalid field: {0}")]
    Invalid(String),
    #[error("{} trailing bytes after payload", .0)]
    Trailing(usize),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid: {0}")]
    Grid(String),
    #[error("time axis: {0}")]
    Time(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("missing variable `{0}`")]
    MissingVariable(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("zero variance in `{0}`")]
    ZeroVariance(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("{config} member v{member}: {source}")]
    Member {
        config: String,
        member: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("config: {}", .0.join("; "))]
    Config(Vec<String>),
    #[error("missing input {path}: run `{command}` first")]
    MissingInput { path: PathBuf, command: String },
    #[error("{path}: {source}")]
    Format {
        path: PathBuf,
        #[source]
        source: FormatError,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::MissingInput { .. }
            | Error::MissingVariable(_)
            | Error::Format { .. }
            | Error::Io(_) => 3,
            Error::Member { source, .. } => source.exit_code(),
            _ => 4,
        }
    }
}
