use std::io;

use thiserror::Error;

/// Errors raised by the library. The CLI maps each variant family onto a
/// process exit code through [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("lattice mismatch: expected n = {expected}, found n = {found}")]
    LatticeMismatch { expected: usize, found: usize },

    #[error("resolution {coarse} does not divide {fine}")]
    NonDivisible { coarse: usize, fine: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("bad magic in field file")]
    BadMagic,

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },

    #[error("unsupported field flags {0:#x}")]
    UnsupportedFlags(u32),

    #[error("malformed line {line}: {message}")]
    MalformedLine { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

impl Error {
    /// Process exit code: 2 for invalid input, 3 for numerical aborts,
    /// 4 for I/O and file-format failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter(_)
            | Error::LatticeMismatch { .. }
            | Error::NonDivisible { .. }
            | Error::Config(_) => 2,
            Error::Numerical(_) | Error::InsufficientData(_) => 3,
            Error::BadMagic
            | Error::TruncatedPayload { .. }
            | Error::UnsupportedFlags(_)
            | Error::MalformedLine { .. }
            | Error::Io(_) => 4,
        }
    }

    /// Stable machine-readable tag, used in the CLI's JSON error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::LatticeMismatch { .. } => "lattice_mismatch",
            Error::NonDivisible { .. } => "non_divisible",
            Error::Numerical(_) => "numerical",
            Error::InsufficientData(_) => "insufficient_data",
            Error::Config(_) => "invalid_config",
            Error::BadMagic => "bad_magic",
            Error::TruncatedPayload { .. } => "truncated_payload",
            Error::UnsupportedFlags(_) => "unsupported_flags",
            Error::MalformedLine { .. } => "malformed_line",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
