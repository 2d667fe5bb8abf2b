use std::fmt;

use adstm_core::Error;

/// Exit statuses.
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_IO: u8 = 3;
pub const EXIT_DIVERGENCE: u8 = 4;
pub const EXIT_EMPTY: u8 = 5;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Core(Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Core(e) => match e {
                Error::InvalidGrid(_) | Error::InvalidTruncation(_) | Error::InvalidArgument(_) => EXIT_CONFIG,
                Error::Io(_)
                | Error::Parse { .. }
                | Error::OutOfBounds { .. }
                | Error::Misaligned(_)
                | Error::DimensionMismatch(_)
                | Error::MissingEntries(_) => EXIT_IO,
                Error::EmptyData(_) => EXIT_EMPTY,
                Error::Divergence(_)
                | Error::Unstable(_)
                | Error::NotPositiveDefinite(_)
                | Error::NotSquare(..)
                | Error::SineOfSelfConjugate(..)
                | Error::Internal(_) => EXIT_DIVERGENCE,
            },
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(Error::Io(e))
    }
}
