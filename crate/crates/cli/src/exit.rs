//! Exit codes and the error type that carries them.

use polychar::Error;

pub const OK: u8 = 0;
pub const PARSE: u8 = 2;
pub const PRECONDITION: u8 = 3;
pub const VERIFICATION: u8 = 4;
pub const GENERATION: u8 = 5;
/// I/O failures writing outputs.
pub const IO: u8 = 1;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        CliError { code, message: message.into() }
    }

    pub fn parse(message: impl Into<String>) -> Self {
        Self::new(PARSE, message)
    }

    pub fn generation(e: Error) -> Self {
        Self::new(GENERATION, e.to_string())
    }
}

/// Unmet hypotheses exit with 3; numerical checks that failed exit with 4.
impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::InvalidInput(_) => PARSE,
            Error::NotRowContraction { .. }
            | Error::NotCommuting { .. }
            | Error::DegreeUndetermined { .. }
            | Error::NotRegular(_)
            | Error::NotUpperTriangular { .. }
            | Error::NotContraction { .. }
            | Error::HypothesisUnmet(_)
            | Error::BandCorrupted { .. } => PRECONDITION,
            Error::GenerationFailed(_) => GENERATION,
            _ => VERIFICATION,
        };
        CliError::new(code, e.to_string())
    }
}
