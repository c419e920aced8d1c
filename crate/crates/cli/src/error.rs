use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad command line, config file or parameter.
    #[error("configuration error: {0}")]
    Usage(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Numerical(_) | CliError::Io(_) => 1,
        }
    }
}

impl From<mpcorr_core::Error> for CliError {
    fn from(e: mpcorr_core::Error) -> Self {
        use mpcorr_core::Error as E;
        match e {
            E::InputDomain(_)
            | E::LengthMismatch { .. }
            | E::EmptyInput(_)
            | E::UnsupportedIndex(_)
            | E::Stability { .. }
            | E::OutOfRange { .. }
            | E::Config(_) => CliError::Usage(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}
