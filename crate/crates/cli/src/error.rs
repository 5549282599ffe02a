use thiserror::Error;

/// Errors surfaced by the command runner, split by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) | CliError::Io(_) => 3,
        }
    }

    /// Wrap a model error with the config context it came from.
    pub fn model(context: &str, e: spinbath_core::Error) -> Self {
        use spinbath_core::Error as E;
        match e {
            E::InvalidParameter(_) | E::DegenerateBox | E::InvalidSpin(_) | E::UnsupportedSequence(_) | E::InversionRequiresCpn
            | E::InvertedContrast { .. } => CliError::Config(format!("{context}: {e}")),
            _ => CliError::Numerical(format!("{context}: {e}")),
        }
    }
}
