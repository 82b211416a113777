use rbanova_core::driver::RunFailure;

/// Failure of a CLI action, mapped onto the process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Unreadable, malformed or invalid configuration.
    #[error("config error: {0}")]
    Config(String),
    /// A solve or run aborted.
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// Writing artifacts failed.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// Process exit code: 2 for configuration, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

impl From<rbanova_core::Error> for CliError {
    fn from(e: rbanova_core::Error) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<RunFailure> for CliError {
    fn from(e: RunFailure) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(std::io::Error::other(e))
    }
}
