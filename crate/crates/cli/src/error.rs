use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] topoid::Error),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    /// 1 for rank/residual failures, 2 for usage and configuration errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_computational() => 1,
            _ => 2,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}
