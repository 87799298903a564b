use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("{0}")]
    Experiment(String),
    #[error(transparent)]
    Core(#[from] codesign_core::Error),
    #[error(transparent)]
    Wire(#[from] codesign_wire::WireError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 2 for usage and configuration problems, 1 for everything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config(_) | CliError::Core(codesign_core::Error::Config(_)) => 2,
            _ => 1,
        }
    }
}
