use pan_core::PanError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Data(PanError),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(PanError::Divergence { .. }) => 4,
            CliError::Data(_) => 3,
        }
    }
}

impl From<PanError> for CliError {
    fn from(e: PanError) -> Self {
        CliError::Data(e)
    }
}

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}
