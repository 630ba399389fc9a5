use pve_core::PveError;

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("config: {0}")]
    Config(String),
    #[error("output: {0}")]
    Output(String),
    #[error("model file: {0}")]
    ModelFile(String),
    #[error(transparent)]
    Core(#[from] PveError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type LabResult<T> = std::result::Result<T, LabError>;
