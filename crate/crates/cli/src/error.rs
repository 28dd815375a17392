use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("missing required input: {0}")]
    MissingInput(&'static str),
    #[error("grid search failed: {0}")]
    Grid(String),
    #[error(transparent)]
    Core(#[from] ulrot::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CliError>;
