use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid dimension: {0}")]
    Dimension(String),
    #[error("layer range {first}..={last} invalid for a {depth}-layer network")]
    Range {
        first: usize,
        last: usize,
        depth: usize,
    },
    #[error("activation trace does not match request: {0}")]
    Trace(String),
    #[error("malformed weight file at byte {offset}: {message}")]
    Format { offset: u64, message: String },
    #[error("invalid network: {0}")]
    Validation(String),
    #[error("bad data: {0}")]
    Data(String),
    #[error("diverged at iteration {iteration} ({context})")]
    Divergence { iteration: usize, context: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("all {} restarts failed; first error: {}", .0.len(), .0[0])]
    AllRestartsFailed(Vec<Error>),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
