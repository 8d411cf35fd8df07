use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid rank {rank} for ambient dimension {dim}")]
    InvalidRank { rank: usize, dim: usize },

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid batch: {0}")]
    InvalidBatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("IDX format error: {0}")]
    Format(String),

    #[error("IDX length error: {0}")]
    Length(String),

    #[error("dataset consistency error: {0}")]
    Consistency(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("bound not applicable: {0}")]
    BoundInapplicable(String),

    #[error("instrumentation error: {0}")]
    Instrumentation(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("client {client}: {source}")]
    Client {
        client: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Shape { expected, got })
    }
}
