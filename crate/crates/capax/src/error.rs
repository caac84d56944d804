use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("parameter out of range: {0}")]
    Param(String),
    #[error("grid mismatch: {0}")]
    Mismatch(String),
    #[error("empty cube lattice")]
    EmptyLattice,
    #[error("cube does not intersect the grid box")]
    EmptyIntersection,
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param(msg: impl Into<String>) -> Error {
    Error::Param(msg.into())
}
