use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("edge ({u}, {v}) out of range for n = {n}")]
    VertexOutOfRange { u: u32, v: u32, n: usize },
    #[error("edge weight must be positive and finite, got {0}")]
    BadWeight(f64),
    #[error("watchdog expired after {0:.1} s")]
    Watchdog(f64),
    #[error("oracle budget exceeded: {0}")]
    Budget(String),
    #[error("audit: {0}")]
    Audit(String),
    #[error("malformed stream file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
