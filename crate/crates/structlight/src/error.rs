//! Crate error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("pgm parse error at byte {offset}: {msg}")]
    PgmParse { offset: usize, msg: String },

    #[error("raster parse error: {0}")]
    RasterParse(String),

    #[error("value {value} out of range at ({x}, {y})")]
    Range { x: usize, y: usize, value: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid pattern spec: {0}")]
    PatternSpec(String),

    #[error("config: {0}")]
    Config(String),

    #[error("usage: {0}")]
    Usage(String),

    #[error("group {group} is within the warm-up window, no assembly yet")]
    WarmUp { group: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("missing input: {0}")]
    MissingInput(String),
}
