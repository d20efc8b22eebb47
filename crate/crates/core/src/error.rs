//! Error type shared across the crate.

use thiserror::Error;

/// Raster shape as `(height, width, channels)`, used in error reports.
pub type Shape = (usize, usize, usize);

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid raster dimensions {0}x{1}x{2}")]
    InvalidDimensions(usize, usize, usize),

    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch { left: Shape, right: Shape },

    #[error("mask reserves zero pixels")]
    EmptyMask,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("nonpositive depth {value} at pixel ({row},{col})")]
    NonPositiveDepth { row: usize, col: usize, value: f64 },

    #[error("degenerate flow {value} at pixel ({row},{col}): magnitude below epsilon")]
    DegenerateFlow { row: usize, col: usize, value: f64 },

    #[error("sigma {value} at pixel ({row},{col}) outside [0,1]")]
    SigmaOutOfRange { row: usize, col: usize, value: f64 },

    #[error("pixel ({row},{col}) outside {height}x{width} raster")]
    PixelOutOfBounds {
        row: usize,
        col: usize,
        height: usize,
        width: usize,
    },

    #[error("curve too short: {len} samples, need at least 3")]
    CurveTooShort { len: usize },

    #[error("no evaluation-valid pixels")]
    EmptyEval,

    #[error("optimization diverged at step {step}: loss {loss}")]
    Divergence { step: usize, loss: f64 },

    #[error("format error: {0}")]
    Format(String),

    #[error("non-finite data: {0}")]
    NonFiniteData(String),

    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
