use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected_h}x{expected_w}, got {got_h}x{got_w}")]
    DimensionMismatch {
        expected_h: usize,
        expected_w: usize,
        got_h: usize,
        got_w: usize,
    },

    #[error("image is {height}x{width}, operation needs at least {min}x{min}")]
    TooSmall {
        height: usize,
        width: usize,
        min: usize,
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("malformed checkpoint: {0}")]
    MalformedCheckpoint(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("sample {0} has no ground-truth transmission map")]
    MissingTruth(usize),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_same_size(
    expected: (usize, usize),
    got: (usize, usize),
) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch {
            expected_h: expected.0,
            expected_w: expected.1,
            got_h: got.0,
            got_w: got.1,
        });
    }
    Ok(())
}

pub(crate) fn check_min_size(height: usize, width: usize, min: usize) -> Result<()> {
    if height < min || width < min {
        return Err(Error::TooSmall { height, width, min });
    }
    Ok(())
}
