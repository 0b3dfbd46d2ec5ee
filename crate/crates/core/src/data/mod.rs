//! Dataset ingestion: CDnet-layout videos, ground-truth mask semantics,
//! history-window construction, the scene-independent split and a
//! synthetic sequence generator.

pub mod cdnet;
pub mod pnm;
pub mod split;
pub mod synth;

use crate::tensor::{Tensor5, TensorError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("decode error: {0}")]
    Decode(String),
    #[error("ingestion error: {0}")]
    Ingestion(String),
    #[error("window error: {0}")]
    Window(String),
    #[error("manifest error: {0}")]
    Manifest(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// One training/inference unit: 50 history frames, the current frame, the
/// binary target and the evaluation mask, all zero-padded to spatial
/// multiples of 8. `ignore_mask` is 1 where a pixel counts; padded border
/// pixels are always 0.
#[derive(Debug, Clone)]
pub struct SampleWindow {
    pub history: Tensor5,
    pub current: Tensor5,
    pub target: Tensor5,
    pub ignore_mask: Tensor5,
    pub orig_h: usize,
    pub orig_w: usize,
}

/// Smallest multiple of 8 that is >= v.
pub fn pad_to_8(v: usize) -> usize {
    v.div_ceil(8) * 8
}
