//! Finite-scalar quantization index math.
//!
//! Channel `c` has `l_c` levels placed uniformly on `[-1, 1]` at
//! `-1 + 2j/(l_c - 1)`. The per-channel level ranks form a mixed-radix
//! index with channel 0 as the least significant digit.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FsqError {
    #[error("FSQ needs at least one channel")]
    NoChannels,
    #[error("channel {channel} has {levels} levels; need at least 2")]
    TooFewLevels { channel: usize, levels: u32 },
    #[error("codebook size overflows u32")]
    Overflow,
    #[error("latent has {got} channels, spec has {expected}")]
    ChannelCount { expected: usize, got: usize },
    #[error("index {index} outside codebook of size {size}")]
    IndexOutOfRange { index: u32, size: u32 },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FsqSpec {
    levels: Vec<u32>,
}

impl FsqSpec {
    pub fn new(levels: Vec<u32>) -> Result<Self, FsqError> {
        if levels.is_empty() {
            return Err(FsqError::NoChannels);
        }
        let mut size: u32 = 1;
        for (channel, &l) in levels.iter().enumerate() {
            if l < 2 {
                return Err(FsqError::TooFewLevels { channel, levels: l });
            }
            size = size.checked_mul(l).ok_or(FsqError::Overflow)?;
        }
        Ok(Self { levels })
    }

    /// Six channels of four levels: a 4096-entry codebook.
    pub fn desk_default() -> Self {
        Self { levels: vec![4; 6] }
    }

    pub fn levels(&self) -> &[u32] {
        &self.levels
    }

    pub fn channels(&self) -> usize {
        self.levels.len()
    }

    pub fn codebook_size(&self) -> u32 {
        self.levels.iter().product()
    }

    fn level_value(l: u32, j: u32) -> f64 {
        -1.0 + 2.0 * j as f64 / (l - 1) as f64
    }

    /// Clamp to `[-1, 1]`, snap to the nearest level, compose the ranks.
    pub fn quantize(&self, latent: &[f64]) -> Result<u32, FsqError> {
        if latent.len() != self.levels.len() {
            return Err(FsqError::ChannelCount {
                expected: self.levels.len(),
                got: latent.len(),
            });
        }
        let mut index: u32 = 0;
        for (&x, &l) in latent.iter().zip(&self.levels).rev() {
            let scaled = (x.clamp(-1.0, 1.0) + 1.0) * (l - 1) as f64 / 2.0;
            let digit = (scaled.round() as u32).min(l - 1);
            index = index * l + digit;
        }
        Ok(index)
    }

    /// Level centers for `index`.
    pub fn dequantize(&self, index: u32) -> Result<Vec<f64>, FsqError> {
        let size = self.codebook_size();
        if index >= size {
            return Err(FsqError::IndexOutOfRange { index, size });
        }
        let mut rest = index;
        Ok(self
            .levels
            .iter()
            .map(|&l| {
                let d = rest % l;
                rest /= l;
                Self::level_value(l, d)
            })
            .collect())
    }
}
