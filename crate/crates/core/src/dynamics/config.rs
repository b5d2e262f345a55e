use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tokens::FactorizedVocab;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("invalid model config: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub layers: usize,
    pub hidden: usize,
    pub heads: usize,
    pub frames: usize,
    pub t_hist: usize,
    pub grid_h: usize,
    pub grid_w: usize,
    pub vocab: FactorizedVocab,
    pub n_joints: usize,
    pub mup: bool,
    pub qk_norm: bool,
    /// Only used in training; forward passes run with dropout off.
    pub dropout: f64,
}

impl ModelConfig {
    /// Desk-scale configuration used throughout the tests.
    pub fn toy() -> Self {
        Self {
            layers: 2,
            hidden: 32,
            heads: 4,
            frames: 4,
            t_hist: 2,
            grid_h: 4,
            grid_w: 4,
            vocab: FactorizedVocab::from_factors(16, 2).expect("16^2"),
            n_joints: 4,
            mup: false,
            qk_norm: true,
            dropout: 0.0,
        }
    }

    /// 24 layers, D=256, 8 heads, 16 frames of 32x32 tokens, 2x256 factors.
    pub fn full_scale() -> Self {
        Self {
            layers: 24,
            hidden: 256,
            heads: 8,
            frames: 16,
            t_hist: 8,
            grid_h: 32,
            grid_w: 32,
            vocab: FactorizedVocab::default_video(),
            n_joints: 4,
            mup: false,
            qk_norm: true,
            dropout: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.layers == 0 || self.hidden == 0 || self.heads == 0 {
            return bad("layers, hidden and heads must be positive");
        }
        if !self.hidden.is_multiple_of(self.heads) {
            return bad("hidden must be divisible by heads");
        }
        if self.frames == 0 || self.t_hist >= self.frames {
            return bad("need t_hist < frames");
        }
        if self.grid_h == 0 || self.grid_w == 0 {
            return bad("grid must be non-empty");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must be in [0, 1)");
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }

    pub fn ff_dim(&self) -> usize {
        4 * self.hidden
    }

    pub fn spatial(&self) -> usize {
        self.grid_h * self.grid_w
    }

    /// Tokens per frame including the control token.
    pub fn frame_len(&self) -> usize {
        self.spatial() + 1
    }

    /// Width of each factored head, `k * v_f`.
    pub fn head_width(&self) -> usize {
        self.vocab.factors() as usize * self.vocab.factor_size() as usize
    }

    /// `8 / d_k` under muP, else `1 / sqrt(d_k)`.
    pub fn attention_scale(&self) -> f64 {
        let dk = self.head_dim() as f64;
        if self.mup {
            8.0 / dk
        } else {
            1.0 / dk.sqrt()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scales() {
        let mut c = ModelConfig::toy();
        c.hidden = 256;
        c.heads = 4; // d_k = 64
        let plain = c.attention_scale();
        c.mup = true;
        assert_eq!(plain, 0.125);
        assert_eq!(c.attention_scale(), 0.125);
        c.heads = 8; // d_k = 32
        assert_eq!(c.attention_scale(), 0.25);
        c.mup = false;
        assert!((c.attention_scale() - 0.17677669529663687).abs() < 1e-15);
    }

    #[test]
    fn validation() {
        ModelConfig::toy().validate().unwrap();
        ModelConfig::full_scale().validate().unwrap();
        let mut c = ModelConfig::toy();
        c.heads = 3;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::toy();
        c.t_hist = 4;
        assert!(c.validate().is_err());
    }

    #[test]
    fn head_width_is_factored() {
        let c = ModelConfig::full_scale();
        assert_eq!(c.head_width(), 512);
        assert_eq!(c.ff_dim(), 1024);
        assert_eq!(c.head_dim(), 32);
    }
}
