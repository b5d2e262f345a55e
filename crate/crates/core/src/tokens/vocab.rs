use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum VocabError {
    #[error("factor size {v_f}^{k} does not equal vocabulary size {v}")]
    Inconsistent { v: u64, k: u32, v_f: u32 },
    #[error("need k >= 1 and v_f >= 2 (got k={k}, v_f={v_f})")]
    Degenerate { k: u32, v_f: u32 },
    #[error("token {z} is outside the vocabulary of size {v}")]
    TokenOutOfRange { z: u64, v: u64 },
    #[error("digit {digit} at position {pos} is not below the factor size {v_f}")]
    DigitOutOfRange { pos: usize, digit: u32, v_f: u32 },
    #[error("expected {k} digits, got {got}")]
    DigitCount { k: u32, got: usize },
}

/// Mixed-radix factorization `z = sum_i z_i * v_f^i` with `v_f^k = v`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawVocab", into = "RawVocab")]
pub struct FactorizedVocab {
    v: u64,
    k: u32,
    v_f: u32,
}

#[derive(Serialize, Deserialize)]
struct RawVocab {
    v_f: u32,
    k: u32,
}

impl TryFrom<RawVocab> for FactorizedVocab {
    type Error = VocabError;
    fn try_from(r: RawVocab) -> Result<Self, VocabError> {
        FactorizedVocab::from_factors(r.v_f, r.k)
    }
}

impl From<FactorizedVocab> for RawVocab {
    fn from(v: FactorizedVocab) -> Self {
        RawVocab { v_f: v.v_f, k: v.k }
    }
}

impl FactorizedVocab {
    pub fn new(v: u64, k: u32, v_f: u32) -> Result<Self, VocabError> {
        if k < 1 || v_f < 2 {
            return Err(VocabError::Degenerate { k, v_f });
        }
        match (v_f as u64).checked_pow(k) {
            Some(p) if p == v && v <= u32::MAX as u64 => Ok(Self { v, k, v_f }),
            _ => Err(VocabError::Inconsistent { v, k, v_f }),
        }
    }

    pub fn from_factors(v_f: u32, k: u32) -> Result<Self, VocabError> {
        if k < 1 || v_f < 2 {
            return Err(VocabError::Degenerate { k, v_f });
        }
        let v = (v_f as u64)
            .checked_pow(k)
            .ok_or(VocabError::Inconsistent {
                v: u64::MAX,
                k,
                v_f,
            })?;
        Self::new(v, k, v_f)
    }

    /// 65,536 tokens as 2 factors of 256.
    pub fn default_video() -> Self {
        Self {
            v: 65_536,
            k: 2,
            v_f: 256,
        }
    }

    pub fn size(&self) -> u64 {
        self.v
    }

    pub fn factors(&self) -> u32 {
        self.k
    }

    pub fn factor_size(&self) -> u32 {
        self.v_f
    }

    /// The MASK sentinel, one past the last valid token.
    pub fn mask_token(&self) -> u32 {
        self.v as u32
    }

    /// Digits, least significant first.
    pub fn decompose(&self, z: u32) -> Result<Vec<u32>, VocabError> {
        if z as u64 >= self.v {
            return Err(VocabError::TokenOutOfRange {
                z: z as u64,
                v: self.v,
            });
        }
        let mut rest = z;
        Ok((0..self.k)
            .map(|_| {
                let d = rest % self.v_f;
                rest /= self.v_f;
                d
            })
            .collect())
    }

    pub fn compose(&self, digits: &[u32]) -> Result<u32, VocabError> {
        if digits.len() != self.k as usize {
            return Err(VocabError::DigitCount {
                k: self.k,
                got: digits.len(),
            });
        }
        let mut z: u64 = 0;
        for (pos, &d) in digits.iter().enumerate().rev() {
            if d >= self.v_f {
                return Err(VocabError::DigitOutOfRange {
                    pos,
                    digit: d,
                    v_f: self.v_f,
                });
            }
            z = z * self.v_f as u64 + d as u64;
        }
        Ok(z as u32)
    }
}
