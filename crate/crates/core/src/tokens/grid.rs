use thiserror::Error;

use super::FactorizedVocab;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GridError {
    #[error("grid expects {expected} tokens, got {got}")]
    Length { expected: usize, got: usize },
    #[error("history length {t_hist} exceeds frame count {frames}")]
    History { t_hist: usize, frames: usize },
    #[error("token {token} at flat index {index} is outside [0, {v}) and is not MASK")]
    Token { index: usize, token: u32, v: u32 },
    #[error("frame {frame} out of range for {frames} frames")]
    Frame { frame: usize, frames: usize },
}

/// `frames x (h*w)` token grid; `mask_token` (= vocabulary size) marks MASK.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenGrid {
    pub frames: usize,
    pub h: usize,
    pub w: usize,
    pub t_hist: usize,
    pub vocab: FactorizedVocab,
    pub tokens: Vec<u32>,
}

impl TokenGrid {
    pub fn new(
        frames: usize,
        h: usize,
        w: usize,
        t_hist: usize,
        vocab: FactorizedVocab,
        tokens: Vec<u32>,
    ) -> Result<Self, GridError> {
        let grid = Self {
            frames,
            h,
            w,
            t_hist,
            vocab,
            tokens,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn all_masked(
        frames: usize,
        h: usize,
        w: usize,
        t_hist: usize,
        vocab: FactorizedVocab,
    ) -> Self {
        Self {
            frames,
            h,
            w,
            t_hist,
            vocab,
            tokens: vec![vocab.mask_token(); frames * h * w],
        }
    }

    pub fn validate(&self) -> Result<(), GridError> {
        let expected = self.frames * self.spatial();
        if self.tokens.len() != expected {
            return Err(GridError::Length {
                expected,
                got: self.tokens.len(),
            });
        }
        if self.t_hist > self.frames {
            return Err(GridError::History {
                t_hist: self.t_hist,
                frames: self.frames,
            });
        }
        let mask = self.mask_token();
        if let Some((index, &token)) = self.tokens.iter().enumerate().find(|(_, &t)| t > mask) {
            return Err(GridError::Token {
                index,
                token,
                v: mask,
            });
        }
        Ok(())
    }

    pub fn spatial(&self) -> usize {
        self.h * self.w
    }

    pub fn mask_token(&self) -> u32 {
        self.vocab.mask_token()
    }

    pub fn index(&self, t: usize, s: usize) -> usize {
        t * self.spatial() + s
    }

    pub fn frame(&self, t: usize) -> &[u32] {
        let s = self.spatial();
        &self.tokens[t * s..(t + 1) * s]
    }

    pub fn frame_mut(&mut self, t: usize) -> &mut [u32] {
        let s = self.spatial();
        &mut self.tokens[t * s..(t + 1) * s]
    }

    pub fn is_masked(&self, t: usize, s: usize) -> bool {
        self.tokens[self.index(t, s)] == self.mask_token()
    }

    pub fn count_masked(&self) -> usize {
        let m = self.mask_token();
        self.tokens.iter().filter(|&&t| t == m).count()
    }
}

/// Positions replaced by MASK, `frames x spatial`, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskSet {
    pub frames: usize,
    pub spatial: usize,
    pub masked: Vec<bool>,
}

impl MaskSet {
    pub fn empty(frames: usize, spatial: usize) -> Self {
        Self {
            frames,
            spatial,
            masked: vec![false; frames * spatial],
        }
    }

    pub fn contains(&self, t: usize, s: usize) -> bool {
        self.masked[t * self.spatial + s]
    }

    pub fn insert(&mut self, t: usize, s: usize) {
        self.masked[t * self.spatial + s] = true;
    }

    pub fn len(&self) -> usize {
        self.masked.iter().filter(|&&m| m).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.masked.iter().any(|&m| m)
    }

    pub fn frame_count(&self, t: usize) -> usize {
        self.masked[t * self.spatial..(t + 1) * self.spatial]
            .iter()
            .filter(|&&m| m)
            .count()
    }

    /// `(t, s)` pairs in row-major order.
    pub fn positions(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.masked
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(move |(i, _)| (i / self.spatial, i % self.spatial))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> FactorizedVocab {
        FactorizedVocab::from_factors(4, 2).unwrap()
    }

    #[test]
    fn validation() {
        assert!(TokenGrid::new(2, 1, 2, 1, vocab(), vec![0, 15, 16, 3]).is_ok());
        assert!(matches!(
            TokenGrid::new(2, 1, 2, 1, vocab(), vec![0, 17, 16, 3]),
            Err(GridError::Token { index: 1, .. })
        ));
        assert!(matches!(
            TokenGrid::new(2, 1, 2, 3, vocab(), vec![0; 4]),
            Err(GridError::History { .. })
        ));
        assert!(matches!(
            TokenGrid::new(2, 1, 2, 0, vocab(), vec![0; 3]),
            Err(GridError::Length { .. })
        ));
    }

    #[test]
    fn mask_set_positions() {
        let mut m = MaskSet::empty(2, 3);
        m.insert(1, 2);
        m.insert(0, 1);
        assert_eq!(m.positions().collect::<Vec<_>>(), vec![(0, 1), (1, 2)]);
        assert_eq!(m.len(), 2);
        assert_eq!(m.frame_count(1), 1);
    }
}
