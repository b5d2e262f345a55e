//! Training-time corruption: cosine MLM masking, AR-style boundary masking,
//! and random per-digit token corruption.

use rand::Rng;
use thiserror::Error;

use super::{MaskSet, TokenGrid};

#[derive(Debug, Error, PartialEq)]
pub enum MaskingError {
    #[error("AR masking needs 1 <= t_hist < frames (t_hist={t_hist}, frames={frames})")]
    History { t_hist: usize, frames: usize },
    #[error("boundary frame {t_star} outside [{lo}, {hi}]")]
    Boundary { t_star: usize, lo: usize, hi: usize },
    #[error("corruption rate {0} outside [0, 1]")]
    Rate(f64),
    #[error("expected {expected} per-frame values, got {got}")]
    FrameCount { expected: usize, got: usize },
}

/// `cos(pi/2 * u)`, with `u = 1` mapped to exactly zero.
pub fn cosine_mask_prob(u: f64) -> f64 {
    if u >= 1.0 {
        0.0
    } else {
        (std::f64::consts::FRAC_PI_2 * u.max(0.0)).cos()
    }
}

/// Masks each position of frame `t` independently with probability `probs[t]`.
pub fn mask_with_probabilities<R: Rng + ?Sized>(
    grid: &TokenGrid,
    probs: &[f64],
    rng: &mut R,
) -> Result<(TokenGrid, MaskSet), MaskingError> {
    if probs.len() != grid.frames {
        return Err(MaskingError::FrameCount {
            expected: grid.frames,
            got: probs.len(),
        });
    }
    let s = grid.spatial();
    let mask_token = grid.mask_token();
    let mut out = grid.clone();
    let mut set = MaskSet::empty(grid.frames, s);
    for (t, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        for pos in 0..s {
            if rng.gen::<f64>() < p {
                out.tokens[t * s + pos] = mask_token;
                set.insert(t, pos);
            }
        }
    }
    Ok((out, set))
}

/// First frame eligible for MLM masking: never frame 0, never history.
fn first_maskable(grid: &TokenGrid) -> usize {
    grid.t_hist.max(1)
}

/// MLM masking with caller-supplied per-frame `u_t`; entries for
/// non-maskable frames are ignored.
pub fn apply_mlm_mask_with_u<R: Rng + ?Sized>(
    grid: &TokenGrid,
    u: &[f64],
    rng: &mut R,
) -> Result<(TokenGrid, MaskSet), MaskingError> {
    if u.len() != grid.frames {
        return Err(MaskingError::FrameCount {
            expected: grid.frames,
            got: u.len(),
        });
    }
    let start = first_maskable(grid);
    let probs: Vec<f64> = (0..grid.frames)
        .map(|t| {
            if t < start {
                0.0
            } else {
                cosine_mask_prob(u[t])
            }
        })
        .collect();
    mask_with_probabilities(grid, &probs, rng)
}

pub fn apply_mlm_mask<R: Rng + ?Sized>(grid: &TokenGrid, rng: &mut R) -> (TokenGrid, MaskSet) {
    let u: Vec<f64> = (0..grid.frames).map(|_| rng.gen::<f64>()).collect();
    apply_mlm_mask_with_u(grid, &u, rng).expect("u has one entry per frame")
}

/// Linear ramp from 0.5 at `t_star` to 1.0 at the last frame; zero before
/// `t_star`. A single corrupted frame gets 1.0.
pub fn ar_mask_probabilities(frames: usize, t_star: usize) -> Vec<f64> {
    (0..frames)
        .map(|t| {
            if t < t_star {
                0.0
            } else if frames - 1 == t_star {
                1.0
            } else {
                0.5 + 0.5 * (t - t_star) as f64 / (frames - 1 - t_star) as f64
            }
        })
        .collect()
}

pub fn apply_ar_mask_at<R: Rng + ?Sized>(
    grid: &TokenGrid,
    t_star: usize,
    rng: &mut R,
) -> Result<(TokenGrid, MaskSet), MaskingError> {
    if grid.t_hist < 1 || grid.t_hist >= grid.frames {
        return Err(MaskingError::History {
            t_hist: grid.t_hist,
            frames: grid.frames,
        });
    }
    if t_star < grid.t_hist || t_star >= grid.frames {
        return Err(MaskingError::Boundary {
            t_star,
            lo: grid.t_hist,
            hi: grid.frames - 1,
        });
    }
    mask_with_probabilities(grid, &ar_mask_probabilities(grid.frames, t_star), rng)
}

/// Draws `t* ~ Uniform{t_hist, ..., frames-1}` and masks from there on.
pub fn apply_ar_mask<R: Rng + ?Sized>(
    grid: &TokenGrid,
    rng: &mut R,
) -> Result<(TokenGrid, MaskSet, usize), MaskingError> {
    if grid.t_hist < 1 || grid.t_hist >= grid.frames {
        return Err(MaskingError::History {
            t_hist: grid.t_hist,
            frames: grid.frames,
        });
    }
    let t_star = rng.gen_range(grid.t_hist..grid.frames);
    let (g, m) = apply_ar_mask_at(grid, t_star, rng)?;
    Ok((g, m, t_star))
}

/// Replaces each factored digit with a uniform draw with probability
/// `r_max * u`. MASK entries are left alone.
pub fn random_corruption_with_u<R: Rng + ?Sized>(
    grid: &TokenGrid,
    r_max: f64,
    u: f64,
    rng: &mut R,
) -> Result<TokenGrid, MaskingError> {
    if !(0.0..=1.0).contains(&r_max) {
        return Err(MaskingError::Rate(r_max));
    }
    let rate = r_max * u;
    let vocab = grid.vocab;
    let mask_token = grid.mask_token();
    let mut out = grid.clone();
    if rate <= 0.0 {
        return Ok(out);
    }
    for tok in out.tokens.iter_mut() {
        if *tok == mask_token {
            continue;
        }
        let mut digits = vocab.decompose(*tok).expect("validated grid");
        for d in digits.iter_mut() {
            if rng.gen::<f64>() < rate {
                *d = rng.gen_range(0..vocab.factor_size());
            }
        }
        *tok = vocab.compose(&digits).expect("digits below factor size");
    }
    Ok(out)
}

/// Draws `u ~ Uniform(0, 1)` once for the whole grid.
pub fn random_corruption<R: Rng + ?Sized>(
    grid: &TokenGrid,
    r_max: f64,
    rng: &mut R,
) -> Result<TokenGrid, MaskingError> {
    let u = rng.gen::<f64>();
    random_corruption_with_u(grid, r_max, u, rng)
}
