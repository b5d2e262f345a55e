use thiserror::Error;

use crate::tokens::{FactorizedVocab, MaskSet, VocabError};

pub const LAMBDA_CONTACT: f64 = 2.0;
pub const LAMBDA_JOINT: f64 = 1.0;

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("logit tensor has {got} values, expected {want}")]
    LogitShape { got: usize, want: usize },
    #[error("target has {got} tokens, mask covers {want}")]
    TargetShape { got: usize, want: usize },
    #[error("prediction and target shapes differ")]
    JointShape,
    #[error(transparent)]
    Vocab(#[from] VocabError),
}

/// Sum over factors of `logsumexp(l_k) - l_k[z_k]` for one position.
/// `logits` holds `k * v_f` values, factor-major.
pub fn factored_cross_entropy(
    logits: &[f64],
    target: u32,
    vocab: &FactorizedVocab,
) -> Result<f64, LossError> {
    let v_f = vocab.factor_size() as usize;
    let want = vocab.factors() as usize * v_f;
    if logits.len() != want {
        return Err(LossError::LogitShape {
            got: logits.len(),
            want,
        });
    }
    let digits = vocab.decompose(target)?;
    Ok(digits
        .iter()
        .zip(logits.chunks(v_f))
        .map(|(&d, l)| {
            let max = l.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + l.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            lse - l[d as usize]
        })
        .sum())
}

fn masked_factored_ce(
    logits: &[f64],
    targets: &[u32],
    mask: &MaskSet,
    vocab: &FactorizedVocab,
) -> Result<f64, LossError> {
    let cells = mask.frames * mask.spatial;
    if targets.len() != cells {
        return Err(LossError::TargetShape {
            got: targets.len(),
            want: cells,
        });
    }
    let width = vocab.factors() as usize * vocab.factor_size() as usize;
    if logits.len() != cells * width {
        return Err(LossError::LogitShape {
            got: logits.len(),
            want: cells * width,
        });
    }
    if mask.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (t, s) in mask.positions() {
        let i = t * mask.spatial + s;
        total += factored_cross_entropy(&logits[i * width..(i + 1) * width], targets[i], vocab)?;
    }
    Ok(total / mask.len() as f64)
}

/// Mean over masked positions of the factored cross-entropy. `logits` is
/// `T x S x k x v_f`, `targets` is `T x S`. An empty mask yields 0.
pub fn loss_video(
    logits: &[f64],
    targets: &[u32],
    mask: &MaskSet,
    vocab: &FactorizedVocab,
) -> Result<f64, LossError> {
    masked_factored_ce(logits, targets, mask, vocab)
}

/// Same contract as [`loss_video`], against contact tokens.
pub fn loss_contact(
    logits: &[f64],
    targets: &[u32],
    mask: &MaskSet,
    vocab: &FactorizedVocab,
) -> Result<f64, LossError> {
    masked_factored_ce(logits, targets, mask, vocab)
}

/// Mean over frames of the squared L2 joint error.
pub fn loss_joint(pred: &[Vec<f64>], target: &[Vec<f64>]) -> Result<f64, LossError> {
    if pred.len() != target.len() || pred.iter().zip(target).any(|(p, t)| p.len() != t.len()) {
        return Err(LossError::JointShape);
    }
    if pred.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = pred
        .iter()
        .zip(target)
        .map(|(p, t)| p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .sum();
    Ok(sum / pred.len() as f64)
}

pub fn loss_total(video: f64, contact: f64, joint: f64) -> f64 {
    video + LAMBDA_CONTACT * contact + LAMBDA_JOINT * joint
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> FactorizedVocab {
        FactorizedVocab::from_factors(16, 2).unwrap()
    }

    fn full_mask(frames: usize, spatial: usize) -> MaskSet {
        let mut m = MaskSet::empty(frames, spatial);
        for t in 0..frames {
            for s in 0..spatial {
                m.insert(t, s);
            }
        }
        m
    }

    #[test]
    fn uniform_logits_give_k_ln_vf() {
        let v = vocab();
        let targets: Vec<u32> = (0..8).map(|i| i * 31).collect();
        let logits = vec![0.0; 8 * 32];
        let l = loss_video(&logits, &targets, &full_mask(2, 4), &v).unwrap();
        assert!((l - 2.0 * 16f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn one_hot_logits_give_near_zero() {
        let v = vocab();
        let targets: Vec<u32> = vec![0, 17, 255, 128];
        let mut logits = vec![-1e4; 4 * 32];
        for (i, &z) in targets.iter().enumerate() {
            logits[i * 32 + (z % 16) as usize] = 0.0;
            logits[i * 32 + 16 + (z / 16) as usize] = 0.0;
        }
        let l = loss_contact(&logits, &targets, &full_mask(1, 4), &v).unwrap();
        assert!(l.abs() < 1e-12);
    }

    #[test]
    fn only_masked_positions_count() {
        let v = vocab();
        let targets = vec![0u32; 4];
        let mut logits = vec![0.0; 4 * 32];
        // Position 1 is perfectly predicted, position 0 uniform.
        logits[32..64].fill(-1e4);
        logits[32] = 0.0;
        logits[48] = 0.0;
        let mut m = MaskSet::empty(1, 4);
        m.insert(0, 1);
        assert!(loss_video(&logits, &targets, &m, &v).unwrap().abs() < 1e-12);
        m.insert(0, 0);
        let l = loss_video(&logits, &targets, &m, &v).unwrap();
        assert!((l - 16f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn empty_mask_is_zero() {
        let v = vocab();
        assert_eq!(
            loss_video(&[0.0; 32], &[3], &MaskSet::empty(1, 1), &v).unwrap(),
            0.0
        );
    }

    #[test]
    fn shape_errors() {
        let v = vocab();
        assert!(matches!(
            loss_video(&[0.0; 31], &[3], &full_mask(1, 1), &v),
            Err(LossError::LogitShape { .. })
        ));
        assert!(matches!(
            loss_video(&[0.0; 32], &[3, 4], &full_mask(1, 1), &v),
            Err(LossError::TargetShape { .. })
        ));
        assert_eq!(loss_joint(&[vec![0.0]], &[]), Err(LossError::JointShape));
    }

    #[test]
    fn joint_loss_examples() {
        let z = vec![vec![0.0; 4]; 3];
        assert_eq!(loss_joint(&z, &z).unwrap(), 0.0);
        assert_eq!(
            loss_joint(&[vec![1.0, 0.0, 0.0, 0.0]], &[vec![0.0; 4]]).unwrap(),
            1.0
        );
        let p = vec![vec![0.3, -0.2, 0.1, 0.5], vec![1.0, 2.0, -1.0, 0.0]];
        let p2: Vec<Vec<f64>> = p
            .iter()
            .map(|r| r.iter().map(|v| 2.0 * v).collect())
            .collect();
        let a = loss_joint(&p, &z[..2]).unwrap();
        let b = loss_joint(&p2, &z[..2]).unwrap();
        assert!((b - 4.0 * a).abs() < 1e-12);
    }

    #[test]
    fn total_loss_weights() {
        assert_eq!(loss_total(1.0, 0.0, 0.0), 1.0);
        assert_eq!(loss_total(0.0, 1.0, 0.0), 2.0);
        assert_eq!(loss_total(1.0, 1.0, 1.0), 4.0);
    }
}
