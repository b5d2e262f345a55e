//! MaskGIT-style iterative decoding against a pluggable predictor.
//!
//! A frame starts fully masked. Each iteration asks the predictor for
//! factored logits, samples a token for every still-masked position, and
//! commits all but the `ceil(cos(pi/2 * (i+1)/N) * S)` least confident ones.
//! Committed tokens are never re-masked.

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{FactorizedVocab, TokenGrid};

#[derive(Debug, Error, PartialEq)]
pub enum PredictError {
    #[error("predictor failed: {0}")]
    Failed(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum DecodeError {
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error(transparent)]
    Predictor(#[from] PredictError),
    #[error("frame {frame} out of range for {frames} frames")]
    Frame { frame: usize, frames: usize },
    #[error("context frame {frame} still contains MASK tokens")]
    ContextMasked { frame: usize },
    #[error("predictor returned {got} video logits, expected {expected}")]
    LogitShape { expected: usize, got: usize },
    #[error("rollout of {n_future} frames from t_hist={t_hist} exceeds {frames} frames")]
    RolloutLength {
        t_hist: usize,
        n_future: usize,
        frames: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum UnmaskMode {
    /// Keep the least confident positions masked.
    #[default]
    Greedy,
    /// Keep a uniformly random subset masked.
    Random,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskSchedule {
    pub n_steps: usize,
    pub temperature: f64,
    pub mode: UnmaskMode,
}

impl Default for MaskSchedule {
    fn default() -> Self {
        Self {
            n_steps: 8,
            temperature: 1.0,
            mode: UnmaskMode::Greedy,
        }
    }
}

impl MaskSchedule {
    pub fn validate(&self) -> Result<(), DecodeError> {
        if self.n_steps < 1 {
            return Err(DecodeError::InvalidSchedule("n_steps must be >= 1".into()));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(DecodeError::InvalidSchedule(
                "temperature must be > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Positions left masked after iteration `i` of `n_steps`.
pub fn cosine_keep_masked(i: usize, n_steps: usize, spatial: usize) -> usize {
    if i + 1 >= n_steps {
        return 0;
    }
    let gamma = (std::f64::consts::FRAC_PI_2 * (i + 1) as f64 / n_steps as f64).cos();
    // The guard absorbs rounding when gamma * S is mathematically an integer.
    let n = (gamma * spatial as f64 - 1e-9).ceil();
    (n.max(0.0) as usize).min(spatial)
}

/// Per-frame conditioning: actions (`T x 3`) and joint angles (`T x N_j`).
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Conditioning {
    pub actions: Vec<[f64; 3]>,
    pub joints: Vec<Vec<f64>>,
}

impl Conditioning {
    pub fn zeros(frames: usize, n_joints: usize) -> Self {
        Self {
            actions: vec![[0.0; 3]; frames],
            joints: vec![vec![0.0; n_joints]; frames],
        }
    }
}

pub struct PredictorInput<'a> {
    /// Full grid with MASK sentinels.
    pub grid: &'a TokenGrid,
    /// Frame being decoded.
    pub frame: usize,
    pub cond: &'a Conditioning,
}

/// Factored logits for every position of one frame, laid out `S x k x v_f`.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameLogits {
    pub spatial: usize,
    pub k: usize,
    pub v_f: usize,
    pub video: Vec<f64>,
    pub contact: Option<Vec<f64>>,
    pub joints: Option<Vec<f64>>,
}

impl FrameLogits {
    pub fn video_factor(&self, s: usize, k: usize) -> &[f64] {
        let start = (s * self.k + k) * self.v_f;
        &self.video[start..start + self.v_f]
    }
}

pub trait Predictor {
    fn predict(&self, input: &PredictorInput<'_>) -> Result<FrameLogits, PredictError>;
}

impl<P: Predictor + ?Sized> Predictor for &P {
    fn predict(&self, input: &PredictorInput<'_>) -> Result<FrameLogits, PredictError> {
        (**self).predict(input)
    }
}

/// Emits one-hot-dominant logits for a fixed target grid.
#[derive(Clone, Debug)]
pub struct OraclePredictor {
    pub target: TokenGrid,
    /// Logit gap between the target digit and every other digit.
    pub margin: f64,
}

impl OraclePredictor {
    pub fn new(target: TokenGrid) -> Self {
        Self {
            target,
            margin: 1e4,
        }
    }
}

impl Predictor for OraclePredictor {
    fn predict(&self, input: &PredictorInput<'_>) -> Result<FrameLogits, PredictError> {
        let vocab = self.target.vocab;
        let (k, v_f) = (vocab.factors() as usize, vocab.factor_size() as usize);
        let s = self.target.spatial();
        if input.frame >= self.target.frames {
            return Err(PredictError::Failed(format!(
                "oracle has no frame {}",
                input.frame
            )));
        }
        let mut video = vec![-self.margin; s * k * v_f];
        for (pos, &tok) in self.target.frame(input.frame).iter().enumerate() {
            let digits = vocab
                .decompose(tok)
                .map_err(|e| PredictError::Failed(e.to_string()))?;
            for (f, d) in digits.into_iter().enumerate() {
                video[(pos * k + f) * v_f + d as usize] = 0.0;
            }
        }
        Ok(FrameLogits {
            spatial: s,
            k,
            v_f,
            video,
            contact: None,
            joints: None,
        })
    }
}

/// Numerically stable `softmax(logits / temperature)`.
pub fn softmax(logits: &[f64], temperature: f64) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits
        .iter()
        .map(|&l| ((l - max) / temperature).exp())
        .collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// `prod_k max_v softmax(l^(k))_v`.
pub fn confidence(logit_factors: &[&[f64]]) -> f64 {
    logit_factors
        .iter()
        .map(|l| softmax(l, 1.0).into_iter().fold(0.0, f64::max))
        .product()
}

fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let r: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if r < acc {
            return i;
        }
    }
    // r landed in the rounding gap above the cumulative sum.
    probs
        .iter()
        .rposition(|&p| p > 0.0)
        .unwrap_or(probs.len() - 1)
}

/// Per-iteration record of one decoded frame.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodeTrace {
    pub frame: usize,
    /// Masked positions left after each iteration.
    pub remaining_masked: Vec<usize>,
    /// Positions committed in each iteration, in commit order.
    pub committed: Vec<Vec<usize>>,
}

fn check_logits(
    logits: &FrameLogits,
    spatial: usize,
    vocab: &FactorizedVocab,
) -> Result<(), DecodeError> {
    let expected = spatial * vocab.factors() as usize * vocab.factor_size() as usize;
    if logits.video.len() != expected
        || logits.spatial != spatial
        || logits.k != vocab.factors() as usize
        || logits.v_f != vocab.factor_size() as usize
    {
        return Err(DecodeError::LogitShape {
            expected,
            got: logits.video.len(),
        });
    }
    Ok(())
}

pub fn decode_frame_traced<P: Predictor + ?Sized, R: Rng + ?Sized>(
    predictor: &P,
    context: &TokenGrid,
    frame: usize,
    cond: &Conditioning,
    schedule: &MaskSchedule,
    rng: &mut R,
) -> Result<(Vec<u32>, DecodeTrace), DecodeError> {
    schedule.validate()?;
    if frame >= context.frames {
        return Err(DecodeError::Frame {
            frame,
            frames: context.frames,
        });
    }
    let mask_token = context.mask_token();
    for t in 0..frame {
        if context.frame(t).contains(&mask_token) {
            return Err(DecodeError::ContextMasked { frame: t });
        }
    }

    let vocab = context.vocab;
    let s = context.spatial();
    let k = vocab.factors() as usize;
    let mut work = context.clone();
    work.frame_mut(frame).fill(mask_token);
    let mut trace = DecodeTrace {
        frame,
        remaining_masked: Vec::with_capacity(schedule.n_steps),
        committed: Vec::with_capacity(schedule.n_steps),
    };

    for i in 0..schedule.n_steps {
        let logits = predictor.predict(&PredictorInput {
            grid: &work,
            frame,
            cond,
        })?;
        check_logits(&logits, s, &vocab)?;

        let masked: Vec<usize> = (0..s).filter(|&p| work.is_masked(frame, p)).collect();
        let mut proposals = Vec::with_capacity(masked.len());
        for &pos in &masked {
            let mut digits = Vec::with_capacity(k);
            let mut factors = Vec::with_capacity(k);
            for f in 0..k {
                let l = logits.video_factor(pos, f);
                digits.push(sample_categorical(&softmax(l, schedule.temperature), rng) as u32);
                factors.push(l);
            }
            let token = vocab.compose(&digits).expect("sampled digits are in range");
            proposals.push((pos, token, confidence(&factors)));
        }

        let keep = cosine_keep_masked(i, schedule.n_steps, s).min(masked.len());
        let n_commit = masked.len() - keep;
        let commit: Vec<(usize, u32)> = match schedule.mode {
            UnmaskMode::Greedy => {
                // Highest confidence first; ties go to the lower flat index.
                proposals.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)));
                proposals[..n_commit]
                    .iter()
                    .map(|&(p, t, _)| (p, t))
                    .collect()
            }
            UnmaskMode::Random => {
                let mut stay = vec![false; proposals.len()];
                for idx in sample_indices(rng, proposals.len(), keep).into_iter() {
                    stay[idx] = true;
                }
                proposals
                    .iter()
                    .zip(&stay)
                    .filter(|(_, &st)| !st)
                    .map(|(&(p, t, _), _)| (p, t))
                    .collect()
            }
        };
        let row = work.frame_mut(frame);
        for &(pos, tok) in &commit {
            row[pos] = tok;
        }
        trace
            .committed
            .push(commit.iter().map(|&(p, _)| p).collect());
        trace.remaining_masked.push(keep);
    }
    debug_assert!(!work.frame(frame).contains(&mask_token));
    Ok((work.frame(frame).to_vec(), trace))
}

pub fn decode_frame<P: Predictor + ?Sized, R: Rng + ?Sized>(
    predictor: &P,
    context: &TokenGrid,
    frame: usize,
    cond: &Conditioning,
    schedule: &MaskSchedule,
    rng: &mut R,
) -> Result<Vec<u32>, DecodeError> {
    decode_frame_traced(predictor, context, frame, cond, schedule, rng).map(|(tokens, _)| tokens)
}

/// Decodes frames `t_hist .. t_hist + n_future` in order, feeding each
/// committed frame back as context.
pub fn decode_rollout<P: Predictor + ?Sized, R: Rng + ?Sized>(
    predictor: &P,
    context: &TokenGrid,
    n_future: usize,
    cond: &Conditioning,
    schedule: &MaskSchedule,
    rng: &mut R,
) -> Result<(TokenGrid, Vec<DecodeTrace>), DecodeError> {
    schedule.validate()?;
    if context.t_hist + n_future > context.frames {
        return Err(DecodeError::RolloutLength {
            t_hist: context.t_hist,
            n_future,
            frames: context.frames,
        });
    }
    let mut grid = context.clone();
    let mut traces = Vec::with_capacity(n_future);
    for t in context.t_hist..context.t_hist + n_future {
        let (tokens, trace) = decode_frame_traced(predictor, &grid, t, cond, schedule, rng)?;
        grid.frame_mut(t).copy_from_slice(&tokens);
        traces.push(trace);
    }
    Ok((grid, traces))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_rng;

    fn target(frames: usize, t_hist: usize) -> TokenGrid {
        let vocab = FactorizedVocab::from_factors(16, 2).unwrap();
        let tokens = (0..frames * 16)
            .map(|i| ((i * 97 + 13) % 256) as u32)
            .collect();
        TokenGrid::new(frames, 4, 4, t_hist, vocab, tokens).unwrap()
    }

    fn context_from(target: &TokenGrid) -> TokenGrid {
        let mut c = target.clone();
        for t in target.t_hist..target.frames {
            c.frame_mut(t).fill(target.mask_token());
        }
        c
    }

    #[test]
    fn schedule_counts() {
        assert_eq!(cosine_keep_masked(0, 1, 16), 0);
        let trace: Vec<usize> = (0..8).map(|i| cosine_keep_masked(i, 8, 16)).collect();
        assert_eq!(trace, vec![16, 15, 14, 12, 9, 7, 4, 0]);
        // gamma = 1/2 exactly at i+1 = 2N/3: ceil must not overshoot.
        assert_eq!(cosine_keep_masked(1, 3, 16), 8);
    }

    #[test]
    fn confidence_examples() {
        let u = vec![0.3; 16];
        assert!((confidence(&[&u, &u]) - 0.00390625).abs() < 1e-15);
        let mut peaked = vec![0.0; 16];
        peaked[3] = 1e3;
        assert!((confidence(&[&peaked, &u]) - 1.0 / 16.0).abs() < 1e-15);
        // max probs 0.5 and 0.4
        let a = [0.5f64.ln(), 0.25f64.ln(), 0.25f64.ln()];
        let b = [0.4f64.ln(), 0.3f64.ln(), 0.3f64.ln()];
        assert!((confidence(&[&a, &b]) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn confidence_shift_invariant() {
        let a = [0.1, -2.0, 3.5, 0.7];
        let shifted: Vec<f64> = a.iter().map(|x| x + 123.0).collect();
        let c1 = confidence(&[&a]);
        let c2 = confidence(&[&shifted]);
        assert!((c1 - c2).abs() < 1e-12);
        assert!(c1 > 0.0 && c1 <= 1.0);
    }

    #[test]
    fn oracle_recovers_frame_for_any_steps() {
        let tgt = target(3, 2);
        let ctx = context_from(&tgt);
        let oracle = OraclePredictor::new(tgt.clone());
        let cond = Conditioning::zeros(3, 4);
        for n_steps in [1, 2, 5, 8, 16] {
            let schedule = MaskSchedule {
                n_steps,
                ..Default::default()
            };
            let mut rng = seeded_rng(n_steps as u64);
            let (tokens, trace) =
                decode_frame_traced(&oracle, &ctx, 2, &cond, &schedule, &mut rng).unwrap();
            assert_eq!(tokens, tgt.frame(2));
            assert_eq!(trace.remaining_masked.len(), n_steps);
            assert_eq!(*trace.remaining_masked.last().unwrap(), 0);
        }
    }

    #[test]
    fn single_step_commits_everything() {
        let tgt = target(2, 1);
        let schedule = MaskSchedule {
            n_steps: 1,
            ..Default::default()
        };
        let mut rng = seeded_rng(0);
        let (_, trace) = decode_frame_traced(
            &OraclePredictor::new(tgt.clone()),
            &context_from(&tgt),
            1,
            &Conditioning::zeros(2, 4),
            &schedule,
            &mut rng,
        )
        .unwrap();
        assert_eq!(trace.committed[0].len(), 16);
        assert_eq!(trace.remaining_masked, vec![0]);
    }

    /// Confidence strictly increasing with position index.
    struct Ordered {
        vocab: FactorizedVocab,
    }

    impl Predictor for Ordered {
        fn predict(&self, input: &PredictorInput<'_>) -> Result<FrameLogits, PredictError> {
            let (k, v_f) = (
                self.vocab.factors() as usize,
                self.vocab.factor_size() as usize,
            );
            let s = input.grid.spatial();
            let mut video = vec![0.0; s * k * v_f];
            for pos in 0..s {
                video[pos * k * v_f] = pos as f64 * 0.5;
            }
            Ok(FrameLogits {
                spatial: s,
                k,
                v_f,
                video,
                contact: None,
                joints: None,
            })
        }
    }

    #[test]
    fn greedy_commits_in_confidence_order() {
        let tgt = target(2, 1);
        let ctx = context_from(&tgt);
        let schedule = MaskSchedule {
            n_steps: 8,
            temperature: 1.0,
            mode: UnmaskMode::Greedy,
        };
        let mut rng = seeded_rng(1);
        let (_, trace) = decode_frame_traced(
            &Ordered { vocab: tgt.vocab },
            &ctx,
            1,
            &Conditioning::zeros(2, 4),
            &schedule,
            &mut rng,
        )
        .unwrap();
        let order: Vec<usize> = trace.committed.concat();
        let want: Vec<usize> = (0..16).rev().collect();
        assert_eq!(order, want);
    }

    #[test]
    fn random_mode_still_follows_schedule() {
        let tgt = target(2, 1);
        let schedule = MaskSchedule {
            n_steps: 8,
            temperature: 1.0,
            mode: UnmaskMode::Random,
        };
        let mut rng = seeded_rng(2);
        let (tokens, trace) = decode_frame_traced(
            &OraclePredictor::new(tgt.clone()),
            &context_from(&tgt),
            1,
            &Conditioning::zeros(2, 4),
            &schedule,
            &mut rng,
        )
        .unwrap();
        assert_eq!(tokens, tgt.frame(1));
        assert_eq!(trace.remaining_masked, vec![16, 15, 14, 12, 9, 7, 4, 0]);
    }

    #[test]
    fn rollout_recovers_target_and_keeps_history() {
        let tgt = target(4, 2);
        let ctx = context_from(&tgt);
        let mut rng = seeded_rng(3);
        let (out, traces) = decode_rollout(
            &OraclePredictor::new(tgt.clone()),
            &ctx,
            2,
            &Conditioning::zeros(4, 4),
            &MaskSchedule::default(),
            &mut rng,
        )
        .unwrap();
        assert_eq!(out, tgt);
        assert_eq!(traces.len(), 2);
        let (same, _) = decode_rollout(
            &OraclePredictor::new(tgt.clone()),
            &ctx,
            0,
            &Conditioning::zeros(4, 4),
            &MaskSchedule::default(),
            &mut rng,
        )
        .unwrap();
        assert_eq!(same, ctx);
    }

    #[test]
    fn rejects_bad_inputs() {
        let tgt = target(3, 1);
        let ctx = context_from(&tgt);
        let oracle = OraclePredictor::new(tgt.clone());
        let cond = Conditioning::zeros(3, 4);
        let mut rng = seeded_rng(0);
        let bad = MaskSchedule {
            n_steps: 0,
            ..Default::default()
        };
        assert!(matches!(
            decode_frame(&oracle, &ctx, 1, &cond, &bad, &mut rng),
            Err(DecodeError::InvalidSchedule(_))
        ));
        assert!(matches!(
            decode_frame(&oracle, &ctx, 2, &cond, &MaskSchedule::default(), &mut rng),
            Err(DecodeError::ContextMasked { frame: 1 })
        ));
        assert!(matches!(
            decode_rollout(&oracle, &ctx, 3, &cond, &MaskSchedule::default(), &mut rng),
            Err(DecodeError::RolloutLength { .. })
        ));
    }

    struct Failing;
    impl Predictor for Failing {
        fn predict(&self, _: &PredictorInput<'_>) -> Result<FrameLogits, PredictError> {
            Err(PredictError::Failed("boom".into()))
        }
    }

    #[test]
    fn predictor_failure_propagates() {
        let tgt = target(2, 1);
        let mut rng = seeded_rng(0);
        let err = decode_frame(
            &Failing,
            &context_from(&tgt),
            1,
            &Conditioning::zeros(2, 4),
            &MaskSchedule::default(),
            &mut rng,
        )
        .unwrap_err();
        assert_eq!(
            err,
            DecodeError::Predictor(PredictError::Failed("boom".into()))
        );
    }
}
