//! Discrete-token machinery.

mod decode;
mod entropy;
mod fsq;
mod grid;
mod masking;
mod vocab;

pub use decode::{
    confidence, cosine_keep_masked, decode_frame, decode_frame_traced, decode_rollout, softmax,
    Conditioning, DecodeError, DecodeTrace, FrameLogits, MaskSchedule, OraclePredictor,
    PredictError, Predictor, PredictorInput, UnmaskMode,
};
pub use entropy::{entropy_loss, EntropyError};
pub use fsq::{FsqError, FsqSpec};
pub use grid::{GridError, MaskSet, TokenGrid};
pub use masking::{
    apply_ar_mask, apply_ar_mask_at, apply_mlm_mask, apply_mlm_mask_with_u, ar_mask_probabilities,
    cosine_mask_prob, mask_with_probabilities, random_corruption, random_corruption_with_u,
    MaskingError,
};
pub use vocab::{FactorizedVocab, VocabError};
