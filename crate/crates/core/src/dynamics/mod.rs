//! Forward-only spatial-temporal transformer over factorized video tokens.
//!
//! Each frame is a control token (action + joint embedding) followed by `S`
//! video tokens. Blocks apply bidirectional spatial attention within a frame,
//! causal temporal attention across frames at each position, then a GELU
//! feed-forward network. Heads emit `k * v_f` factored logits per video
//! position for video and contact, and joint angles from the control token.

mod checkpoint;
mod config;
mod loss;
mod model;
mod predictor;
mod tensor;

pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CheckpointError,
};
pub use config::{ConfigError, ModelConfig};
pub use loss::{
    factored_cross_entropy, loss_contact, loss_joint, loss_total, loss_video, LossError,
    LAMBDA_CONTACT, LAMBDA_JOINT,
};
pub use model::{
    attention, attention_with_probs, embed_inputs, forward, gelu, layer_norm, random_inputs,
    st_block, AttentionWeights, Block, ForwardError, ForwardOutput, LayerNorm, Linear, ModelState,
};
pub use predictor::ModelPredictor;
pub use tensor::Tensor;
