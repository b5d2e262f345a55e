use super::config::ModelConfig;
use super::model::{forward, ModelState};
use crate::tokens::{FrameLogits, PredictError, Predictor, PredictorInput};

/// Runs the full forward pass and returns the logits of the requested frame.
#[derive(Clone, Debug)]
pub struct ModelPredictor {
    pub cfg: ModelConfig,
    pub state: ModelState,
}

impl ModelPredictor {
    pub fn new(cfg: ModelConfig, state: ModelState) -> Self {
        Self { cfg, state }
    }
}

impl Predictor for ModelPredictor {
    fn predict(&self, input: &PredictorInput<'_>) -> Result<FrameLogits, PredictError> {
        if input.frame >= self.cfg.frames {
            return Err(PredictError::Failed(format!(
                "frame {} out of range",
                input.frame
            )));
        }
        let out = forward(input.grid, input.cond, &self.state, &self.cfg)
            .map_err(|e| PredictError::Failed(e.to_string()))?;
        Ok(FrameLogits {
            spatial: out.spatial,
            k: out.k,
            v_f: out.v_f,
            video: out.video_frame(input.frame).to_vec(),
            contact: Some(out.contact_frame(input.frame).to_vec()),
            joints: Some(out.joints_at(input.frame).to_vec()),
        })
    }
}
