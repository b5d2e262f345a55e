//! Collision gate for the planning loop.
//!
//! Each step samples a candidate action, asks a [`RolloutProvider`] for the
//! predicted frames, and submits them to a [`Judge`]. A candidate is executed
//! only if the judge reports no likely collision. After `max_attempts`
//! rejections the gate returns the retreat action instead. Judge and rollout
//! failures count as rejections.

mod judge;
mod prompt;
mod verdict;

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use judge::{
    HttpJudge, HttpJudgeConfig, Judge, JudgeError, JudgeReply, MockEntry, MockJudge, MockScript,
};
pub use prompt::{
    build_prompt, Attachment, JudgeRequest, PromptError, ATTACHMENT_LABELS, PROMPT_TEMPLATE,
};
pub use verdict::{parse_verdict, JudgeVerdict, VerdictError, MAX_COLLISION_FRAME};

use crate::excitation::{ExcitationConfig, ExcitationError, OuParams, OuProcess};
use crate::image::{tile_row, RgbImage};
use crate::splat::{render_splats, CameraModel, ContactRecord, SplatConfig, Vec3};

/// Commanded velocity in joystick units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CandidateAction {
    pub v: Vec3,
}

impl CandidateAction {
    pub fn new(v: Vec3) -> Self {
        Self { v }
    }

    pub fn is_finite(&self) -> bool {
        self.v.iter().all(|x| x.is_finite())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum GateError {
    #[error("invalid gate config: {0}")]
    Config(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GateConfig {
    pub max_attempts: usize,
    /// Executed when every attempt is rejected. Upward is -Z.
    pub retreat_action: CandidateAction,
    /// When set, a collision verdict only rejects if its confidence reaches
    /// this value. Unset means the flag alone decides.
    pub confidence_threshold: Option<f64>,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            retreat_action: CandidateAction::new([0.0, 0.0, -1.0]),
            confidence_threshold: None,
        }
    }
}

impl GateConfig {
    pub fn validate(&self) -> Result<(), GateError> {
        if self.max_attempts == 0 {
            return Err(GateError::Config("max_attempts must be at least 1".into()));
        }
        if !self.retreat_action.is_finite() {
            return Err(GateError::Config("retreat_action must be finite".into()));
        }
        if let Some(t) = self.confidence_threshold {
            if !(0.0..=1.0).contains(&t) {
                return Err(GateError::Config(
                    "confidence_threshold must lie in [0, 1]".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn rejects(&self, v: &JudgeVerdict) -> bool {
        v.collision_likely && self.confidence_threshold.is_none_or(|t| v.confidence >= t)
    }
}

pub trait ActionSampler {
    fn sample(&mut self) -> CandidateAction;
}

impl<S: ActionSampler + ?Sized> ActionSampler for &mut S {
    fn sample(&mut self) -> CandidateAction {
        (**self).sample()
    }
}

/// Candidates drawn from the excitation OU process, post-processed with
/// min-norm and deadzone.
pub struct OuSampler {
    process: OuProcess,
    cfg: ExcitationConfig,
}

impl OuSampler {
    pub fn new(params: OuParams, cfg: ExcitationConfig) -> Result<Self, ExcitationError> {
        cfg.validate()?;
        Ok(Self {
            process: OuProcess::new(params)?,
            cfg,
        })
    }
}

impl ActionSampler for OuSampler {
    fn sample(&mut self) -> CandidateAction {
        CandidateAction::new(self.process.sample_command(&self.cfg))
    }
}

/// Returns the given actions in order, then repeats the last one.
pub struct ScriptedSampler {
    actions: Vec<CandidateAction>,
    next: usize,
}

impl ScriptedSampler {
    /// # Panics
    /// If `actions` is empty.
    pub fn new(actions: Vec<CandidateAction>) -> Self {
        assert!(
            !actions.is_empty(),
            "scripted sampler needs at least one action"
        );
        Self { actions, next: 0 }
    }
}

impl ActionSampler for ScriptedSampler {
    fn sample(&mut self) -> CandidateAction {
        let a = self.actions[self.next.min(self.actions.len() - 1)];
        self.next += 1;
        a
    }
}

/// Tiled images handed to the judge.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rollout {
    pub history: RgbImage,
    pub future: RgbImage,
    pub contact: RgbImage,
}

pub trait RolloutProvider {
    fn rollout(&mut self, step: usize, action: &CandidateAction) -> Result<Rollout, String>;
}

impl<R: RolloutProvider + ?Sized> RolloutProvider for &mut R {
    fn rollout(&mut self, step: usize, action: &CandidateAction) -> Result<Rollout, String> {
        (**self).rollout(step, action)
    }
}

/// Deterministic stand-in for the world model. RGB frames are flat shades
/// with a marker drifting along the action; contact frames are splat renders
/// of a single contact moving with the action.
#[derive(Clone, Debug)]
pub struct SyntheticRollout {
    pub camera: CameraModel,
    pub splat: SplatConfig,
    pub history_frames: usize,
    pub future_frames: usize,
    /// End-effector start point in world coordinates.
    pub p0: Vec3,
    pub dt: f64,
    pub v_scale: f64,
}

impl Default for SyntheticRollout {
    fn default() -> Self {
        Self {
            // Looking straight down from 0.6 m above the workspace center.
            camera: CameraModel {
                c: [0.5, 0.0, 0.6],
                rotation_cw: [0.0, 0.0, -1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0],
                fx: 60.0,
                fy: 60.0,
                cx: 32.0,
                cy: 24.0,
                width: 64,
                height: 48,
                x_min: 0.05,
            },
            splat: SplatConfig::default(),
            history_frames: 4,
            future_frames: (MAX_COLLISION_FRAME + 1) as usize,
            p0: [0.5, 0.0, 0.1],
            dt: 0.1,
            v_scale: 0.25,
        }
    }
}

impl SyntheticRollout {
    fn shade_frame(&self, shade: u8, marker: Option<(i64, i64)>) -> RgbImage {
        let (w, h) = (self.camera.width, self.camera.height);
        let mut img = RgbImage::new(w, h);
        img.data.fill(shade);
        if let Some((u, v)) = marker {
            for dv in -2..=2 {
                for du in -2..=2 {
                    let (x, y) = (u + du, v + dv);
                    if (0..w as i64).contains(&x) && (0..h as i64).contains(&y) {
                        img.put_pixel(x as usize, y as usize, [230, 60, 40]);
                    }
                }
            }
        }
        img
    }
}

impl RolloutProvider for SyntheticRollout {
    fn rollout(&mut self, step: usize, action: &CandidateAction) -> Result<Rollout, String> {
        let base = (40 + (step % 8) * 10) as u8;
        let history: Vec<RgbImage> = (0..self.history_frames)
            .map(|i| self.shade_frame(base + i as u8, None))
            .collect();
        let mut future = Vec::with_capacity(self.future_frames);
        let mut contact = Vec::with_capacity(self.future_frames);
        let mag = action.v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for k in 0..self.future_frames {
            let s = (k + 1) as f64 * self.dt * self.v_scale;
            let p = [
                self.p0[0] + s * action.v[0],
                self.p0[1] + s * action.v[1],
                self.p0[2] + s * action.v[2],
            ];
            let cam = crate::splat::world_to_camera(p, &self.camera);
            let marker = crate::splat::project(cam, &self.camera)
                .ok()
                .map(|(u, v)| crate::splat::pixel_center(u, v));
            future.push(self.shade_frame(base + self.history_frames as u8, marker));
            let rec = ContactRecord {
                p,
                f: [10.0 * action.v[0], 10.0 * action.v[1], 10.0 * action.v[2]],
            };
            let contacts = if mag > 0.0 { vec![rec] } else { vec![] };
            let img =
                render_splats(&contacts, &self.camera, &self.splat).map_err(|e| e.to_string())?;
            contact.push(img.to_rgb8());
        }
        Ok(Rollout {
            history: tile_row(&history).map_err(|e| e.to_string())?,
            future: tile_row(&future).map_err(|e| e.to_string())?,
            contact: tile_row(&contact).map_err(|e| e.to_string())?,
        })
    }
}

/// One line of the attempt log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttemptRecord {
    pub step: usize,
    pub attempt: usize,
    pub action: CandidateAction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<JudgeVerdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub latency_ms: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GateOutcome {
    pub step: usize,
    pub executed: CandidateAction,
    pub retreated: bool,
    pub attempts: Vec<AttemptRecord>,
}

/// Runs one gated planning step.
pub fn gate_step<S, R, J>(
    step: usize,
    sampler: &mut S,
    rollout: &mut R,
    judge: &mut J,
    cfg: &GateConfig,
) -> Result<GateOutcome, GateError>
where
    S: ActionSampler + ?Sized,
    R: RolloutProvider + ?Sized,
    J: Judge + ?Sized,
{
    cfg.validate()?;
    let mut attempts = Vec::with_capacity(cfg.max_attempts);
    for attempt in 0..cfg.max_attempts {
        let action = sampler.sample();
        let mut record = AttemptRecord {
            step,
            attempt,
            action,
            verdict: None,
            error: None,
            latency_ms: 0,
        };
        let request = if action.is_finite() {
            rollout
                .rollout(step, &action)
                .map_err(|e| format!("rollout: {e}"))
                .and_then(|r| {
                    build_prompt(Some(&r.history), Some(&r.future), Some(&r.contact))
                        .map_err(|e| format!("prompt: {e}"))
                })
        } else {
            Err("non-finite candidate action".to_string())
        };
        let accepted = match request {
            Err(e) => {
                record.error = Some(e);
                false
            }
            Ok(req) => {
                let reply = judge.judge(&req);
                record.latency_ms = reply.latency_ms;
                match reply.result {
                    Ok(v) => {
                        let ok = !cfg.rejects(&v);
                        record.verdict = Some(v);
                        ok
                    }
                    Err(e) => {
                        record.error = Some(format!("judge: {e}"));
                        false
                    }
                }
            }
        };
        attempts.push(record);
        if accepted {
            return Ok(GateOutcome {
                step,
                executed: action,
                retreated: false,
                attempts,
            });
        }
    }
    Ok(GateOutcome {
        step,
        executed: cfg.retreat_action,
        retreated: true,
        attempts,
    })
}

pub fn write_attempt_log<W: Write>(mut w: W, records: &[AttemptRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_attempt_log(text: &str) -> Result<Vec<AttemptRecord>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}

/// Judge and sampler that reproduce a logged run.
pub fn replay_components(records: &[AttemptRecord]) -> Option<(ScriptedSampler, MockJudge)> {
    if records.is_empty() {
        return None;
    }
    let actions = records.iter().map(|r| r.action).collect();
    let script = records
        .iter()
        .map(|r| match (&r.verdict, &r.error) {
            (Some(v), _) => MockEntry::Verdict(v.clone()),
            (None, e) => MockEntry::Error(e.clone().unwrap_or_default()),
        })
        .collect();
    Some((ScriptedSampler::new(actions), MockJudge::new(script).ok()?))
}
