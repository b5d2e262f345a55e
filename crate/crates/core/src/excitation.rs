//! Joystick excitation from a 3D Ornstein-Uhlenbeck process.
//!
//! Each step runs: Euler-Maruyama OU update, minimum-norm rescale, per-axis
//! deadzone, then a workspace-clipped position integration. The OU state
//! itself is never overwritten by the post-processing; only the emitted
//! command is.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{seeded_rng, standard_normal3, DkRng, RNG_IDENTITY};
use crate::splat::Vec3;

/// Episode lengths accepted by the trajectory exporter.
pub const EPISODE_HORIZON_RANGE: std::ops::RangeInclusive<usize> = 300..=600;

#[derive(Debug, Error, PartialEq)]
pub enum ExcitationError {
    #[error("invalid OU parameters: {0}")]
    InvalidParams(String),
    #[error("invalid excitation config: {0}")]
    InvalidConfig(String),
    #[error("start position {p0:?} lies outside the workspace")]
    StartOutsideWorkspace { p0: Vec3 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OuParams {
    /// Mean-reversion rate (1/s).
    pub theta: f64,
    pub mu: Vec3,
    pub sigma: f64,
    /// Step (s).
    pub dt: f64,
    pub seed: u64,
}

impl Default for OuParams {
    fn default() -> Self {
        Self {
            theta: 2.0,
            mu: [0.0; 3],
            sigma: 1.5,
            dt: 0.02,
            seed: 0,
        }
    }
}

impl OuParams {
    pub fn validate(&self) -> Result<(), ExcitationError> {
        let bad = |m: &str| Err(ExcitationError::InvalidParams(m.to_string()));
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            return bad("theta must be positive");
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be positive");
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad("sigma must be non-negative");
        }
        if !self.mu.iter().all(|v| v.is_finite()) {
            return bad("mu must be finite");
        }
        Ok(())
    }

    /// Stationary per-axis variance of the continuous process, `sigma^2 / (2 theta)`.
    pub fn stationary_variance(&self) -> f64 {
        self.sigma * self.sigma / (2.0 * self.theta)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OuState {
    pub x: Vec3,
    pub step_index: u64,
}

impl OuState {
    pub fn at(x: Vec3) -> Self {
        Self { x, step_index: 0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Workspace {
    pub lo: Vec3,
    pub hi: Vec3,
}

impl Workspace {
    pub fn contains(&self, p: Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.lo[i] && p[i] <= self.hi[i])
    }

    pub fn clip(&self, p: Vec3) -> Vec3 {
        [
            p[0].clamp(self.lo[0], self.hi[0]),
            p[1].clamp(self.lo[1], self.hi[1]),
            p[2].clamp(self.lo[2], self.hi[2]),
        ]
    }

    pub fn center(&self) -> Vec3 {
        [
            0.5 * (self.lo[0] + self.hi[0]),
            0.5 * (self.lo[1] + self.hi[1]),
            0.5 * (self.lo[2] + self.hi[2]),
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExcitationConfig {
    pub m_min: f64,
    pub epsilon: f64,
    /// Meters per joystick unit per second.
    pub v_scale: f64,
    pub workspace: Workspace,
    pub horizon: usize,
}

impl Default for ExcitationConfig {
    fn default() -> Self {
        Self {
            m_min: 0.3,
            epsilon: 0.1,
            v_scale: 0.25,
            workspace: Workspace {
                lo: [0.2, -0.4, 0.05],
                hi: [0.8, 0.4, 0.6],
            },
            horizon: 400,
        }
    }
}

impl ExcitationConfig {
    pub fn validate(&self) -> Result<(), ExcitationError> {
        let bad = |m: &str| Err(ExcitationError::InvalidConfig(m.to_string()));
        if !(self.m_min > 0.0 && self.m_min.is_finite()) {
            return bad("m_min must be positive");
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return bad("epsilon must be non-negative");
        }
        if !self.v_scale.is_finite() {
            return bad("v_scale must be finite");
        }
        let ws = &self.workspace;
        if !(0..3).all(|i| ws.lo[i].is_finite() && ws.hi[i].is_finite() && ws.lo[i] <= ws.hi[i]) {
            return bad("workspace needs finite lo <= hi");
        }
        if self.horizon == 0 {
            return bad("horizon must be at least 1");
        }
        Ok(())
    }
}

/// One Euler-Maruyama step with externally supplied standard normals.
pub fn step_ou(state: &OuState, params: &OuParams, noise: Vec3) -> OuState {
    let diffusion = params.sigma * params.dt.sqrt();
    let mut x = [0.0; 3];
    for i in 0..3 {
        x[i] = state.x[i]
            + params.theta * (params.mu[i] - state.x[i]) * params.dt
            + diffusion * noise[i];
    }
    OuState {
        x,
        step_index: state.step_index + 1,
    }
}

/// Rescales `x` so its norm is at least `m_min`; the zero vector becomes
/// `fallback_dir * m_min`.
pub fn enforce_min_norm(x: Vec3, m_min: f64, fallback_dir: Vec3) -> Vec3 {
    let m = crate::splat::norm3(x);
    if m == 0.0 {
        [
            fallback_dir[0] * m_min,
            fallback_dir[1] * m_min,
            fallback_dir[2] * m_min,
        ]
    } else if m < m_min {
        let s = m_min / m;
        [x[0] * s, x[1] * s, x[2] * s]
    } else {
        x
    }
}

/// Zeroes components with `|x_i| < epsilon`; the threshold itself is kept.
pub fn apply_deadzone(x: Vec3, epsilon: f64) -> Vec3 {
    x.map(|v| if v.abs() < epsilon { 0.0 } else { v })
}

pub fn integrate_position(p: Vec3, x: Vec3, cfg: &ExcitationConfig, dt: f64) -> Vec3 {
    let step = cfg.v_scale * dt;
    cfg.workspace
        .clip([p[0] + step * x[0], p[1] + step * x[1], p[2] + step * x[2]])
}

/// Draws a uniformly random unit vector from the stream.
pub fn random_unit_vector<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    loop {
        let v = standard_normal3(rng);
        let n = crate::splat::norm3(v);
        if n > 0.0 && n.is_finite() {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

/// Stateful OU sampler owning its RNG stream.
#[derive(Clone, Debug)]
pub struct OuProcess {
    pub params: OuParams,
    pub state: OuState,
    rng: DkRng,
}

impl OuProcess {
    /// Starts at `mu`.
    pub fn new(params: OuParams) -> Result<Self, ExcitationError> {
        params.validate()?;
        let rng = seeded_rng(params.seed);
        Ok(Self {
            state: OuState::at(params.mu),
            params,
            rng,
        })
    }

    pub fn sample(&mut self) -> Vec3 {
        let noise = standard_normal3(&mut self.rng);
        self.state = step_ou(&self.state, &self.params, noise);
        self.state.x
    }

    /// Next raw sample mapped through min-norm and deadzone.
    pub fn sample_command(&mut self, cfg: &ExcitationConfig) -> Vec3 {
        let raw = self.sample();
        let shaped = if crate::splat::norm3(raw) == 0.0 {
            let dir = random_unit_vector(&mut self.rng);
            enforce_min_norm(raw, cfg.m_min, dir)
        } else {
            enforce_min_norm(raw, cfg.m_min, [0.0; 3])
        };
        apply_deadzone(shaped, cfg.epsilon)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub k: usize,
    /// Joystick command after min-norm and deadzone.
    pub x: Vec3,
    /// End-effector target after applying `x`.
    pub p: Vec3,
}

pub fn generate_trajectory(
    params: &OuParams,
    cfg: &ExcitationConfig,
    p0: Vec3,
) -> Result<Vec<TrajectoryStep>, ExcitationError> {
    cfg.validate()?;
    if !cfg.workspace.contains(p0) {
        return Err(ExcitationError::StartOutsideWorkspace { p0 });
    }
    let mut ou = OuProcess::new(params.clone())?;
    let mut p = p0;
    let mut out = Vec::with_capacity(cfg.horizon);
    for k in 0..cfg.horizon {
        let x = ou.sample_command(cfg);
        p = integrate_position(p, x, cfg, params.dt);
        out.push(TrajectoryStep { k, x, p });
    }
    Ok(out)
}

#[derive(Serialize)]
struct TrajectoryHeader<'a> {
    kind: &'static str,
    rng: &'static str,
    ou: &'a OuParams,
    excitation: &'a ExcitationConfig,
    p0: Vec3,
}

/// JSON-lines: a config-echo header, then one `{k, x, p}` per step.
pub fn write_trajectory_jsonl<W: Write>(
    mut out: W,
    params: &OuParams,
    cfg: &ExcitationConfig,
    p0: Vec3,
    steps: &[TrajectoryStep],
) -> std::io::Result<()> {
    let header = TrajectoryHeader {
        kind: "header",
        rng: RNG_IDENTITY,
        ou: params,
        excitation: cfg,
        p0,
    };
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for s in steps {
        serde_json::to_writer(&mut out, s)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_point_without_noise() {
        let params = OuParams {
            sigma: 0.0,
            mu: [0.3, -0.2, 1.0],
            ..Default::default()
        };
        let s = step_ou(&OuState::at(params.mu), &params, [1.0, -2.0, 0.5]);
        assert_eq!(s.x, params.mu);
        assert_eq!(s.step_index, 1);
    }

    #[test]
    fn deterministic_step() {
        let params = OuParams {
            sigma: 0.0,
            theta: 1.0,
            dt: 0.1,
            ..Default::default()
        };
        let s = step_ou(&OuState::at([1.0, 0.0, 0.0]), &params, [0.0; 3]);
        assert!((s.x[0] - 0.9).abs() < 1e-15);
        assert_eq!(&s.x[1..], &[0.0, 0.0]);
    }

    #[test]
    fn noiseless_convergence_is_monotone() {
        let params = OuParams {
            sigma: 0.0,
            mu: [1.0, -1.0, 0.0],
            ..Default::default()
        };
        let mut s = OuState::at([-2.0, 3.0, 0.5]);
        for _ in 0..500 {
            let n = step_ou(&s, &params, [0.0; 3]);
            for i in 0..3 {
                assert!((n.x[i] - params.mu[i]).abs() <= (s.x[i] - params.mu[i]).abs());
            }
            s = n;
        }
        assert!((s.x[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn min_norm_examples() {
        assert_eq!(
            enforce_min_norm([1.0, 0.0, 0.0], 0.5, [0.0, 1.0, 0.0]),
            [1.0, 0.0, 0.0]
        );
        assert_eq!(
            enforce_min_norm([0.1, 0.0, 0.0], 0.5, [0.0, 1.0, 0.0]),
            [0.5, 0.0, 0.0]
        );
        assert_eq!(
            enforce_min_norm([0.0; 3], 0.5, [0.0, 1.0, 0.0]),
            [0.0, 0.5, 0.0]
        );
    }

    #[test]
    fn deadzone_examples() {
        assert_eq!(apply_deadzone([0.01, -0.5, 0.2], 0.1), [0.0, -0.5, 0.2]);
        assert_eq!(apply_deadzone([0.01, -0.5, 0.2], 0.0), [0.01, -0.5, 0.2]);
        assert_eq!(apply_deadzone([0.1, -0.1, 0.05], 0.1), [0.1, -0.1, 0.0]);
    }

    #[test]
    fn integration_clamps_per_axis() {
        let cfg = ExcitationConfig {
            v_scale: 1.0,
            workspace: Workspace {
                lo: [0.0; 3],
                hi: [1.0; 3],
            },
            ..Default::default()
        };
        let p = [0.5, 0.5, 0.5];
        assert_eq!(integrate_position(p, [0.0; 3], &cfg, 0.1), p);
        assert_eq!(
            integrate_position(p, [1.0, -2.0, 0.0], &cfg, 0.125),
            [0.625, 0.25, 0.5]
        );
        assert_eq!(
            integrate_position(p, [10.0, 1.0, 0.0], &cfg, 0.1),
            [1.0, 0.6, 0.5]
        );
    }

    #[test]
    fn start_outside_workspace_is_rejected() {
        let cfg = ExcitationConfig::default();
        let err = generate_trajectory(&OuParams::default(), &cfg, [10.0, 0.0, 0.0]).unwrap_err();
        assert!(matches!(err, ExcitationError::StartOutsideWorkspace { .. }));
    }

    #[test]
    fn seeds_are_reproducible_and_distinct() {
        let cfg = ExcitationConfig::default();
        let p0 = cfg.workspace.center();
        let a = generate_trajectory(
            &OuParams {
                seed: 7,
                ..Default::default()
            },
            &cfg,
            p0,
        )
        .unwrap();
        let b = generate_trajectory(
            &OuParams {
                seed: 7,
                ..Default::default()
            },
            &cfg,
            p0,
        )
        .unwrap();
        let c = generate_trajectory(
            &OuParams {
                seed: 8,
                ..Default::default()
            },
            &cfg,
            p0,
        )
        .unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), cfg.horizon);
        assert!(a.iter().all(|s| cfg.workspace.contains(s.p)));
    }

    #[test]
    fn invalid_params_rejected() {
        let p = OuParams {
            theta: 0.0,
            ..Default::default()
        };
        assert!(p.validate().is_err());
        let p = OuParams {
            dt: -1.0,
            ..Default::default()
        };
        assert!(p.validate().is_err());
        let c = ExcitationConfig {
            horizon: 0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn jsonl_has_header_then_steps() {
        let params = OuParams::default();
        let cfg = ExcitationConfig {
            horizon: 3,
            ..Default::default()
        };
        let p0 = cfg.workspace.center();
        let steps = generate_trajectory(&params, &cfg, p0).unwrap();
        let mut buf = Vec::new();
        write_trajectory_jsonl(&mut buf, &params, &cfg, p0, &steps).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        let header: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
        assert_eq!(header["kind"], "header");
        assert_eq!(header["ou"]["theta"], 2.0);
        let rec: serde_json::Value = serde_json::from_str(lines[3]).unwrap();
        assert_eq!(rec["k"], 2);
    }
}
