use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use thiserror::Error;

use super::config::{ConfigError, ModelConfig};
use super::tensor::Tensor;
use crate::rng::seeded_rng;
use crate::tokens::{Conditioning, TokenGrid};

pub const LN_EPS: f64 = 1e-5;

#[derive(Debug, Error, PartialEq)]
pub enum ForwardError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("shape mismatch: {0}")]
    Shape(String),
}

/// `(x - mean) / sqrt(var + eps)`, optionally followed by `gamma * . + beta`.
/// A constant input normalizes to zero.
pub fn layer_norm(x: &[f64], affine: Option<(&[f64], &[f64])>) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let inv = 1.0 / (var + LN_EPS).sqrt();
    match affine {
        Some((g, b)) => x
            .iter()
            .zip(g.iter().zip(b))
            .map(|(v, (g, b))| (v - mean) * inv * g + b)
            .collect(),
        None => x.iter().map(|v| (v - mean) * inv).collect(),
    }
}

/// Exact erf form.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
}

impl LayerNorm {
    fn identity(dim: usize) -> Self {
        Self {
            gamma: Tensor::filled(&[dim], 1.0),
            beta: Tensor::zeros(&[dim]),
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        layer_norm(x, Some((&self.gamma.data, &self.beta.data)))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    /// `(out, in)`.
    pub weight: Tensor,
    pub bias: Option<Tensor>,
}

impl Linear {
    fn zeros(out: usize, inp: usize, bias: bool) -> Self {
        Self {
            weight: Tensor::zeros(&[out, inp]),
            bias: bias.then(|| Tensor::zeros(&[out])),
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.weight.matvec(x);
        if let Some(b) = &self.bias {
            for (y, b) in y.iter_mut().zip(&b.data) {
                *y += b;
            }
        }
        y
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionWeights {
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
    pub wo: Linear,
}

impl AttentionWeights {
    fn zeros(d: usize) -> Self {
        Self {
            wq: Linear::zeros(d, d, false),
            wk: Linear::zeros(d, d, false),
            wv: Linear::zeros(d, d, false),
            wo: Linear::zeros(d, d, false),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub spatial_norm: LayerNorm,
    pub spatial: AttentionWeights,
    pub temporal: AttentionWeights,
    pub ff_norm: LayerNorm,
    pub ff_in: Linear,
    pub ff_out: Linear,
}

/// All weights of the dynamics model.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelState {
    /// One `(v_f, D)` table per factor.
    pub token_embed: Vec<Tensor>,
    pub mask_embed: Tensor,
    pub action_proj: Linear,
    pub action_norm: LayerNorm,
    pub joint_proj: Linear,
    pub joint_norm: LayerNorm,
    /// `(T, S+1, D)`.
    pub pos_embed: Tensor,
    pub blocks: Vec<Block>,
    pub video_head: Tensor,
    pub contact_head: Tensor,
    pub joint_head: Tensor,
}

macro_rules! named_params {
    ($s:expr, $($m:tt)?) => {{
        let s = $s;
        let mut out = Vec::new();
        for (i, e) in (& $($m)? s.token_embed).into_iter().enumerate() {
            out.push((format!("embed.factor{i}"), e));
        }
        out.push(("embed.mask".to_string(), & $($m)? s.mask_embed));
        out.push(("control.action.weight".to_string(), & $($m)? s.action_proj.weight));
        if let Some(b) = & $($m)? s.action_proj.bias {
            out.push(("control.action.bias".to_string(), b));
        }
        out.push(("control.action_norm.gamma".to_string(), & $($m)? s.action_norm.gamma));
        out.push(("control.action_norm.beta".to_string(), & $($m)? s.action_norm.beta));
        out.push(("control.joint.weight".to_string(), & $($m)? s.joint_proj.weight));
        if let Some(b) = & $($m)? s.joint_proj.bias {
            out.push(("control.joint.bias".to_string(), b));
        }
        out.push(("control.joint_norm.gamma".to_string(), & $($m)? s.joint_norm.gamma));
        out.push(("control.joint_norm.beta".to_string(), & $($m)? s.joint_norm.beta));
        out.push(("pos_embed".to_string(), & $($m)? s.pos_embed));
        for (i, b) in (& $($m)? s.blocks).into_iter().enumerate() {
            out.push((format!("blocks.{i}.spatial_norm.gamma"), & $($m)? b.spatial_norm.gamma));
            out.push((format!("blocks.{i}.spatial_norm.beta"), & $($m)? b.spatial_norm.beta));
            out.push((format!("blocks.{i}.spatial.wq"), & $($m)? b.spatial.wq.weight));
            out.push((format!("blocks.{i}.spatial.wk"), & $($m)? b.spatial.wk.weight));
            out.push((format!("blocks.{i}.spatial.wv"), & $($m)? b.spatial.wv.weight));
            out.push((format!("blocks.{i}.spatial.wo"), & $($m)? b.spatial.wo.weight));
            out.push((format!("blocks.{i}.temporal.wq"), & $($m)? b.temporal.wq.weight));
            out.push((format!("blocks.{i}.temporal.wk"), & $($m)? b.temporal.wk.weight));
            out.push((format!("blocks.{i}.temporal.wv"), & $($m)? b.temporal.wv.weight));
            out.push((format!("blocks.{i}.temporal.wo"), & $($m)? b.temporal.wo.weight));
            out.push((format!("blocks.{i}.ff_norm.gamma"), & $($m)? b.ff_norm.gamma));
            out.push((format!("blocks.{i}.ff_norm.beta"), & $($m)? b.ff_norm.beta));
            out.push((format!("blocks.{i}.ff_in.weight"), & $($m)? b.ff_in.weight));
            if let Some(bias) = & $($m)? b.ff_in.bias {
                out.push((format!("blocks.{i}.ff_in.bias"), bias));
            }
            out.push((format!("blocks.{i}.ff_out.weight"), & $($m)? b.ff_out.weight));
            if let Some(bias) = & $($m)? b.ff_out.bias {
                out.push((format!("blocks.{i}.ff_out.bias"), bias));
            }
        }
        out.push(("head.video".to_string(), & $($m)? s.video_head));
        out.push(("head.contact".to_string(), & $($m)? s.contact_head));
        out.push(("head.joint".to_string(), & $($m)? s.joint_head));
        out
    }};
}

impl ModelState {
    /// Correctly shaped, all projections zero, norms at identity.
    pub fn zeros(cfg: &ModelConfig) -> Self {
        let d = cfg.hidden;
        let v_f = cfg.vocab.factor_size() as usize;
        let k = cfg.vocab.factors() as usize;
        let block = Block {
            spatial_norm: LayerNorm::identity(d),
            spatial: AttentionWeights::zeros(d),
            temporal: AttentionWeights::zeros(d),
            ff_norm: LayerNorm::identity(d),
            ff_in: Linear::zeros(cfg.ff_dim(), d, true),
            ff_out: Linear::zeros(d, cfg.ff_dim(), true),
        };
        Self {
            token_embed: vec![Tensor::zeros(&[v_f, d]); k],
            mask_embed: Tensor::zeros(&[d]),
            action_proj: Linear::zeros(d, 3, true),
            action_norm: LayerNorm::identity(d),
            joint_proj: Linear::zeros(d, cfg.n_joints, true),
            joint_norm: LayerNorm::identity(d),
            pos_embed: Tensor::zeros(&[cfg.frames, cfg.frame_len(), d]),
            blocks: vec![block; cfg.layers],
            video_head: Tensor::zeros(&[cfg.head_width(), d]),
            contact_head: Tensor::zeros(&[cfg.head_width(), d]),
            joint_head: Tensor::zeros(&[cfg.n_joints, d]),
        }
    }

    /// Seeded random init: `N(0, 0.02)` for embeddings, `U(-1/sqrt(fan_in),
    /// 1/sqrt(fan_in))` for projections, zero biases, identity norms. Every
    /// value is representable in f32 so checkpoints round-trip exactly.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let mut state = Self::zeros(cfg);
        let mut rng = seeded_rng(seed);
        let normal = Normal::new(0.0, 0.02).expect("valid std");
        for (name, t) in state.params_mut() {
            let is_embedding = name.starts_with("embed.") || name == "pos_embed";
            let is_matrix = t.shape.len() == 2 && !is_embedding;
            if is_embedding {
                for v in t.data.iter_mut() {
                    *v = normal.sample(&mut rng) as f32 as f64;
                }
            } else if is_matrix {
                let bound = 1.0 / (t.shape[1] as f64).sqrt();
                let uni = Uniform::new_inclusive(-bound, bound);
                for v in t.data.iter_mut() {
                    *v = rng.sample(uni) as f32 as f64;
                }
            }
        }
        Ok(state)
    }

    pub fn params(&self) -> Vec<(String, &Tensor)> {
        named_params!(self,)
    }

    pub fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        named_params!(self, mut)
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|(_, t)| t.len()).sum()
    }

    /// Zeroes every residual-branch output projection (attention `W_O`, FFN
    /// `W_2` and its bias), turning each block into the identity.
    pub fn zero_output_projections(&mut self) {
        for b in &mut self.blocks {
            b.spatial.wo.weight.data.fill(0.0);
            b.temporal.wo.weight.data.fill(0.0);
            b.ff_out.weight.data.fill(0.0);
            if let Some(bias) = &mut b.ff_out.bias {
                bias.data.fill(0.0);
            }
        }
    }
}

fn check_inputs(
    grid: &TokenGrid,
    cond: &Conditioning,
    cfg: &ModelConfig,
) -> Result<(), ForwardError> {
    cfg.validate()?;
    let shape = |m: String| Err(ForwardError::Shape(m));
    if grid.frames != cfg.frames || grid.h != cfg.grid_h || grid.w != cfg.grid_w {
        return shape(format!(
            "grid is {}x{}x{}, model expects {}x{}x{}",
            grid.frames, grid.h, grid.w, cfg.frames, cfg.grid_h, cfg.grid_w
        ));
    }
    if grid.vocab != cfg.vocab {
        return shape("grid vocabulary differs from model vocabulary".into());
    }
    if grid.tokens.len() != cfg.frames * cfg.spatial() {
        return shape("token count".into());
    }
    if cond.actions.len() != cfg.frames {
        return shape(format!(
            "{} action rows for {} frames",
            cond.actions.len(),
            cfg.frames
        ));
    }
    if cond.joints.len() != cfg.frames || cond.joints.iter().any(|j| j.len() != cfg.n_joints) {
        return shape(format!("joints must be {}x{}", cfg.frames, cfg.n_joints));
    }
    Ok(())
}

/// Builds the `T x (S+1) x D` input: control token then video tokens per
/// frame, plus positional embedding.
pub fn embed_inputs(
    grid: &TokenGrid,
    cond: &Conditioning,
    state: &ModelState,
    cfg: &ModelConfig,
) -> Result<Vec<f64>, ForwardError> {
    check_inputs(grid, cond, cfg)?;
    let d = cfg.hidden;
    let fl = cfg.frame_len();
    let mask = grid.mask_token();
    let mut x = vec![0.0; cfg.frames * fl * d];
    for t in 0..cfg.frames {
        let a = state
            .action_norm
            .apply(&state.action_proj.apply(&cond.actions[t]));
        let j = state
            .joint_norm
            .apply(&state.joint_proj.apply(&cond.joints[t]));
        let base = t * fl * d;
        for i in 0..d {
            x[base + i] = a[i] + j[i];
        }
        for (s, &tok) in grid.frame(t).iter().enumerate() {
            let row = &mut x[base + (s + 1) * d..base + (s + 2) * d];
            if tok == mask {
                row.copy_from_slice(&state.mask_embed.data);
            } else {
                let digits = cfg
                    .vocab
                    .decompose(tok)
                    .map_err(|e| ForwardError::Shape(e.to_string()))?;
                for (f, digit) in digits.into_iter().enumerate() {
                    for (r, e) in row.iter_mut().zip(state.token_embed[f].row(digit as usize)) {
                        *r += e;
                    }
                }
            }
        }
    }
    for (v, p) in x.iter_mut().zip(&state.pos_embed.data) {
        *v += p;
    }
    Ok(x)
}

/// Multi-head self-attention over `n` rows of width `D`. Returns the output
/// and the attention weights laid out `heads x n x n`.
pub fn attention_with_probs(
    x: &[f64],
    n: usize,
    w: &AttentionWeights,
    causal: bool,
    cfg: &ModelConfig,
) -> (Vec<f64>, Vec<f64>) {
    let d = cfg.hidden;
    let dk = cfg.head_dim();
    let heads = cfg.heads;
    let scale = cfg.attention_scale();
    let rows = |i: usize| &x[i * d..(i + 1) * d];

    let mut q: Vec<Vec<f64>> = (0..n).map(|i| w.wq.apply(rows(i))).collect();
    let mut k: Vec<Vec<f64>> = (0..n).map(|i| w.wk.apply(rows(i))).collect();
    let v: Vec<Vec<f64>> = (0..n).map(|i| w.wv.apply(rows(i))).collect();
    if cfg.qk_norm {
        for vecs in [&mut q, &mut k] {
            for row in vecs.iter_mut() {
                for h in 0..heads {
                    let normed = layer_norm(&row[h * dk..(h + 1) * dk], None);
                    row[h * dk..(h + 1) * dk].copy_from_slice(&normed);
                }
            }
        }
    }

    let mut probs = vec![0.0; heads * n * n];
    let mut concat = vec![vec![0.0; d]; n];
    for h in 0..heads {
        let hs = h * dk..(h + 1) * dk;
        for i in 0..n {
            let visible = if causal { i + 1 } else { n };
            let logits: Vec<f64> = (0..visible)
                .map(|j| {
                    scale
                        * q[i][hs.clone()]
                            .iter()
                            .zip(&k[j][hs.clone()])
                            .map(|(a, b)| a * b)
                            .sum::<f64>()
                })
                .collect();
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
            let z: f64 = exps.iter().sum();
            let out = &mut concat[i][hs.clone()];
            for (j, e) in exps.iter().enumerate() {
                let p = e / z;
                probs[(h * n + i) * n + j] = p;
                for (o, vv) in out.iter_mut().zip(&v[j][hs.clone()]) {
                    *o += p * vv;
                }
            }
        }
    }
    let mut y = Vec::with_capacity(n * d);
    for row in &concat {
        y.extend(w.wo.apply(row));
    }
    (y, probs)
}

pub fn attention(
    x: &[f64],
    n: usize,
    w: &AttentionWeights,
    causal: bool,
    cfg: &ModelConfig,
) -> Vec<f64> {
    attention_with_probs(x, n, w, causal, cfg).0
}

/// One ST-block over a `T x (S+1) x D` activation.
pub fn st_block(x: &[f64], block: &Block, cfg: &ModelConfig) -> Vec<f64> {
    let d = cfg.hidden;
    let fl = cfg.frame_len();
    let frames = cfg.frames;

    // Spatial, pre-norm, bidirectional within each frame.
    let mut x1 = x.to_vec();
    for t in 0..frames {
        let span = t * fl * d..(t + 1) * fl * d;
        let normed: Vec<f64> = x[span.clone()]
            .chunks(d)
            .flat_map(|row| block.spatial_norm.apply(row))
            .collect();
        let out = attention(&normed, fl, &block.spatial, false, cfg);
        for (a, o) in x1[span].iter_mut().zip(out) {
            *a += o;
        }
    }

    // Temporal, causal, on the un-normalized stream.
    let mut x2 = x1.clone();
    for p in 0..fl {
        let seq: Vec<f64> = (0..frames)
            .flat_map(|t| x1[(t * fl + p) * d..(t * fl + p + 1) * d].iter().copied())
            .collect();
        let out = attention(&seq, frames, &block.temporal, true, cfg);
        for t in 0..frames {
            let dst = &mut x2[(t * fl + p) * d..(t * fl + p + 1) * d];
            for (a, o) in dst.iter_mut().zip(&out[t * d..(t + 1) * d]) {
                *a += o;
            }
        }
    }

    // Feed-forward, pre-norm.
    let mut x3 = x2.clone();
    for (row, dst) in x2.chunks(d).zip(x3.chunks_mut(d)) {
        let hidden: Vec<f64> = block
            .ff_in
            .apply(&block.ff_norm.apply(row))
            .into_iter()
            .map(gelu)
            .collect();
        for (a, o) in dst.iter_mut().zip(block.ff_out.apply(&hidden)) {
            *a += o;
        }
    }
    x3
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForwardOutput {
    pub frames: usize,
    pub spatial: usize,
    pub k: usize,
    pub v_f: usize,
    pub n_joints: usize,
    /// `T x S x k x v_f`.
    pub video_logits: Vec<f64>,
    /// `T x S x k x v_f`.
    pub contact_logits: Vec<f64>,
    /// `T x N_j`.
    pub joint_pred: Vec<f64>,
}

impl ForwardOutput {
    pub fn video_shape(&self) -> [usize; 4] {
        [self.frames, self.spatial, self.k, self.v_f]
    }

    pub fn joint_shape(&self) -> [usize; 2] {
        [self.frames, self.n_joints]
    }

    fn frame_span(&self, t: usize) -> std::ops::Range<usize> {
        let w = self.spatial * self.k * self.v_f;
        t * w..(t + 1) * w
    }

    pub fn video_frame(&self, t: usize) -> &[f64] {
        &self.video_logits[self.frame_span(t)]
    }

    pub fn contact_frame(&self, t: usize) -> &[f64] {
        &self.contact_logits[self.frame_span(t)]
    }

    pub fn joints_at(&self, t: usize) -> &[f64] {
        &self.joint_pred[t * self.n_joints..(t + 1) * self.n_joints]
    }
}

pub fn forward(
    grid: &TokenGrid,
    cond: &Conditioning,
    state: &ModelState,
    cfg: &ModelConfig,
) -> Result<ForwardOutput, ForwardError> {
    let mut x = embed_inputs(grid, cond, state, cfg)?;
    if state.blocks.len() != cfg.layers {
        return Err(ForwardError::Shape(format!(
            "state has {} blocks, config {}",
            state.blocks.len(),
            cfg.layers
        )));
    }
    for block in &state.blocks {
        x = st_block(&x, block, cfg);
    }
    let d = cfg.hidden;
    let fl = cfg.frame_len();
    let s = cfg.spatial();
    let hw = cfg.head_width();
    let mut video = Vec::with_capacity(cfg.frames * s * hw);
    let mut contact = Vec::with_capacity(cfg.frames * s * hw);
    let mut joints = Vec::with_capacity(cfg.frames * cfg.n_joints);
    for t in 0..cfg.frames {
        let control = &x[t * fl * d..(t * fl + 1) * d];
        joints.extend(state.joint_head.matvec(control));
        for p in 1..fl {
            let row = &x[(t * fl + p) * d..(t * fl + p + 1) * d];
            video.extend(state.video_head.matvec(row));
            contact.extend(state.contact_head.matvec(row));
        }
    }
    Ok(ForwardOutput {
        frames: cfg.frames,
        spatial: s,
        k: cfg.vocab.factors() as usize,
        v_f: cfg.vocab.factor_size() as usize,
        n_joints: cfg.n_joints,
        video_logits: video,
        contact_logits: contact,
        joint_pred: joints,
    })
}

/// Uniform random tokens and conditioning in [-1, 1), for probing the model.
pub fn random_inputs<R: Rng>(cfg: &ModelConfig, rng: &mut R) -> (TokenGrid, Conditioning) {
    let v = cfg.vocab.size() as u32;
    let tokens = (0..cfg.frames * cfg.spatial())
        .map(|_| rng.gen_range(0..v))
        .collect();
    let grid = TokenGrid::new(
        cfg.frames, cfg.grid_h, cfg.grid_w, cfg.t_hist, cfg.vocab, tokens,
    )
    .expect("tokens in range");
    let cond = Conditioning {
        actions: (0..cfg.frames)
            .map(|_| {
                [
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                ]
            })
            .collect(),
        joints: (0..cfg.frames)
            .map(|_| {
                (0..cfg.n_joints)
                    .map(|_| rng.gen_range(-1.0..1.0))
                    .collect()
            })
            .collect(),
    };
    (grid, cond)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(seed: u64) -> (ModelConfig, ModelState, TokenGrid, Conditioning) {
        let cfg = ModelConfig::toy();
        let state = ModelState::init(&cfg, seed).unwrap();
        let mut rng = seeded_rng(seed + 100);
        let (grid, cond) = random_inputs(&cfg, &mut rng);
        (cfg, state, grid, cond)
    }

    #[test]
    fn layer_norm_of_constant_is_zero() {
        assert_eq!(layer_norm(&[0.0; 8], None), vec![0.0; 8]);
        assert_eq!(layer_norm(&[3.0; 4], None), vec![0.0; 4]);
    }

    #[test]
    fn gelu_reference_values() {
        assert_eq!(gelu(0.0), 0.0);
        // 0.5 * (1 + erf(1/sqrt 2)) = Phi(1) = 0.8413447460685429
        assert!((gelu(1.0) - 0.8413447460685429).abs() < 1e-15);
        assert!((gelu(-1.0) + 0.15865525393145707).abs() < 1e-15);
    }

    #[test]
    fn mask_frame_embeds_to_mask_plus_position() {
        let (cfg, state, mut grid, cond) = setup(1);
        let mask = grid.mask_token();
        grid.frame_mut(3).fill(mask);
        let x = embed_inputs(&grid, &cond, &state, &cfg).unwrap();
        let d = cfg.hidden;
        let fl = cfg.frame_len();
        for s in 1..fl {
            let got = &x[(3 * fl + s) * d..(3 * fl + s + 1) * d];
            let pos = &state.pos_embed.data[(3 * fl + s) * d..(3 * fl + s + 1) * d];
            for i in 0..d {
                assert_eq!(got[i], state.mask_embed.data[i] + pos[i]);
            }
        }
    }

    #[test]
    fn token_embedding_matches_table_lookup() {
        let (cfg, state, grid, cond) = setup(2);
        let x = embed_inputs(&grid, &cond, &state, &cfg).unwrap();
        let d = cfg.hidden;
        let fl = cfg.frame_len();
        let v_f = cfg.vocab.factor_size() as usize;
        for t in 0..cfg.frames {
            for s in 0..cfg.spatial() {
                let z = grid.frame(t)[s] as usize;
                let (z0, z1) = (z % v_f, z / v_f);
                let off = (t * fl + s + 1) * d;
                for i in 0..d {
                    let want = state.token_embed[0].data[z0 * d + i]
                        + state.token_embed[1].data[z1 * d + i]
                        + state.pos_embed.data[off + i];
                    assert_eq!(x[off + i], want);
                }
            }
        }
    }

    #[test]
    fn zero_control_inputs_give_zero_control_token() {
        let (cfg, state, grid, _) = setup(3);
        let cond = Conditioning::zeros(cfg.frames, cfg.n_joints);
        let mut no_pos = state.clone();
        no_pos.pos_embed.data.fill(0.0);
        let x = embed_inputs(&grid, &cond, &no_pos, &cfg).unwrap();
        let fl = cfg.frame_len();
        for t in 0..cfg.frames {
            assert!(x[t * fl * cfg.hidden..(t * fl + 1) * cfg.hidden]
                .iter()
                .all(|&v| v == 0.0));
        }
    }

    #[test]
    fn attention_rows_are_distributions() {
        let (cfg, state, grid, cond) = setup(4);
        let x = embed_inputs(&grid, &cond, &state, &cfg).unwrap();
        let n = cfg.frame_len();
        for causal in [false, true] {
            let (_, p) = attention_with_probs(
                &x[..n * cfg.hidden],
                n,
                &state.blocks[0].spatial,
                causal,
                &cfg,
            );
            for h in 0..cfg.heads {
                for i in 0..n {
                    let row = &p[(h * n + i) * n..(h * n + i + 1) * n];
                    assert!(row.iter().all(|&v| v >= 0.0));
                    assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                    if causal {
                        assert!(row[i + 1..].iter().all(|&v| v == 0.0));
                    }
                }
            }
        }
    }

    #[test]
    fn mup_scale_changes_attention_only_when_dk_differs() {
        let (mut cfg, state, grid, cond) = setup(5);
        let x = embed_inputs(&grid, &cond, &state, &cfg).unwrap();
        let n = cfg.frame_len();
        let xs = &x[..n * cfg.hidden];
        // toy d_k = 8: 8/8 = 1 vs 1/sqrt 8
        let plain = attention(xs, n, &state.blocks[0].spatial, false, &cfg);
        cfg.mup = true;
        let mup = attention(xs, n, &state.blocks[0].spatial, false, &cfg);
        assert_ne!(plain, mup);
    }

    #[test]
    fn zeroed_output_projections_make_blocks_identity() {
        let (cfg, mut state, grid, cond) = setup(6);
        state.zero_output_projections();
        let x = embed_inputs(&grid, &cond, &state, &cfg).unwrap();
        for b in &state.blocks {
            assert_eq!(st_block(&x, b, &cfg), x);
        }
    }

    #[test]
    fn forward_shapes_and_determinism() {
        let (cfg, state, grid, cond) = setup(7);
        let a = forward(&grid, &cond, &state, &cfg).unwrap();
        let b = forward(&grid, &cond, &state, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.video_shape(), [4, 16, 2, 16]);
        assert_eq!(a.video_logits.len(), 4 * 16 * 32);
        assert_eq!(a.contact_logits.len(), 4 * 16 * 32);
        assert_eq!(a.joint_shape(), [4, 4]);
        assert!(a.video_logits.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let (cfg, state, grid, mut cond) = setup(8);
        cond.actions.pop();
        assert!(matches!(
            forward(&grid, &cond, &state, &cfg),
            Err(ForwardError::Shape(_))
        ));
    }

    #[test]
    fn init_is_seeded_and_f32_exact() {
        let cfg = ModelConfig::toy();
        let a = ModelState::init(&cfg, 11).unwrap();
        assert_eq!(a, ModelState::init(&cfg, 11).unwrap());
        assert_ne!(a, ModelState::init(&cfg, 12).unwrap());
        for (_, t) in a.params() {
            assert!(t.data.iter().all(|&v| v as f32 as f64 == v));
        }
    }
}
