//! Episode archives.
//!
//! An archive holds one or more episodes concatenated along time:
//!
//! ```text
//! meta.json            DatasetMeta
//! video.bin            u32 LE tokens, frame-major, frame_count x S
//! contact_splat.bin    u32 LE tokens, same layout
//! arrays/*.bin         DKA1 arrays (q, qdot, actions, mu_s, mu_k,
//!                      contact_mode, force_counts, forces, reward)
//! ```
//!
//! Forces are ragged: `force_counts[t]` records per frame are stored
//! consecutively in `forces` as `(p, f)` rows of six f64.

mod archive;
mod array;
mod meta;

use std::collections::BTreeMap;
use std::ops::RangeInclusive;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub use archive::{is_zip, read_files, write_files};
pub use array::{Array, ArrayData, DType};
pub use meta::{validate_segments, DatasetMeta, MetaMode, Segment, META_FORMAT, META_VERSION};

use crate::excitation::{generate_trajectory, ExcitationConfig, OuParams, EPISODE_HORIZON_RANGE};
use crate::rng::seeded_rng;
use crate::splat::ContactRecord;

pub const META_FILE: &str = "meta.json";
pub const VIDEO_FILE: &str = "video.bin";
pub const CONTACT_FILE: &str = "contact_splat.bin";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("zip: {0}")]
    Zip(String),
    #[error("meta.json: {0}")]
    Meta(serde_json::Error),
    #[error("meta.json has unknown fields: {0:?}")]
    UnknownMetaFields(Vec<String>),
    #[error("missing file {0}")]
    MissingFile(String),
    #[error("{0} is truncated")]
    Truncated(String),
    #[error("{file}: {msg}")]
    Array { file: String, msg: String },
    #[error("{file}: {msg}")]
    Shape { file: String, msg: String },
    #[error("{file}: token {token} at index {index} is not below codebook size {codebook}")]
    TokenOutOfRange {
        file: String,
        index: usize,
        token: u32,
        codebook: u64,
    },
    #[error("invalid episode: {0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum ContactMode {
    NoContact = 0,
    Sticking = 1,
    Sliding = 2,
    Separating = 3,
}

impl ContactMode {
    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Self::NoContact),
            1 => Some(Self::Sticking),
            2 => Some(Self::Sliding),
            3 => Some(Self::Separating),
            _ => None,
        }
    }
}

/// One episode of `T` state tuples. Tokens are `T x S`, frame-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeRecord {
    pub tokens_per_frame: usize,
    pub rgb_tokens: Vec<u32>,
    pub contact_tokens: Vec<u32>,
    pub q: Vec<Vec<f64>>,
    pub qdot: Vec<Vec<f64>>,
    pub actions: Vec<[f64; 3]>,
    pub forces: Vec<Vec<ContactRecord>>,
    /// Per-step friction; per-body values are repeated across steps.
    pub mu_s: Vec<f64>,
    pub mu_k: Vec<f64>,
    pub contact_mode: Vec<ContactMode>,
    #[serde(default)]
    pub reward: Option<Vec<f64>>,
}

impl EpisodeRecord {
    pub fn frames(&self) -> usize {
        self.actions.len()
    }

    pub fn n_joints(&self) -> usize {
        self.q.first().map_or(0, Vec::len)
    }

    /// Structural checks: every per-step sequence has length `T`, joint
    /// widths agree, tokens are in range and all reals are finite.
    pub fn validate(&self, codebook: u64, contact_codebook: u64) -> Result<(), DatasetError> {
        let t = self.frames();
        let s = self.tokens_per_frame;
        let bad = |m: String| Err(DatasetError::Invalid(m));
        if t == 0 {
            return bad("episode has no frames".into());
        }
        if s == 0 {
            return bad("tokens_per_frame must be positive".into());
        }
        for (name, len) in [
            ("q", self.q.len()),
            ("qdot", self.qdot.len()),
            ("forces", self.forces.len()),
            ("mu_s", self.mu_s.len()),
            ("mu_k", self.mu_k.len()),
            ("contact_mode", self.contact_mode.len()),
        ] {
            if len != t {
                return bad(format!("{name} has {len} steps, actions has {t}"));
            }
        }
        if let Some(r) = &self.reward {
            if r.len() != t {
                return bad(format!("reward has {} steps, actions has {t}", r.len()));
            }
        }
        for (name, toks) in [
            ("rgb_tokens", &self.rgb_tokens),
            ("contact_tokens", &self.contact_tokens),
        ] {
            if toks.len() != t * s {
                return bad(format!(
                    "{name} has {} tokens, expected {}",
                    toks.len(),
                    t * s
                ));
            }
        }
        check_tokens(VIDEO_FILE, &self.rgb_tokens, codebook)?;
        check_tokens(CONTACT_FILE, &self.contact_tokens, contact_codebook)?;
        let nj = self.n_joints();
        if self.q.iter().chain(&self.qdot).any(|row| row.len() != nj) {
            return bad(format!("joint rows must all have {nj} entries"));
        }
        let finite = self
            .q
            .iter()
            .chain(&self.qdot)
            .flatten()
            .chain(self.actions.iter().flatten())
            .chain(&self.mu_s)
            .chain(&self.mu_k)
            .chain(self.reward.iter().flatten())
            .chain(
                self.forces
                    .iter()
                    .flatten()
                    .flat_map(|c| c.p.iter().chain(&c.f)),
            )
            .all(|v| v.is_finite());
        if !finite {
            return bad("non-finite value".into());
        }
        Ok(())
    }
}

fn check_tokens(file: &str, tokens: &[u32], codebook: u64) -> Result<(), DatasetError> {
    match tokens.iter().position(|&z| u64::from(z) >= codebook) {
        Some(index) => Err(DatasetError::TokenOutOfRange {
            file: file.to_string(),
            index,
            token: tokens[index],
            codebook,
        }),
        None => Ok(()),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PackOptions {
    pub codebook_size: u64,
    pub contact_codebook_size: u64,
    pub frame_rate: f64,
    /// Allowed episode lengths.
    pub horizon: RangeInclusive<usize>,
    /// Extra `meta.json` fields, written after the documented ones.
    pub extras: BTreeMap<String, Value>,
}

impl Default for PackOptions {
    fn default() -> Self {
        Self {
            codebook_size: 65_536,
            contact_codebook_size: 65_536,
            frame_rate: 50.0,
            horizon: EPISODE_HORIZON_RANGE,
            extras: BTreeMap::new(),
        }
    }
}

/// Episodes together with the metadata they were loaded from.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub episodes: Vec<EpisodeRecord>,
}

fn tokens_to_bytes(tokens: impl Iterator<Item = u32>) -> Vec<u8> {
    tokens.flat_map(u32::to_le_bytes).collect()
}

fn f64_array(rows: usize, cols: usize, data: Vec<f64>) -> Array {
    Array::new(vec![rows, cols], ArrayData::F64(data))
}

/// Archive member names and contents, in write order.
pub type ArchiveFiles = Vec<(String, Vec<u8>)>;

/// Serializes episodes to the archive file set.
pub fn encode_dataset(
    episodes: &[EpisodeRecord],
    opts: &PackOptions,
) -> Result<(DatasetMeta, ArchiveFiles), DatasetError> {
    let first = episodes
        .first()
        .ok_or_else(|| DatasetError::Invalid("no episodes to pack".into()))?;
    let s = first.tokens_per_frame;
    let nj = first.n_joints();
    let has_reward = first.reward.is_some();
    for (i, ep) in episodes.iter().enumerate() {
        ep.validate(opts.codebook_size, opts.contact_codebook_size)
            .map_err(|e| DatasetError::Invalid(format!("episode {i}: {e}")))?;
        if !opts.horizon.contains(&ep.frames()) {
            return Err(DatasetError::Invalid(format!(
                "episode {i}: horizon {} outside {}..={}",
                ep.frames(),
                opts.horizon.start(),
                opts.horizon.end()
            )));
        }
        if ep.tokens_per_frame != s || ep.n_joints() != nj || ep.reward.is_some() != has_reward {
            return Err(DatasetError::Invalid(format!(
                "episode {i}: tokens per frame, joint count and reward presence must match episode 0"
            )));
        }
    }

    let view = concat_view(episodes)?;
    let n: usize = view.frame_count();
    let meta = DatasetMeta {
        format: META_FORMAT.into(),
        version: META_VERSION,
        tokens_per_frame: s,
        codebook_size: opts.codebook_size,
        contact_codebook_size: opts.contact_codebook_size,
        frame_count: n,
        frame_rate: opts.frame_rate,
        n_joints: nj,
        has_reward,
        segments: view.segments.clone(),
        extras: opts.extras.clone(),
    };
    meta.validate()?;

    let flat =
        |f: &dyn Fn(&EpisodeRecord) -> Vec<f64>| episodes.iter().flat_map(f).collect::<Vec<f64>>();
    let q = flat(&|e| e.q.iter().flatten().copied().collect());
    let qdot = flat(&|e| e.qdot.iter().flatten().copied().collect());
    let actions = flat(&|e| e.actions.iter().flatten().copied().collect());
    let mu_s = flat(&|e| e.mu_s.clone());
    let mu_k = flat(&|e| e.mu_k.clone());
    let modes: Vec<u8> = episodes
        .iter()
        .flat_map(|e| e.contact_mode.iter().map(|&m| m as u8))
        .collect();
    let counts: Vec<u32> = episodes
        .iter()
        .flat_map(|e| e.forces.iter().map(|f| f.len() as u32))
        .collect();
    let forces: Vec<f64> = episodes
        .iter()
        .flat_map(|e| e.forces.iter().flatten())
        .flat_map(|c| c.p.into_iter().chain(c.f))
        .collect();
    let n_forces = forces.len() / 6;

    let mut files = vec![
        (META_FILE.to_string(), meta.to_json()),
        (
            VIDEO_FILE.to_string(),
            tokens_to_bytes(view.rgb_tokens.iter().copied()),
        ),
        (
            CONTACT_FILE.to_string(),
            tokens_to_bytes(view.contact_tokens.iter().copied()),
        ),
        (
            "arrays/actions.bin".into(),
            f64_array(n, 3, actions).encode(),
        ),
        (
            "arrays/contact_mode.bin".into(),
            Array::new(vec![n], ArrayData::U8(modes)).encode(),
        ),
        (
            "arrays/force_counts.bin".into(),
            Array::new(vec![n], ArrayData::U32(counts)).encode(),
        ),
        (
            "arrays/forces.bin".into(),
            f64_array(n_forces, 6, forces).encode(),
        ),
        (
            "arrays/mu_k.bin".into(),
            Array::new(vec![n], ArrayData::F64(mu_k)).encode(),
        ),
        (
            "arrays/mu_s.bin".into(),
            Array::new(vec![n], ArrayData::F64(mu_s)).encode(),
        ),
        ("arrays/q.bin".into(), f64_array(n, nj, q).encode()),
        ("arrays/qdot.bin".into(), f64_array(n, nj, qdot).encode()),
    ];
    if has_reward {
        let reward = flat(&|e| e.reward.clone().unwrap_or_default());
        files.push((
            "arrays/reward.bin".into(),
            Array::new(vec![n], ArrayData::F64(reward)).encode(),
        ));
    }
    Ok((meta, files))
}

/// Packs episodes into a directory, or a stored zip if `path` ends in `.zip`.
/// Output bytes depend only on the input.
pub fn pack_dataset(
    episodes: &[EpisodeRecord],
    path: &Path,
    opts: &PackOptions,
) -> Result<DatasetMeta, DatasetError> {
    let (meta, files) = encode_dataset(episodes, opts)?;
    write_files(path, &files)?;
    Ok(meta)
}

pub fn pack_episode(
    ep: &EpisodeRecord,
    path: &Path,
    opts: &PackOptions,
) -> Result<DatasetMeta, DatasetError> {
    pack_dataset(std::slice::from_ref(ep), path, opts)
}

fn take<'a>(files: &'a BTreeMap<String, Vec<u8>>, name: &str) -> Result<&'a [u8], DatasetError> {
    files
        .get(name)
        .map(Vec::as_slice)
        .ok_or_else(|| DatasetError::MissingFile(name.to_string()))
}

fn read_tokens(
    files: &BTreeMap<String, Vec<u8>>,
    name: &str,
    meta: &DatasetMeta,
    codebook: u64,
) -> Result<Vec<u32>, DatasetError> {
    let bytes = take(files, name)?;
    let want = meta.frame_count * meta.tokens_per_frame * 4;
    if bytes.len() < want {
        return Err(DatasetError::Truncated(name.to_string()));
    }
    if bytes.len() != want {
        return Err(DatasetError::Shape {
            file: name.to_string(),
            msg: format!("{} bytes, expected {want}", bytes.len()),
        });
    }
    let tokens: Vec<u32> = bytes
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    check_tokens(name, &tokens, codebook)?;
    Ok(tokens)
}

fn read_array(
    files: &BTreeMap<String, Vec<u8>>,
    stem: &str,
    shape: &[Option<usize>],
    dtype: DType,
) -> Result<Array, DatasetError> {
    let name = format!("arrays/{stem}.bin");
    let a = Array::decode(&name, take(files, &name)?)?;
    let shape_ok = a.shape.len() == shape.len()
        && a.shape
            .iter()
            .zip(shape)
            .all(|(&d, w)| w.is_none_or(|w| w == d));
    if !shape_ok || a.data.dtype() != dtype {
        return Err(DatasetError::Shape {
            file: name,
            msg: format!(
                "shape {:?} dtype {:?}, expected {shape:?} {dtype:?}",
                a.shape,
                a.data.dtype()
            ),
        });
    }
    Ok(a)
}

fn f64s(a: Array) -> Vec<f64> {
    match a.data {
        ArrayData::F64(v) => v,
        _ => unreachable!("dtype checked"),
    }
}

/// Decodes an in-memory file set.
pub fn decode_dataset(
    files: &BTreeMap<String, Vec<u8>>,
    mode: MetaMode,
) -> Result<Dataset, DatasetError> {
    let meta = DatasetMeta::parse(take(files, META_FILE)?, mode)?;
    let n = meta.frame_count;
    let nj = meta.n_joints;
    let s = meta.tokens_per_frame;
    let rgb = read_tokens(files, VIDEO_FILE, &meta, meta.codebook_size)?;
    let contact = read_tokens(files, CONTACT_FILE, &meta, meta.contact_codebook_size)?;
    let q = f64s(read_array(files, "q", &[Some(n), Some(nj)], DType::F64)?);
    let qdot = f64s(read_array(files, "qdot", &[Some(n), Some(nj)], DType::F64)?);
    let actions = f64s(read_array(
        files,
        "actions",
        &[Some(n), Some(3)],
        DType::F64,
    )?);
    let mu_s = f64s(read_array(files, "mu_s", &[Some(n)], DType::F64)?);
    let mu_k = f64s(read_array(files, "mu_k", &[Some(n)], DType::F64)?);
    let modes = match read_array(files, "contact_mode", &[Some(n)], DType::U8)?.data {
        ArrayData::U8(v) => v,
        _ => unreachable!("dtype checked"),
    };
    let counts = match read_array(files, "force_counts", &[Some(n)], DType::U32)?.data {
        ArrayData::U32(v) => v,
        _ => unreachable!("dtype checked"),
    };
    let total: usize = counts.iter().map(|&c| c as usize).sum();
    let forces = f64s(read_array(
        files,
        "forces",
        &[Some(total), Some(6)],
        DType::F64,
    )?);
    let reward = if meta.has_reward {
        Some(f64s(read_array(files, "reward", &[Some(n)], DType::F64)?))
    } else {
        None
    };

    let modes = modes
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            ContactMode::from_code(c).ok_or_else(|| DatasetError::Shape {
                file: "arrays/contact_mode.bin".into(),
                msg: format!("code {c} at index {i} is not a contact mode"),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut force_rows = Vec::with_capacity(n);
    let mut cursor = 0;
    for &c in &counts {
        let rows = (cursor..cursor + c as usize)
            .map(|r| {
                let v = &forces[r * 6..r * 6 + 6];
                ContactRecord {
                    p: [v[0], v[1], v[2]],
                    f: [v[3], v[4], v[5]],
                }
            })
            .collect();
        force_rows.push(rows);
        cursor += c as usize;
    }

    let rows = |data: &[f64], width: usize, seg: &Segment| -> Vec<Vec<f64>> {
        (seg.start..seg.end())
            .map(|t| data[t * width..(t + 1) * width].to_vec())
            .collect()
    };
    let episodes = meta
        .segments
        .iter()
        .map(|seg| {
            let span = seg.start..seg.end();
            EpisodeRecord {
                tokens_per_frame: s,
                rgb_tokens: rgb[seg.start * s..seg.end() * s].to_vec(),
                contact_tokens: contact[seg.start * s..seg.end() * s].to_vec(),
                q: rows(&q, nj, seg),
                qdot: rows(&qdot, nj, seg),
                actions: span
                    .clone()
                    .map(|t| [actions[3 * t], actions[3 * t + 1], actions[3 * t + 2]])
                    .collect(),
                forces: force_rows[span.clone()].to_vec(),
                mu_s: mu_s[span.clone()].to_vec(),
                mu_k: mu_k[span.clone()].to_vec(),
                contact_mode: modes[span.clone()].to_vec(),
                reward: reward.as_ref().map(|r| r[span].to_vec()),
            }
        })
        .collect();
    Ok(Dataset { meta, episodes })
}

pub fn load_dataset(path: &Path, mode: MetaMode) -> Result<Dataset, DatasetError> {
    decode_dataset(&read_files(path)?, mode)
}

/// Loads a single-episode archive in strict mode.
pub fn load_episode(path: &Path) -> Result<EpisodeRecord, DatasetError> {
    let mut ds = load_dataset(path, MetaMode::Strict)?;
    if ds.episodes.len() != 1 {
        return Err(DatasetError::Invalid(format!(
            "archive holds {} episodes, expected 1",
            ds.episodes.len()
        )));
    }
    Ok(ds.episodes.remove(0))
}

/// Episodes concatenated along time, with the segment of each.
#[derive(Clone, Debug, PartialEq)]
pub struct ConcatView {
    pub tokens_per_frame: usize,
    pub rgb_tokens: Vec<u32>,
    pub contact_tokens: Vec<u32>,
    pub segments: Vec<Segment>,
}

/// A run of `len` frames starting at global frame `start`, inside one segment.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Window {
    pub segment: usize,
    pub start: usize,
    pub len: usize,
}

impl ConcatView {
    pub fn frame_count(&self) -> usize {
        self.segments.last().map_or(0, Segment::end)
    }

    /// Windows of `len` frames advancing by `stride`, restarting at each
    /// segment so that no window crosses an episode boundary. `len == 0`
    /// yields nothing; a zero stride is treated as 1.
    pub fn windows(&self, len: usize, stride: usize) -> impl Iterator<Item = Window> + '_ {
        let stride = stride.max(1);
        self.segments
            .iter()
            .enumerate()
            .filter(move |_| len > 0)
            .flat_map(move |(i, seg)| {
                let count = if seg.length >= len {
                    (seg.length - len) / stride + 1
                } else {
                    0
                };
                (0..count).map(move |j| Window {
                    segment: i,
                    start: seg.start + j * stride,
                    len,
                })
            })
    }

    pub fn rgb_window(&self, w: &Window) -> &[u32] {
        &self.rgb_tokens[w.start * self.tokens_per_frame..(w.start + w.len) * self.tokens_per_frame]
    }

    pub fn contact_window(&self, w: &Window) -> &[u32] {
        &self.contact_tokens
            [w.start * self.tokens_per_frame..(w.start + w.len) * self.tokens_per_frame]
    }
}

/// Concatenates episodes in order. All episodes must share `S`.
pub fn concat_view(episodes: &[EpisodeRecord]) -> Result<ConcatView, DatasetError> {
    let s = episodes.first().map_or(0, |e| e.tokens_per_frame);
    let mut view = ConcatView {
        tokens_per_frame: s,
        rgb_tokens: Vec::new(),
        contact_tokens: Vec::new(),
        segments: Vec::with_capacity(episodes.len()),
    };
    let mut start = 0;
    for (i, ep) in episodes.iter().enumerate() {
        if ep.tokens_per_frame != s {
            return Err(DatasetError::Invalid(format!(
                "episode {i} has {} tokens per frame, expected {s}",
                ep.tokens_per_frame
            )));
        }
        if ep.frames() == 0 {
            return Err(DatasetError::Invalid(format!("episode {i} has no frames")));
        }
        view.rgb_tokens.extend_from_slice(&ep.rgb_tokens);
        view.contact_tokens.extend_from_slice(&ep.contact_tokens);
        view.segments.push(Segment {
            start,
            length: ep.frames(),
        });
        start += ep.frames();
    }
    Ok(view)
}

/// Deterministic stand-in episode: OU joystick actions, joint states tracking
/// the end-effector path, uniform random tokens and sparse random contacts.
pub fn synthetic_episode(
    seed: u64,
    frames: usize,
    tokens_per_frame: usize,
    n_joints: usize,
    codebook: u64,
) -> Result<EpisodeRecord, DatasetError> {
    let params = OuParams {
        seed,
        ..OuParams::default()
    };
    let cfg = ExcitationConfig {
        horizon: frames,
        ..ExcitationConfig::default()
    };
    let traj = generate_trajectory(&params, &cfg, cfg.workspace.center())
        .map_err(|e| DatasetError::Invalid(e.to_string()))?;
    let mut rng = seeded_rng(seed ^ 0x5eed_da7a);
    let hi = codebook.min(u64::from(u32::MAX) + 1);
    let token = |rng: &mut crate::DkRng| rng.gen_range(0..hi) as u32;
    let rgb_tokens = (0..frames * tokens_per_frame)
        .map(|_| token(&mut rng))
        .collect();
    let contact_tokens = (0..frames * tokens_per_frame)
        .map(|_| token(&mut rng))
        .collect();
    let q: Vec<Vec<f64>> = traj
        .iter()
        .map(|st| {
            (0..n_joints)
                .map(|j| st.p[j % 3] + 0.1 * j as f64)
                .collect()
        })
        .collect();
    let qdot = (0..frames)
        .map(|t| {
            (0..n_joints)
                .map(|j| {
                    if t == 0 {
                        0.0
                    } else {
                        (q[t][j] - q[t - 1][j]) / params.dt
                    }
                })
                .collect()
        })
        .collect();
    let mut forces = Vec::with_capacity(frames);
    let mut modes = Vec::with_capacity(frames);
    for st in &traj {
        let n = rng.gen_range(0..3usize);
        forces.push(
            (0..n)
                .map(|_| ContactRecord {
                    p: st.p,
                    f: [
                        rng.gen_range(-5.0..5.0),
                        rng.gen_range(-5.0..5.0),
                        rng.gen_range(0.0..10.0),
                    ],
                })
                .collect(),
        );
        modes.push(if n == 0 {
            ContactMode::NoContact
        } else {
            ContactMode::from_code(rng.gen_range(1..=3)).expect("valid code")
        });
    }
    Ok(EpisodeRecord {
        tokens_per_frame,
        rgb_tokens,
        contact_tokens,
        q,
        qdot,
        actions: traj.iter().map(|st| st.x).collect(),
        forces,
        mu_s: vec![0.6; frames],
        mu_k: vec![0.4; frames],
        contact_mode: modes,
        reward: None,
    })
}
