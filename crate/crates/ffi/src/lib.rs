//! C ABI over `dreamkit`.
//!
//! Every entry point returns a [`DkStatus`]. On failure a message is stored in
//! thread-local storage and can be read with [`dk_last_error`]. Objects are
//! passed as opaque handles that the caller releases with the matching
//! `*_free` function. Strings returned by the library are freed with
//! [`dk_string_free`]. Panics are caught at the boundary and reported as
//! `DK_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::sync::OnceLock;

use serde::de::DeserializeOwned;

use dreamkit::dynamics::{forward, load_checkpoint, ModelConfig, ModelState};
use dreamkit::excitation::{generate_trajectory, ExcitationConfig, OuParams, TrajectoryStep};
use dreamkit::gate::{parse_verdict, PROMPT_TEMPLATE};
use dreamkit::splat::{load_scene, render_splats, CameraModel, SplatConfig};
use dreamkit::tokens::{Conditioning, FactorizedVocab, FsqSpec, TokenGrid};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DkStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    Io = 4,
    BufferTooSmall = 5,
    Panic = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Failure(DkStatus, String);

impl Failure {
    fn new(status: DkStatus, msg: impl std::fmt::Display) -> Self {
        Failure(status, msg.to_string())
    }
}

type FfiResult = Result<(), Failure>;

fn guard(f: impl FnOnce() -> FfiResult) -> DkStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DkStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside dreamkit");
            DkStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure::new(DkStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::new(DkStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn opt_str_arg<'a>(p: *const c_char, what: &str) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        Ok(None)
    } else {
        str_arg(p, what).map(Some)
    }
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_slice<'a, T>(
    p: *mut T,
    len: usize,
    need: usize,
    what: &str,
) -> Result<&'a mut [T], Failure> {
    if len < need {
        return Err(Failure::new(
            DkStatus::BufferTooSmall,
            format!("{what} holds {len} values, {need} required"),
        ));
    }
    if need == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, need))
}

unsafe fn write_out<T>(p: *mut T, value: T, what: &str) -> FfiResult {
    if p.is_null() {
        return Err(null(what));
    }
    p.write(value);
    Ok(())
}

fn parse_json<T: DeserializeOwned + Default>(text: Option<&str>, what: &str) -> Result<T, Failure> {
    match text {
        None => Ok(T::default()),
        Some(t) => serde_json::from_str(t)
            .map_err(|e| Failure::new(DkStatus::Parse, format!("{what}: {e}"))),
    }
}

/// Message for the most recent failure on this thread, or NULL. The pointer
/// stays valid until the next dreamkit call on the same thread.
#[no_mangle]
pub extern "C" fn dk_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from a dreamkit function that documents ownership transfer.
#[no_mangle]
pub unsafe extern "C" fn dk_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dk_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// The judge prompt template as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dk_prompt_template() -> *const c_char {
    static TEMPLATE: OnceLock<CString> = OnceLock::new();
    TEMPLATE
        .get_or_init(|| CString::new(PROMPT_TEMPLATE).expect("template has no NUL"))
        .as_ptr()
}

/// Renders a contact splat image into `out` as row-major RGB triples in [0, 1].
///
/// `scene_json` is an array of `{p, f}` records, `camera_json` a camera
/// model, `config_json` a splat config or NULL for defaults. `width` and
/// `height` are always written once the camera parses; `out` must hold
/// `3 * width * height` doubles, otherwise `DK_STATUS_BUFFER_TOO_SMALL` is
/// returned, so a first call with `out_len = 0` queries the size.
///
/// # Safety
/// String arguments must be NUL-terminated; `out` must point to `out_len`
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn dk_render_splats(
    scene_json: *const c_char,
    camera_json: *const c_char,
    config_json: *const c_char,
    out: *mut f64,
    out_len: usize,
    width: *mut usize,
    height: *mut usize,
) -> DkStatus {
    guard(|| {
        let scene = str_arg(scene_json, "scene_json")?;
        let camera = str_arg(camera_json, "camera_json")?;
        let cam = CameraModel::from_json(camera)
            .map_err(|e| Failure::new(DkStatus::Parse, format!("camera: {e}")))?;
        let cfg: SplatConfig = parse_json(opt_str_arg(config_json, "config_json")?, "config")?;
        write_out(width, cam.width, "width")?;
        write_out(height, cam.height, "height")?;
        let dst = out_slice(out, out_len, 3 * cam.width * cam.height, "out")?;
        let contacts =
            load_scene(scene).map_err(|e| Failure::new(DkStatus::Parse, format!("scene: {e}")))?;
        let img = render_splats(&contacts, &cam, &cfg)
            .map_err(|e| Failure::new(DkStatus::InvalidArgument, e))?;
        for (chunk, px) in dst.chunks_mut(3).zip(&img.pixels) {
            chunk.copy_from_slice(px);
        }
        Ok(())
    })
}

fn vocab(v_f: u32, k: u32) -> Result<FactorizedVocab, Failure> {
    FactorizedVocab::from_factors(v_f, k).map_err(|e| Failure::new(DkStatus::InvalidArgument, e))
}

/// Splits token `z` of a `v_f^k` vocabulary into `k` digits, least
/// significant first.
///
/// # Safety
/// `digits` must point to `digits_len` writable values.
#[no_mangle]
pub unsafe extern "C" fn dk_vocab_decompose(
    v_f: u32,
    k: u32,
    z: u32,
    digits: *mut u32,
    digits_len: usize,
) -> DkStatus {
    guard(|| {
        let v = vocab(v_f, k)?;
        let dst = out_slice(digits, digits_len, k as usize, "digits")?;
        let d = v
            .decompose(z)
            .map_err(|e| Failure::new(DkStatus::InvalidArgument, e))?;
        dst.copy_from_slice(&d);
        Ok(())
    })
}

/// Inverse of [`dk_vocab_decompose`].
///
/// # Safety
/// `digits` must point to `digits_len` readable values.
#[no_mangle]
pub unsafe extern "C" fn dk_vocab_compose(
    v_f: u32,
    k: u32,
    digits: *const u32,
    digits_len: usize,
    z: *mut u32,
) -> DkStatus {
    guard(|| {
        let v = vocab(v_f, k)?;
        let d = slice_arg(digits, digits_len, "digits")?;
        let token = v
            .compose(d)
            .map_err(|e| Failure::new(DkStatus::InvalidArgument, e))?;
        write_out(z, token, "z")
    })
}

fn fsq(levels: *const u32, n_levels: usize) -> Result<FsqSpec, Failure> {
    let l = unsafe { slice_arg(levels, n_levels, "levels")? };
    FsqSpec::new(l.to_vec()).map_err(|e| Failure::new(DkStatus::InvalidArgument, e))
}

/// Quantizes one latent vector (one value per level) to its FSQ index.
///
/// # Safety
/// `levels` and `latent` must point to `n_levels` readable values.
#[no_mangle]
pub unsafe extern "C" fn dk_fsq_quantize(
    levels: *const u32,
    n_levels: usize,
    latent: *const f64,
    index: *mut u32,
) -> DkStatus {
    guard(|| {
        let spec = fsq(levels, n_levels)?;
        let x = slice_arg(latent, n_levels, "latent")?;
        let i = spec
            .quantize(x)
            .map_err(|e| Failure::new(DkStatus::InvalidArgument, e))?;
        write_out(index, i, "index")
    })
}

/// Writes the grid point of FSQ `index` to `out` (`n_levels` values).
///
/// # Safety
/// `levels` must point to `n_levels` readable values and `out` to `n_levels`
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn dk_fsq_dequantize(
    levels: *const u32,
    n_levels: usize,
    index: u32,
    out: *mut f64,
) -> DkStatus {
    guard(|| {
        let spec = fsq(levels, n_levels)?;
        let dst = out_slice(out, n_levels, n_levels, "out")?;
        let x = spec
            .dequantize(index)
            .map_err(|e| Failure::new(DkStatus::InvalidArgument, e))?;
        dst.copy_from_slice(&x);
        Ok(())
    })
}

/// Generated excitation trajectory.
pub struct DkTrajectory {
    steps: Vec<TrajectoryStep>,
}

/// Generates a trajectory. `ou_json` and `excitation_json` may be NULL for
/// defaults; `p0` is the 3-element start position, or NULL for the
/// workspace center.
///
/// # Safety
/// String arguments must be NUL-terminated or NULL, `p0` must point to 3
/// doubles or be NULL, and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dk_trajectory_generate(
    ou_json: *const c_char,
    excitation_json: *const c_char,
    p0: *const f64,
    out: *mut *mut DkTrajectory,
) -> DkStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let ou: OuParams = parse_json(opt_str_arg(ou_json, "ou_json")?, "ou")?;
        let exc: ExcitationConfig = parse_json(
            opt_str_arg(excitation_json, "excitation_json")?,
            "excitation",
        )?;
        let start = if p0.is_null() {
            exc.workspace.center()
        } else {
            let s = slice_arg(p0, 3, "p0")?;
            [s[0], s[1], s[2]]
        };
        let steps = generate_trajectory(&ou, &exc, start)
            .map_err(|e| Failure::new(DkStatus::InvalidArgument, e))?;
        out.write(Box::into_raw(Box::new(DkTrajectory { steps })));
        Ok(())
    })
}

/// Number of steps, or 0 for NULL.
///
/// # Safety
/// `traj` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dk_trajectory_len(traj: *const DkTrajectory) -> usize {
    traj.as_ref().map_or(0, |t| t.steps.len())
}

/// Copies step `k`: the command into `x` and the target position into `p`
/// (3 doubles each).
///
/// # Safety
/// `traj` must be a live handle; `x` and `p` must each hold 3 doubles.
#[no_mangle]
pub unsafe extern "C" fn dk_trajectory_step(
    traj: *const DkTrajectory,
    k: usize,
    x: *mut f64,
    p: *mut f64,
) -> DkStatus {
    guard(|| {
        let t = traj.as_ref().ok_or_else(|| null("traj"))?;
        let step = t.steps.get(k).ok_or_else(|| {
            Failure::new(
                DkStatus::InvalidArgument,
                format!("step {k} out of range for {} steps", t.steps.len()),
            )
        })?;
        out_slice(x, 3, 3, "x")?.copy_from_slice(&step.x);
        out_slice(p, 3, 3, "p")?.copy_from_slice(&step.p);
        Ok(())
    })
}

/// Releases a trajectory. NULL is ignored.
///
/// # Safety
/// `traj` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dk_trajectory_free(traj: *mut DkTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

/// Dynamics model with its configuration.
pub struct DkModel {
    cfg: ModelConfig,
    state: ModelState,
}

/// Shape summary of a model.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DkModelDims {
    pub frames: usize,
    pub t_hist: usize,
    /// Tokens per frame.
    pub spatial: usize,
    pub factors: usize,
    pub factor_size: usize,
    pub n_joints: usize,
    pub vocab_size: u64,
}

unsafe fn emit_model(out: *mut *mut DkModel, cfg: ModelConfig, state: ModelState) {
    out.write(Box::into_raw(Box::new(DkModel { cfg, state })));
}

/// Creates the toy-scale model with deterministic initialization from `seed`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dk_model_new_toy(seed: u64, out: *mut *mut DkModel) -> DkStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = ModelConfig::toy();
        let state =
            ModelState::init(&cfg, seed).map_err(|e| Failure::new(DkStatus::InvalidArgument, e))?;
        emit_model(out, cfg, state);
        Ok(())
    })
}

/// Loads a checkpoint file.
///
/// # Safety
/// `path` must be NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dk_model_load(path: *const c_char, out: *mut *mut DkModel) -> DkStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let p = str_arg(path, "path")?;
        let (cfg, state) = load_checkpoint(Path::new(p), None).map_err(|e| {
            let status = match e {
                dreamkit::dynamics::CheckpointError::Io(_) => DkStatus::Io,
                _ => DkStatus::Parse,
            };
            Failure::new(status, e)
        })?;
        emit_model(out, cfg, state);
        Ok(())
    })
}

/// Writes the model's shape summary.
///
/// # Safety
/// `model` must be a live handle and `dims` writable.
#[no_mangle]
pub unsafe extern "C" fn dk_model_dims(model: *const DkModel, dims: *mut DkModelDims) -> DkStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let c = &m.cfg;
        write_out(
            dims,
            DkModelDims {
                frames: c.frames,
                t_hist: c.t_hist,
                spatial: c.spatial(),
                factors: c.vocab.factors() as usize,
                factor_size: c.vocab.factor_size() as usize,
                n_joints: c.n_joints,
                vocab_size: c.vocab.size(),
            },
            "dims",
        )
    })
}

/// Runs one forward pass.
///
/// Inputs: `tokens` is `frames x spatial` (the MASK id is `vocab_size`),
/// `actions` is `frames x 3`, `joints` is `frames x n_joints`. Outputs:
/// `video` and `contact` receive `frames x spatial x factors x factor_size`
/// logits, `joint_pred` receives `frames x n_joints` values. `joint_pred`
/// may be NULL with length 0 when not needed, likewise `contact`.
///
/// # Safety
/// Every pointer must reference a buffer of at least its stated length.
#[no_mangle]
pub unsafe extern "C" fn dk_model_forward(
    model: *const DkModel,
    tokens: *const u32,
    tokens_len: usize,
    actions: *const f64,
    actions_len: usize,
    joints: *const f64,
    joints_len: usize,
    video: *mut f64,
    video_len: usize,
    contact: *mut f64,
    contact_len: usize,
    joint_pred: *mut f64,
    joint_pred_len: usize,
) -> DkStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let c = &m.cfg;
        let (t, s, nj) = (c.frames, c.spatial(), c.n_joints);
        let bad = |what: &str, got: usize, want: usize| {
            Failure::new(
                DkStatus::InvalidArgument,
                format!("{what} has {got} values, expected {want}"),
            )
        };
        if tokens_len != t * s {
            return Err(bad("tokens", tokens_len, t * s));
        }
        if actions_len != t * 3 {
            return Err(bad("actions", actions_len, t * 3));
        }
        if joints_len != t * nj {
            return Err(bad("joints", joints_len, t * nj));
        }
        let tok = slice_arg(tokens, tokens_len, "tokens")?.to_vec();
        let act = slice_arg(actions, actions_len, "actions")?;
        let jnt = slice_arg(joints, joints_len, "joints")?;
        let grid = TokenGrid::new(t, c.grid_h, c.grid_w, c.t_hist, c.vocab, tok)
            .map_err(|e| Failure::new(DkStatus::InvalidArgument, e))?;
        let cond = Conditioning {
            actions: act.chunks(3).map(|a| [a[0], a[1], a[2]]).collect(),
            joints: if nj == 0 {
                vec![Vec::new(); t]
            } else {
                jnt.chunks(nj).map(<[f64]>::to_vec).collect()
            },
        };
        let logits = t * s * c.head_width();
        let v_out = out_slice(video, video_len, logits, "video")?;
        let c_out = if contact.is_null() && contact_len == 0 {
            None
        } else {
            Some(out_slice(contact, contact_len, logits, "contact")?)
        };
        let j_out = if joint_pred.is_null() && joint_pred_len == 0 {
            None
        } else {
            Some(out_slice(joint_pred, joint_pred_len, t * nj, "joint_pred")?)
        };
        let y = forward(&grid, &cond, &m.state, c)
            .map_err(|e| Failure::new(DkStatus::InvalidArgument, e))?;
        v_out.copy_from_slice(&y.video_logits);
        if let Some(dst) = c_out {
            dst.copy_from_slice(&y.contact_logits);
        }
        if let Some(dst) = j_out {
            dst.copy_from_slice(&y.joint_pred);
        }
        Ok(())
    })
}

/// Releases a model. NULL is ignored.
///
/// # Safety
/// `model` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dk_model_free(model: *mut DkModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Parsed judge verdict. `explanation` is owned by the caller and released
/// with [`dk_string_free`].
#[repr(C)]
#[derive(Debug)]
pub struct DkVerdict {
    pub collision_likely: bool,
    pub confidence: f64,
    pub first_collision_frame: u32,
    pub explanation: *mut c_char,
}

/// Parses a raw judge reply.
///
/// # Safety
/// `raw` must be NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dk_verdict_parse(raw: *const c_char, out: *mut DkVerdict) -> DkStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let text = str_arg(raw, "raw")?;
        let v = parse_verdict(text).map_err(|e| Failure::new(DkStatus::Parse, e))?;
        let explanation = CString::new(v.explanation.replace('\0', " "))
            .expect("NULs replaced")
            .into_raw();
        out.write(DkVerdict {
            collision_likely: v.collision_likely,
            confidence: v.confidence,
            first_collision_frame: v.first_collision_frame,
            explanation,
        });
        Ok(())
    })
}
