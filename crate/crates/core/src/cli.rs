//! The `dreamkit` command line.
//!
//! Every subcommand prints a one-line JSON echo of its resolved configuration
//! to stdout before running. Exit codes: 0 success, 2 usage or configuration
//! error, 1 runtime failure.

use std::ffi::OsString;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::dataset::{self, EpisodeRecord, MetaMode, PackOptions};
use crate::dynamics::{load_checkpoint, save_checkpoint, ModelConfig, ModelPredictor, ModelState};
use crate::excitation::{
    generate_trajectory, write_trajectory_jsonl, ExcitationConfig, OuParams, EPISODE_HORIZON_RANGE,
};
use crate::gate::{
    gate_step, write_attempt_log, GateConfig, HttpJudge, HttpJudgeConfig, Judge, MockJudge,
    OuSampler, SyntheticRollout,
};
use crate::image::ImageFormat;
use crate::rng::{seeded_rng, RNG_IDENTITY};
use crate::splat::{load_scene, render_splats, CameraModel, SplatConfig, Vec3};
use crate::tokens::{
    decode_rollout, Conditioning, FactorizedVocab, MaskSchedule, OraclePredictor, Predictor,
    TokenGrid, UnmaskMode,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            Self::Usage(_) => EXIT_USAGE,
            Self::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Usage(m) => write!(f, "usage error: {m}"),
            Self::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

fn usage(m: impl std::fmt::Display) -> CliError {
    CliError::Usage(m.to_string())
}

fn runtime(m: impl std::fmt::Display) -> CliError {
    CliError::Runtime(m.to_string())
}

type CliResult<T = ()> = Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(
    name = "dreamkit",
    version,
    about = "Contact-aware world-model tooling"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Render contact forces to a splat image (PNG, or PPM for a .ppm path).
    RenderSplats(RenderArgs),
    /// Generate an OU excitation trajectory as JSON lines.
    GenTrajectory(TrajectoryArgs),
    /// Write a randomly initialized model checkpoint.
    InitCheckpoint(InitArgs),
    /// Run iterative masked decoding with an oracle or a model checkpoint.
    DecodeSim(DecodeArgs),
    /// Pack episodes into an archive directory or stored zip.
    PackDataset(PackArgs),
    /// Load an archive and dump it as JSON.
    LoadDataset(LoadArgs),
    /// Run the collision gate for a number of planning steps.
    GateSim(GateArgs),
}

#[derive(Args, Debug)]
pub struct RenderArgs {
    /// JSON array of `{p, f}` contacts in world coordinates.
    #[arg(long)]
    pub scene: PathBuf,
    /// Camera JSON.
    #[arg(long)]
    pub camera: PathBuf,
    /// Splat parameters JSON; defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectoryConfig {
    pub ou: OuParams,
    pub excitation: ExcitationConfig,
    /// Start position; the workspace center when absent.
    pub p0: Option<Vec3>,
}

#[derive(Args, Debug)]
pub struct TrajectoryArgs {
    /// `{ou, excitation, p0}` JSON; defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides `ou.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides `excitation.horizon`; must lie in 300..=600.
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct InitArgs {
    /// Model config JSON; the toy configuration when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModeArg {
    Greedy,
    Random,
}

#[derive(Args, Debug)]
pub struct DecodeArgs {
    /// `oracle:<target tokens.bin>` or `model:<checkpoint>`.
    #[arg(long)]
    pub predictor: String,
    /// Token file whose first `t_hist` frames are the context. Defaults to
    /// the oracle target.
    #[arg(long)]
    pub context: Option<PathBuf>,
    /// Grid `HxW` (oracle only; models use their config).
    #[arg(long, default_value = "4x4")]
    pub grid: String,
    /// Factor size v_f (oracle only).
    #[arg(long, default_value_t = 16)]
    pub factor_size: u32,
    /// Number of factors k (oracle only).
    #[arg(long, default_value_t = 2)]
    pub factors: u32,
    /// History frames (oracle only).
    #[arg(long, default_value_t = 2)]
    pub t_hist: usize,
    /// Frames to decode; all remaining frames when omitted.
    #[arg(long)]
    pub n_future: Option<usize>,
    #[arg(long, default_value_t = 8)]
    pub steps: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Greedy)]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Decoded token grid, u32 LE frame-major.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-frame mask-count trace, JSON lines.
    #[arg(long)]
    pub trace: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PackConfig {
    pub codebook_size: u64,
    pub contact_codebook_size: u64,
    pub frame_rate: f64,
    pub horizon_min: usize,
    pub horizon_max: usize,
    pub extras: std::collections::BTreeMap<String, Value>,
}

impl Default for PackConfig {
    fn default() -> Self {
        let d = PackOptions::default();
        Self {
            codebook_size: d.codebook_size,
            contact_codebook_size: d.contact_codebook_size,
            frame_rate: d.frame_rate,
            horizon_min: *d.horizon.start(),
            horizon_max: *d.horizon.end(),
            extras: d.extras,
        }
    }
}

#[derive(Args, Debug)]
pub struct PackArgs {
    /// Episode JSON files, packed in the given order.
    #[arg(long = "episode", num_args = 1..)]
    pub episodes: Vec<PathBuf>,
    /// Pack this many synthetic episodes instead.
    #[arg(long, conflicts_with = "episodes")]
    pub synthetic: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Synthetic episode length.
    #[arg(long, default_value_t = 300)]
    pub frames: usize,
    #[arg(long, default_value_t = 16)]
    pub tokens_per_frame: usize,
    #[arg(long, default_value_t = 7)]
    pub n_joints: usize,
    /// Pack options JSON; defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Archive directory, or a path ending in .zip.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct LoadArgs {
    #[arg(long)]
    pub archive: PathBuf,
    /// Keep unknown meta.json fields instead of rejecting them.
    #[arg(long)]
    pub lax: bool,
    /// `{meta, episodes}` JSON output.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GateSimConfig {
    pub gate: GateConfig,
    pub ou: OuParams,
    pub excitation: ExcitationConfig,
    pub http: HttpJudgeConfig,
}

#[derive(Args, Debug)]
pub struct GateArgs {
    /// `mock:<script.json>` or `http:<url>`.
    #[arg(long)]
    pub judge: String,
    /// `{gate, ou, excitation, http}` JSON; defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub steps: usize,
    /// Overrides `ou.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Attempt log, JSON lines.
    #[arg(long)]
    pub log: PathBuf,
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

/// Parses a JSON config file. Bad JSON or schema violations are usage errors.
fn read_config<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn read_config_or_default<T: for<'de> Deserialize<'de> + Default>(
    path: Option<&Path>,
) -> CliResult<T> {
    path.map_or_else(|| Ok(T::default()), read_config)
}

fn echo(out: &mut dyn Write, command: &str, config: Value) -> CliResult {
    let line = json!({"command": command, "rng": RNG_IDENTITY, "config": config});
    writeln!(out, "{line}").map_err(runtime)
}

fn create(path: &Path) -> CliResult<BufWriter<fs::File>> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| runtime(format!("{}: {e}", path.display())))
}

pub fn read_token_file(path: &Path) -> CliResult<Vec<u32>> {
    let bytes = fs::read(path).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    if bytes.len() % 4 != 0 {
        return Err(usage(format!(
            "{}: length {} is not a multiple of 4",
            path.display(),
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub fn write_token_file(path: &Path, tokens: &[u32]) -> CliResult {
    let bytes: Vec<u8> = tokens.iter().flat_map(|z| z.to_le_bytes()).collect();
    fs::write(path, bytes).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn parse_grid(s: &str) -> CliResult<(usize, usize)> {
    let (h, w) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| usage(format!("grid {s:?} is not HxW")))?;
    let p = |v: &str| {
        v.trim()
            .parse::<usize>()
            .map_err(|_| usage(format!("grid {s:?} is not HxW")))
    };
    let (h, w) = (p(h)?, p(w)?);
    if h == 0 || w == 0 {
        return Err(usage("grid dimensions must be positive"));
    }
    Ok((h, w))
}

fn run_render(a: &RenderArgs, out: &mut dyn Write) -> CliResult {
    let camera = CameraModel::from_json(&read_text(&a.camera)?)
        .map_err(|e| usage(format!("{}: {e}", a.camera.display())))?;
    let cfg: SplatConfig = read_config_or_default(a.config.as_deref())?;
    cfg.validate().map_err(usage)?;
    let contacts = load_scene(&read_text(&a.scene)?)
        .map_err(|e| usage(format!("{}: {e}", a.scene.display())))?;
    echo(
        out,
        "render-splats",
        json!({"camera": camera, "splat": cfg, "contacts": contacts.len()}),
    )?;
    let img = render_splats(&contacts, &camera, &cfg).map_err(runtime)?;
    let format = ImageFormat::from_path(&a.out).unwrap_or_default();
    img.to_rgb8().write_to(&a.out, format).map_err(runtime)
}

fn run_trajectory(a: &TrajectoryArgs, out: &mut dyn Write) -> CliResult {
    let mut cfg: TrajectoryConfig = read_config_or_default(a.config.as_deref())?;
    if let Some(s) = a.seed {
        cfg.ou.seed = s;
    }
    if let Some(h) = a.horizon {
        cfg.excitation.horizon = h;
    }
    if !EPISODE_HORIZON_RANGE.contains(&cfg.excitation.horizon) {
        return Err(usage(format!(
            "horizon {} outside {}..={}",
            cfg.excitation.horizon,
            EPISODE_HORIZON_RANGE.start(),
            EPISODE_HORIZON_RANGE.end()
        )));
    }
    cfg.ou.validate().map_err(usage)?;
    cfg.excitation.validate().map_err(usage)?;
    let p0 = cfg.p0.unwrap_or_else(|| cfg.excitation.workspace.center());
    echo(
        out,
        "gen-trajectory",
        serde_json::to_value(&cfg).map_err(runtime)?,
    )?;
    let steps = generate_trajectory(&cfg.ou, &cfg.excitation, p0).map_err(usage)?;
    let mut w = create(&a.out)?;
    write_trajectory_jsonl(&mut w, &cfg.ou, &cfg.excitation, p0, &steps).map_err(runtime)?;
    w.flush().map_err(runtime)
}

fn run_init(a: &InitArgs, out: &mut dyn Write) -> CliResult {
    let cfg: ModelConfig = match &a.config {
        Some(p) => read_config(p)?,
        None => ModelConfig::toy(),
    };
    cfg.validate().map_err(usage)?;
    echo(
        out,
        "init-checkpoint",
        json!({"model": cfg, "seed": a.seed}),
    )?;
    let state = ModelState::init(&cfg, a.seed).map_err(usage)?;
    save_checkpoint(&a.out, &cfg, &state).map_err(runtime)
}

fn run_decode(a: &DecodeArgs, out: &mut dyn Write) -> CliResult {
    let schedule = MaskSchedule {
        n_steps: a.steps,
        temperature: a.temperature,
        mode: match a.mode {
            ModeArg::Greedy => UnmaskMode::Greedy,
            ModeArg::Random => UnmaskMode::Random,
        },
    };
    schedule.validate().map_err(usage)?;
    let (kind, path) = a
        .predictor
        .split_once(':')
        .ok_or_else(|| usage("--predictor must be oracle:<path> or model:<path>"))?;
    let path = Path::new(path);

    let (predictor, mut grid, cond, model_echo): (
        Box<dyn Predictor>,
        TokenGrid,
        Conditioning,
        Value,
    ) = match kind {
        "oracle" => {
            let (h, w) = parse_grid(&a.grid)?;
            let vocab = FactorizedVocab::from_factors(a.factor_size, a.factors).map_err(usage)?;
            let target = read_token_file(path)?;
            let s = h * w;
            if target.is_empty() || target.len() % s != 0 {
                return Err(usage(format!(
                    "target holds {} tokens, not a multiple of {s}",
                    target.len()
                )));
            }
            let frames = target.len() / s;
            let target = TokenGrid::new(frames, h, w, a.t_hist, vocab, target).map_err(usage)?;
            let context = match &a.context {
                Some(p) => TokenGrid::new(frames, h, w, a.t_hist, vocab, read_token_file(p)?)
                    .map_err(usage)?,
                None => target.clone(),
            };
            let echo = json!({"kind": "oracle", "frames": frames, "grid": [h, w], "vocab": vocab, "t_hist": a.t_hist});
            (
                Box::new(OraclePredictor::new(target)),
                context,
                Conditioning::zeros(frames, 0),
                echo,
            )
        }
        "model" => {
            let (cfg, state) = load_checkpoint(path, None).map_err(runtime)?;
            let ctx_path = a
                .context
                .as_ref()
                .ok_or_else(|| usage("model decoding needs --context"))?;
            let grid = TokenGrid::new(
                cfg.frames,
                cfg.grid_h,
                cfg.grid_w,
                cfg.t_hist,
                cfg.vocab,
                read_token_file(ctx_path)?,
            )
            .map_err(usage)?;
            let cond = Conditioning::zeros(cfg.frames, cfg.n_joints);
            let echo = json!({"kind": "model", "model": cfg});
            (Box::new(ModelPredictor::new(cfg, state)), grid, cond, echo)
        }
        other => return Err(usage(format!("unknown predictor kind {other:?}"))),
    };
    let n_future = a.n_future.unwrap_or(grid.frames - grid.t_hist);
    if grid.t_hist + n_future > grid.frames {
        return Err(usage(format!(
            "n_future {n_future} from t_hist {} exceeds {} frames",
            grid.t_hist, grid.frames
        )));
    }
    let mask = grid.mask_token();
    for t in grid.t_hist..grid.t_hist + n_future {
        grid.frame_mut(t).fill(mask);
    }
    let config = json!({"predictor": model_echo, "schedule": schedule, "n_future": n_future, "seed": a.seed});
    echo(out, "decode-sim", config.clone())?;

    let mut rng = seeded_rng(a.seed);
    let (decoded, traces) = decode_rollout(
        predictor.as_ref(),
        &grid,
        n_future,
        &cond,
        &schedule,
        &mut rng,
    )
    .map_err(runtime)?;
    write_token_file(&a.out, &decoded.tokens)?;
    let mut w = create(&a.trace)?;
    let header = json!({"kind": "header", "rng": RNG_IDENTITY, "config": config});
    writeln!(w, "{header}").map_err(runtime)?;
    for t in &traces {
        serde_json::to_writer(&mut w, t).map_err(runtime)?;
        w.write_all(b"\n").map_err(runtime)?;
    }
    w.flush().map_err(runtime)
}

fn run_pack(a: &PackArgs, out: &mut dyn Write) -> CliResult {
    let pc: PackConfig = read_config_or_default(a.config.as_deref())?;
    if pc.horizon_min > pc.horizon_max {
        return Err(usage("horizon_min exceeds horizon_max"));
    }
    let opts = PackOptions {
        codebook_size: pc.codebook_size,
        contact_codebook_size: pc.contact_codebook_size,
        frame_rate: pc.frame_rate,
        horizon: pc.horizon_min..=pc.horizon_max,
        extras: pc.extras.clone(),
    };
    let episodes: Vec<EpisodeRecord> = match a.synthetic {
        Some(n) => (0..n as u64)
            .map(|i| {
                dataset::synthetic_episode(
                    a.seed.wrapping_add(i),
                    a.frames,
                    a.tokens_per_frame,
                    a.n_joints,
                    pc.codebook_size.min(pc.contact_codebook_size),
                )
            })
            .collect::<Result<_, _>>()
            .map_err(usage)?,
        None => a
            .episodes
            .iter()
            .map(|p| read_config(p))
            .collect::<CliResult<_>>()?,
    };
    if episodes.is_empty() {
        return Err(usage("nothing to pack: pass --episode or --synthetic"));
    }
    let source = match a.synthetic {
        Some(n) => {
            json!({"synthetic": n, "seed": a.seed, "frames": a.frames, "tokens_per_frame": a.tokens_per_frame, "n_joints": a.n_joints})
        }
        None => json!({"episodes": a.episodes.len()}),
    };
    echo(out, "pack-dataset", json!({"pack": pc, "source": source}))?;
    dataset::pack_dataset(&episodes, &a.out, &opts).map_err(|e| match e {
        dataset::DatasetError::Invalid(_) | dataset::DatasetError::TokenOutOfRange { .. } => {
            usage(e)
        }
        _ => runtime(e),
    })?;
    Ok(())
}

fn run_load(a: &LoadArgs, out: &mut dyn Write) -> CliResult {
    let mode = if a.lax {
        MetaMode::Lax
    } else {
        MetaMode::Strict
    };
    echo(out, "load-dataset", json!({"lax": a.lax}))?;
    let ds = dataset::load_dataset(&a.archive, mode).map_err(runtime)?;
    let mut w = create(&a.out)?;
    serde_json::to_writer(&mut w, &json!({"meta": ds.meta, "episodes": ds.episodes}))
        .map_err(runtime)?;
    w.write_all(b"\n").map_err(runtime)?;
    w.flush().map_err(runtime)
}

fn run_gate(a: &GateArgs, out: &mut dyn Write) -> CliResult {
    let mut cfg: GateSimConfig = read_config_or_default(a.config.as_deref())?;
    if let Some(s) = a.seed {
        cfg.ou.seed = s;
    }
    cfg.gate.validate().map_err(usage)?;
    let (kind, target) = a
        .judge
        .split_once(':')
        .ok_or_else(|| usage("--judge must be mock:<script.json> or http:<url>"))?;
    let mut judge: Box<dyn Judge> = match kind {
        "mock" => Box::new(MockJudge::from_json(&read_text(Path::new(target))?).map_err(usage)?),
        "http" => {
            cfg.http.endpoint = target.to_string();
            Box::new(HttpJudge::new(cfg.http.clone()))
        }
        other => return Err(usage(format!("unknown judge kind {other:?}"))),
    };
    let mut sampler = OuSampler::new(cfg.ou.clone(), cfg.excitation.clone()).map_err(usage)?;
    let mut rollout = SyntheticRollout {
        v_scale: cfg.excitation.v_scale,
        ..SyntheticRollout::default()
    };
    let mut config = serde_json::to_value(&cfg).map_err(runtime)?;
    if kind == "mock" {
        config.as_object_mut().expect("object").remove("http");
    }
    echo(
        out,
        "gate-sim",
        json!({"judge": kind, "steps": a.steps, "sim": config}),
    )?;

    let mut log = create(&a.log)?;
    for step in 0..a.steps {
        let outcome =
            gate_step(step, &mut sampler, &mut rollout, &mut judge, &cfg.gate).map_err(usage)?;
        write_attempt_log(&mut log, &outcome.attempts).map_err(runtime)?;
        let line = json!({
            "step": step,
            "executed": outcome.executed,
            "retreated": outcome.retreated,
            "attempts": outcome.attempts.len(),
        });
        writeln!(out, "{line}").map_err(runtime)?;
    }
    log.flush().map_err(runtime)
}

pub fn execute(cli: &Cli, out: &mut dyn Write) -> CliResult {
    match &cli.command {
        Command::RenderSplats(a) => run_render(a, out),
        Command::GenTrajectory(a) => run_trajectory(a, out),
        Command::InitCheckpoint(a) => run_init(a, out),
        Command::DecodeSim(a) => run_decode(a, out),
        Command::PackDataset(a) => run_pack(a, out),
        Command::LoadDataset(a) => run_load(a, out),
        Command::GateSim(a) => run_gate(a, out),
    }
}

/// Parses `args` (including the program name), runs, and returns the exit
/// code. Diagnostics go to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{e}");
                    EXIT_USAGE
                }
            };
        }
    };
    match execute(&cli, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "dreamkit: {e}");
            e.code()
        }
    }
}
