//! Command-line front end.
//!
//! Exit codes: 0 on success, 2 for usage errors, 3 for runtime failures.
//! Every flag can also be set through an `O2V_`-prefixed environment variable.
//! Each run writes a [`RunManifest`] next to its outputs; `replay` re-executes
//! a run from that file alone.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::checkpoint::{check_architecture, load_checkpoint};
use crate::dataset::{build_dataset, read_dataset, write_dataset, DatasetBundle, DatasetKind, SplitCounts, DEFAULT_RESOLUTION};
use crate::error::TrainError;
use crate::latent_ode::{DEFAULT_HIDDEN, DEFAULT_STEPS_PER_FRAME};
use crate::metrics::{evaluate_split, expand_event_windows, latent_norms, EvalOptions, NormBreakdown};
use crate::plot::{breakdown_bars, latent_panel, norm_overlay, write_figure};
use crate::sim::{BallWorldConfig, PendulumConfig, ProjectileConfig};
use crate::trainer::{train_with_progress, TrainConfig, TrainPaths};
use crate::vae::VariationalModel;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "ode2vae", version, about = "Second-order ODE VAE for physical motion video")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate, render and write a dataset.
    Generate(GenerateArgs),
    /// Train a model on a dataset.
    Train(TrainArgs),
    /// Reconstruction error and NLL over a split.
    Eval(EvalArgs),
    /// Latent-norm figures and event breakdown.
    Analyze(AnalyzeArgs),
    /// Generate, train, evaluate and analyze at reduced scale.
    Reproduce(ReproduceArgs),
    /// Re-run a recorded run from its manifest.
    Replay(ReplayArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KindArg {
    Bouncing,
    Pendulum,
    Projectile,
}

fn parse_counts(s: &str) -> Result<SplitCounts, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err("expected TRAIN,VAL,TEST".into());
    }
    let n: Vec<usize> = parts
        .iter()
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    if n.contains(&0) {
        return Err("split counts must be positive".into());
    }
    Ok(SplitCounts { train: n[0], val: n[1], test: n[2] })
}

fn parse_channels(s: &str) -> Result<[usize; 3], String> {
    let n: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    match n.as_slice() {
        [a, b, c] if *a > 0 && *b > 0 && *c > 0 => Ok([*a, *b, *c]),
        _ => Err("expected three positive channel counts C0,C1,C2".into()),
    }
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct GenerateArgs {
    #[arg(long, value_enum, env = "O2V_KIND")]
    pub kind: KindArg,
    /// Number of balls (bouncing only; default 1).
    #[arg(long, env = "O2V_BALLS")]
    pub balls: Option<usize>,
    #[arg(long, value_parser = parse_counts, default_value = "10000,500,500", env = "O2V_COUNTS")]
    pub counts: SplitCounts,
    #[arg(long, default_value_t = 0, env = "O2V_SEED")]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_RESOLUTION, env = "O2V_RESOLUTION")]
    pub resolution: usize,
    #[arg(long, env = "O2V_OUT")]
    pub out: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    #[arg(long, env = "O2V_DATA")]
    pub data: PathBuf,
    /// Defaults per dataset family.
    #[arg(long, env = "O2V_LATENT_DIM")]
    pub latent_dim: Option<usize>,
    /// Defaults per dataset family.
    #[arg(long, env = "O2V_EPOCHS")]
    pub epochs: Option<usize>,
    #[arg(long, default_value_t = 0.001, env = "O2V_LR")]
    pub lr: f64,
    #[arg(long, default_value_t = 32, env = "O2V_BATCH")]
    pub batch: usize,
    #[arg(long, default_value_t = 1.0, env = "O2V_GAMMA")]
    pub gamma: f64,
    #[arg(long, default_value_t = 3, env = "O2V_AMORTIZED_LEN")]
    pub amortized_len: usize,
    #[arg(long, default_value_t = DEFAULT_STEPS_PER_FRAME, env = "O2V_STEPS_PER_FRAME")]
    pub steps_per_frame: usize,
    #[arg(long, default_value_t = 0, env = "O2V_SEED")]
    pub seed: u64,
    #[arg(long, value_parser = parse_channels, default_value = "16,32,64", env = "O2V_CHANNELS")]
    pub channels: [usize; 3],
    #[arg(long, default_value_t = DEFAULT_HIDDEN, env = "O2V_HIDDEN")]
    pub hidden: usize,
    #[arg(long, default_value_t = 1, env = "O2V_CHECKPOINT_EVERY")]
    pub checkpoint_every: usize,
    #[arg(long, default_value_t = 10, env = "O2V_VAL_SAMPLES")]
    pub val_samples: usize,
    /// Score at most this many validation sequences per epoch.
    #[arg(long, env = "O2V_VAL_LIMIT")]
    pub val_limit: Option<usize>,
    #[arg(long, env = "O2V_OUT")]
    pub out: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct EvalArgs {
    #[arg(long, env = "O2V_DATA")]
    pub data: PathBuf,
    #[arg(long, env = "O2V_CKPT")]
    pub ckpt: PathBuf,
    #[arg(long, default_value_t = 10, env = "O2V_SAMPLES")]
    pub samples: usize,
    #[arg(long, env = "O2V_REPORT")]
    pub report: PathBuf,
    #[arg(long, default_value = "test", env = "O2V_SPLIT")]
    pub split: String,
    /// Evaluate only the first N sequences of the split.
    #[arg(long, env = "O2V_LIMIT")]
    pub limit: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_STEPS_PER_FRAME, env = "O2V_STEPS_PER_FRAME")]
    pub steps_per_frame: usize,
    #[arg(long, default_value_t = 3, env = "O2V_WINDOW")]
    pub window: usize,
    #[arg(long, default_value_t = 0, env = "O2V_SEED")]
    pub seed: u64,
    /// Fail unless the checkpoint has this latent dimension.
    #[arg(long, env = "O2V_LATENT_DIM")]
    pub latent_dim: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct AnalyzeArgs {
    #[arg(long, env = "O2V_DATA")]
    pub data: PathBuf,
    #[arg(long, env = "O2V_CKPT")]
    pub ckpt: PathBuf,
    #[arg(long, default_value_t = 3, env = "O2V_WINDOW")]
    pub window: usize,
    #[arg(long, default_value_t = 0, env = "O2V_CASE_INDEX")]
    pub case_index: usize,
    #[arg(long, default_value_t = 10, env = "O2V_SAMPLES")]
    pub samples: usize,
    #[arg(long, default_value = "test", env = "O2V_SPLIT")]
    pub split: String,
    #[arg(long, env = "O2V_LIMIT")]
    pub limit: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_STEPS_PER_FRAME, env = "O2V_STEPS_PER_FRAME")]
    pub steps_per_frame: usize,
    #[arg(long, default_value_t = 0, env = "O2V_SEED")]
    pub seed: u64,
    #[arg(long, env = "O2V_OUT")]
    pub out: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct ReproduceArgs {
    #[arg(long, value_enum, default_value = "bouncing", env = "O2V_KIND")]
    pub kind: KindArg,
    #[arg(long, env = "O2V_BALLS")]
    pub balls: Option<usize>,
    #[arg(long, value_parser = parse_counts, default_value = "100,10,10", env = "O2V_COUNTS")]
    pub counts: SplitCounts,
    #[arg(long, default_value_t = 2, env = "O2V_EPOCHS")]
    pub epochs: usize,
    #[arg(long, default_value_t = 8, env = "O2V_BATCH")]
    pub batch: usize,
    #[arg(long, default_value_t = 0.001, env = "O2V_LR")]
    pub lr: f64,
    #[arg(long, default_value_t = 1.0, env = "O2V_GAMMA")]
    pub gamma: f64,
    #[arg(long, value_parser = parse_channels, default_value = "8,16,32", env = "O2V_CHANNELS")]
    pub channels: [usize; 3],
    #[arg(long, default_value_t = 10, env = "O2V_SAMPLES")]
    pub samples: usize,
    #[arg(long, default_value_t = 0, env = "O2V_SEED")]
    pub seed: u64,
    #[arg(long, env = "O2V_OUT")]
    pub out: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    /// A run manifest written by an earlier run.
    pub manifest: PathBuf,
    /// Redirect the primary output (directory, checkpoint or report path).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Record of one run, sufficient to replay it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub tool_version: String,
    pub subcommand: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub artifacts: Vec<PathBuf>,
    pub started_at: String,
    pub finished_at: String,
}

enum CliError {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339()
}

fn manifest_path_for_file(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".run.json");
    PathBuf::from(s)
}

fn write_manifest<C: Serialize>(
    at: &Path,
    subcommand: &str,
    config: &C,
    seed: u64,
    artifacts: Vec<PathBuf>,
    started_at: String,
) -> anyhow::Result<PathBuf> {
    let manifest = RunManifest {
        tool: "ode2vae".into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        subcommand: subcommand.into(),
        config: serde_json::to_value(config)?,
        seed,
        artifacts,
        started_at,
        finished_at: now(),
    };
    if let Some(dir) = at.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(at, serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(at.to_path_buf())
}

fn dataset_kind(kind: KindArg, balls: Option<usize>) -> Result<DatasetKind, CliError> {
    match (kind, balls) {
        (KindArg::Bouncing, b) => {
            let n = b.unwrap_or(1);
            if n == 0 {
                return Err(usage("--balls must be at least 1"));
            }
            Ok(DatasetKind::Bouncing(BallWorldConfig::with_balls(n)))
        }
        (_, Some(_)) => Err(usage("--balls is only valid with --kind bouncing")),
        (KindArg::Pendulum, None) => Ok(DatasetKind::Pendulum(PendulumConfig::default())),
        (KindArg::Projectile, None) => Ok(DatasetKind::Projectile(ProjectileConfig::default())),
    }
}

/// Training epochs used when none are given.
pub fn default_epochs(kind: &DatasetKind) -> usize {
    match kind {
        DatasetKind::Bouncing(c) => match c.n_balls {
            1 => 250,
            2 => 500,
            _ => 1000,
        },
        DatasetKind::Pendulum(_) | DatasetKind::Projectile(_) => 300,
    }
}

fn cmd_generate(args: &GenerateArgs) -> Result<Vec<PathBuf>, CliError> {
    let started = now();
    let kind = dataset_kind(args.kind, args.balls)?;
    if args.resolution < 8 || !args.resolution.is_multiple_of(8) {
        return Err(usage("--resolution must be a positive multiple of 8"));
    }
    let bundle = build_dataset(kind, args.counts, args.seed, args.resolution).context("dataset generation failed")?;
    write_dataset(&bundle, &args.out).with_context(|| format!("writing {}", args.out.display()))?;
    let m = write_manifest(&args.out.join("run_manifest.json"), "generate", args, args.seed, vec![args.out.clone()], started)?;
    eprintln!("wrote {} ({} train, {} val, {} test)", args.out.display(), args.counts.train, args.counts.val, args.counts.test);
    Ok(vec![args.out.clone(), m])
}

fn load_data(dir: &Path) -> anyhow::Result<DatasetBundle> {
    read_dataset(dir).with_context(|| format!("reading dataset {}", dir.display()))
}

/// Fully resolved training settings, as recorded in the run manifest.
#[derive(Serialize)]
struct ResolvedTrain<'a> {
    #[serde(flatten)]
    args: &'a TrainArgs,
    resolved: &'a TrainConfig,
}

fn cmd_train(args: &TrainArgs) -> Result<Vec<PathBuf>, CliError> {
    let started = now();
    let data = load_data(&args.data)?;
    let kind = &data.manifest.kind;
    let mut config = TrainConfig::new(args.latent_dim.unwrap_or(kind.default_latent_dim()), args.epochs.unwrap_or(default_epochs(kind)));
    config.learning_rate = args.lr;
    config.batch_size = args.batch;
    config.gamma = args.gamma;
    config.amortized_len = args.amortized_len;
    config.steps_per_frame = args.steps_per_frame;
    config.seed = args.seed;
    config.channels = args.channels;
    config.field_hidden = args.hidden;
    config.checkpoint_every = args.checkpoint_every;
    config.val_mc_samples = args.val_samples;
    config.val_limit = args.val_limit;
    if let Err(e) = config.validate(data.manifest.seq_len) {
        return Err(usage(e.to_string()));
    }
    let paths = TrainPaths::for_checkpoint(&args.out);
    let outcome = train_with_progress::<f32>(&data, &config, Some(&paths), |r| {
        eprintln!(
            "epoch {:>4}  train penalized ELBO {:>12.3}  val ELBO {:>12.3}  {:.1}s",
            r.epoch, r.train_penalized_elbo, r.val.total, r.wall_clock_secs
        )
    });
    match outcome {
        Ok(_) => {}
        Err(TrainError::Diverged { epoch, batch, last_good }) => {
            let hint = last_good.map_or("none".to_string(), |p| p.display().to_string());
            return Err(CliError::Runtime(anyhow::anyhow!(
                "training diverged at epoch {epoch}, batch {batch}; last good checkpoint: {hint}"
            )));
        }
        Err(e) => return Err(CliError::Runtime(e.into())),
    }
    let artifacts = vec![paths.last.clone(), paths.best.clone(), paths.log.clone()];
    let resolved = ResolvedTrain { args, resolved: &config };
    let m = write_manifest(&manifest_path_for_file(&args.out), "train", &resolved, args.seed, artifacts.clone(), started)?;
    eprintln!("wrote {}", args.out.display());
    Ok([artifacts, vec![m]].concat())
}

fn load_model_for(ckpt: &Path, data: &DatasetBundle, latent_dim: Option<usize>) -> anyhow::Result<VariationalModel<f32>> {
    let model: VariationalModel<f32> = load_checkpoint(ckpt).with_context(|| format!("loading {}", ckpt.display()))?;
    let mut expected = model.config.clone();
    expected.resolution = data.manifest.resolution;
    if let Some(a) = latent_dim {
        expected.latent_dim = a;
    }
    check_architecture(&model.config, &expected).context("checkpoint does not fit this dataset")?;
    if model.config.amortized_len > data.manifest.seq_len {
        bail!("checkpoint amortized length {} exceeds sequence length {}", model.config.amortized_len, data.manifest.seq_len);
    }
    Ok(model)
}

fn pick_split<'a>(data: &'a DatasetBundle, split: &str, limit: Option<usize>) -> Result<&'a [crate::dataset::Sequence], CliError> {
    let seqs = data.split(split).ok_or_else(|| usage(format!("unknown split {split:?} (train, val or test)")))?;
    let n = limit.unwrap_or(usize::MAX).min(seqs.len());
    if n == 0 {
        return Err(usage("no sequences selected"));
    }
    Ok(&seqs[..n])
}

fn cmd_eval(args: &EvalArgs) -> Result<Vec<PathBuf>, CliError> {
    let started = now();
    if args.samples == 0 || args.window.is_multiple_of(2) || args.steps_per_frame == 0 {
        return Err(usage("--samples and --steps-per-frame must be positive and --window odd"));
    }
    let data = load_data(&args.data)?;
    let seqs = pick_split(&data, &args.split, args.limit)?;
    let model = load_model_for(&args.ckpt, &data, args.latent_dim)?;
    let opts = EvalOptions { samples: args.samples, steps_per_frame: args.steps_per_frame, window_size: args.window, seed: args.seed };
    let eval = evaluate_split(&model, seqs, &data.manifest.name, &args.split, &opts).context("evaluation failed")?;
    if let Some(dir) = args.report.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).context("creating report directory")?;
    }
    fs::write(&args.report, serde_json::to_string_pretty(&eval.report).context("serializing report")? + "\n")
        .with_context(|| format!("writing {}", args.report.display()))?;
    let m = write_manifest(&manifest_path_for_file(&args.report), "eval", args, args.seed, vec![args.report.clone()], started)?;
    eprintln!("wrote {}", args.report.display());
    Ok(vec![args.report.clone(), m])
}

/// Numeric companion of the breakdown figure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BreakdownReport {
    pub dataset: String,
    pub split: String,
    pub num_cases: usize,
    pub seq_len: usize,
    pub window_size: usize,
    pub velocity: NormBreakdown,
    pub accel: NormBreakdown,
}

fn cmd_analyze(args: &AnalyzeArgs) -> Result<Vec<PathBuf>, CliError> {
    let started = now();
    if args.samples == 0 || args.window.is_multiple_of(2) || args.steps_per_frame == 0 {
        return Err(usage("--samples and --steps-per-frame must be positive and --window odd"));
    }
    let data = load_data(&args.data)?;
    let seqs = pick_split(&data, &args.split, args.limit)?;
    if args.case_index >= seqs.len() {
        return Err(usage(format!("--case-index {} is outside the {} selected cases", args.case_index, seqs.len())));
    }
    let model = load_model_for(&args.ckpt, &data, None)?;
    let opts = EvalOptions { samples: args.samples, steps_per_frame: args.steps_per_frame, window_size: args.window, seed: args.seed };
    let name = data.manifest.name.clone();
    let eval = evaluate_split(&model, seqs, &name, &args.split, &opts).context("evaluation failed")?;
    let report = BreakdownReport {
        dataset: name.clone(),
        split: args.split.clone(),
        num_cases: eval.report.num_cases,
        seq_len: eval.report.seq_len,
        window_size: args.window,
        velocity: eval.report.velocity_breakdown.clone(),
        accel: eval.report.accel_breakdown.clone(),
    };
    for (label, g) in [("event", &report.accel.event), ("non-event", &report.accel.non_event)] {
        if g.empty {
            eprintln!("warning: {label} group is empty; its statistics are omitted");
        }
    }
    fs::create_dir_all(&args.out).context("creating output directory")?;
    let mut artifacts = Vec::new();
    let breakdown_path = args.out.join("breakdown.json");
    fs::write(&breakdown_path, serde_json::to_string_pretty(&report).context("serializing breakdown")? + "\n")
        .context("writing breakdown")?;
    artifacts.push(breakdown_path);

    let i = args.case_index;
    let case = &eval.cases[i];
    let seq = &seqs[i];
    let norms = latent_norms(&case.trajectories).context("latent norms")?;
    let windows = expand_event_windows(&seq.events, args.window, seq.len()).context("event windows")?;
    let window_list: Vec<usize> = windows.expanded.iter().copied().collect();
    let overlay = norm_overlay(
        &format!("{name} case {i}: latent norms (mean and std over {} samples)", args.samples),
        &norms.velocity,
        &norms.accel,
        &window_list,
        &case.mean_frames,
        &seq.frames,
    );
    let bars = breakdown_bars(&format!("{name}: event windows vs other steps ({} cases)", report.num_cases), &report.velocity, &report.accel);
    let panel = latent_panel(&format!("{name} case {i}: latent positions"), &case.trajectories);
    for (fig, stem) in [
        (overlay, format!("{name}_norms_case{i}")),
        (bars, format!("{name}_breakdown_all")),
        (panel, format!("{name}_latents_case{i}")),
    ] {
        artifacts.extend(write_figure(&fig, &args.out, &stem).context("writing figure")?);
    }
    let m = write_manifest(&args.out.join("run_manifest.json"), "analyze", args, args.seed, artifacts.clone(), started)?;
    eprintln!("wrote {}", args.out.display());
    artifacts.push(m);
    Ok(artifacts)
}

fn cmd_reproduce(args: &ReproduceArgs) -> Result<Vec<PathBuf>, CliError> {
    let started = now();
    let kind = dataset_kind(args.kind, args.balls)?;
    let data_dir = args.out.join("data");
    let ckpt = args.out.join("model.ckpt");
    let mut artifacts = cmd_generate(&GenerateArgs {
        kind: args.kind,
        balls: args.balls,
        counts: args.counts,
        seed: args.seed,
        resolution: DEFAULT_RESOLUTION,
        out: data_dir.clone(),
    })?;
    artifacts.extend(cmd_train(&TrainArgs {
        data: data_dir.clone(),
        latent_dim: Some(kind.default_latent_dim()),
        epochs: Some(args.epochs),
        lr: args.lr,
        batch: args.batch,
        gamma: args.gamma,
        amortized_len: 3,
        steps_per_frame: DEFAULT_STEPS_PER_FRAME,
        seed: args.seed,
        channels: args.channels,
        hidden: DEFAULT_HIDDEN,
        checkpoint_every: 1,
        val_samples: args.samples,
        val_limit: None,
        out: ckpt.clone(),
    })?);
    artifacts.extend(cmd_eval(&EvalArgs {
        data: data_dir.clone(),
        ckpt: ckpt.clone(),
        samples: args.samples,
        report: args.out.join("report.json"),
        split: "test".into(),
        limit: None,
        steps_per_frame: DEFAULT_STEPS_PER_FRAME,
        window: 3,
        seed: args.seed,
        latent_dim: None,
    })?);
    artifacts.extend(cmd_analyze(&AnalyzeArgs {
        data: data_dir,
        ckpt,
        window: 3,
        case_index: 0,
        samples: args.samples,
        split: "test".into(),
        limit: None,
        steps_per_frame: DEFAULT_STEPS_PER_FRAME,
        seed: args.seed,
        out: args.out.join("figs"),
    })?);
    let m = write_manifest(&args.out.join("run_manifest.json"), "reproduce", args, args.seed, artifacts.clone(), started)?;
    artifacts.push(m);
    Ok(artifacts)
}

fn replay_config<T: for<'de> Deserialize<'de>>(value: &serde_json::Value) -> Result<T, CliError> {
    serde_json::from_value(value.clone()).map_err(|e| usage(format!("manifest config does not match its subcommand: {e}")))
}

fn cmd_replay(args: &ReplayArgs) -> Result<Vec<PathBuf>, CliError> {
    let text = fs::read_to_string(&args.manifest).with_context(|| format!("reading {}", args.manifest.display()))?;
    let m: RunManifest = serde_json::from_str(&text).map_err(|e| usage(format!("not a run manifest: {e}")))?;
    let out = args.out.clone();
    match m.subcommand.as_str() {
        "generate" => {
            let mut a: GenerateArgs = replay_config(&m.config)?;
            a.out = out.unwrap_or(a.out);
            cmd_generate(&a)
        }
        "train" => {
            let mut a: TrainArgs = replay_config(&m.config)?;
            a.out = out.unwrap_or(a.out);
            cmd_train(&a)
        }
        "eval" => {
            let mut a: EvalArgs = replay_config(&m.config)?;
            a.report = out.unwrap_or(a.report);
            cmd_eval(&a)
        }
        "analyze" => {
            let mut a: AnalyzeArgs = replay_config(&m.config)?;
            a.out = out.unwrap_or(a.out);
            cmd_analyze(&a)
        }
        "reproduce" => {
            let mut a: ReproduceArgs = replay_config(&m.config)?;
            a.out = out.unwrap_or(a.out);
            cmd_reproduce(&a)
        }
        other => Err(usage(format!("unknown subcommand {other:?} in manifest"))),
    }
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Reproduce(a) => cmd_reproduce(a),
        Command::Replay(a) => cmd_replay(a),
    };
    match result {
        Ok(_) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            EXIT_RUNTIME
        }
    }
}
