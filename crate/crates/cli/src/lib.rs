//! The `gmlf` command-line pipeline as a library, so runs can be driven in-process.
//!
//! Every subcommand writes into its `--out` directory and leaves a
//! `manifest.json` there recording the arguments, a config snapshot, seeds,
//! SHA-256 hashes of every input and output, and the run status.
//! `gmlf --manifest DIR/manifest.json` re-runs the recorded arguments and
//! checks that the outputs come out byte-identical.

mod commands;
mod files;
pub mod manifest;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use gmlf::eval::Explainer;
use gmlf::synth::Shape;
use serde::Serialize;

pub use files::{list_images, read_image, LabelRow, LABELS_FILE};
pub use manifest::{FileHash, RunManifest, RunStatus, MANIFEST_FILE};

use files::RunRecord;

pub const SEED_ENV: &str = "GMLF_SEED";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Usage(#[from] clap::Error),
    #[error("{0}")]
    Validation(String),
    #[error(transparent)]
    Core(#[from] gmlf::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("replay differs from the manifest: {0}")]
    ReplayMismatch(String),
}

impl CliError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn csv(path: &Path, e: csv::Error) -> Self {
        CliError::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        }
    }

    pub(crate) fn image(path: &Path, e: image::ImageError) -> Self {
        CliError::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        }
    }

    /// 3 for numeric failures (divergence, NaN), 1 for a replay that does not
    /// reproduce, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_numeric() => 3,
            CliError::ReplayMismatch(_) => 1,
            _ => 2,
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "gmlf",
    version,
    about = "Middle-level feature explanations for image classifiers",
    args_conflicts_with_subcommands = true
)]
pub struct Cli {
    /// Re-run the command recorded in a manifest and verify its outputs.
    #[arg(long, value_name = "FILE")]
    pub manifest: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Subcommand, Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Generate a labelled synthetic-shapes dataset.
    SynthData(SynthArgs),
    /// Train an MLP classifier on a labelled dataset.
    TrainClassifier(TrainClassifierArgs),
    /// Train a VAE whose latents serve as middle-level features.
    TrainVae(TrainVaeArgs),
    /// Build a segment hierarchy for one image.
    Segment(SegmentArgs),
    /// Explain one prediction in terms of segments or latents.
    Explain(ExplainArgs),
    /// MoRF curves and AOPC of explainers over a directory of images.
    Evaluate(EvaluateArgs),
    /// Redraw the overlays of a saved explanation.
    Render(RenderArgs),
    /// Summarize one or more evaluation runs as Markdown.
    Report(ReportArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::SynthData(_) => "synth-data",
            Command::TrainClassifier(_) => "train-classifier",
            Command::TrainVae(_) => "train-vae",
            Command::Segment(_) => "segment",
            Command::Explain(_) => "explain",
            Command::Evaluate(_) => "evaluate",
            Command::Render(_) => "render",
            Command::Report(_) => "report",
        }
    }

    fn seed(&self) -> Option<u64> {
        match self {
            Command::SynthData(a) => Some(a.seed.seed),
            Command::TrainClassifier(a) => Some(a.seed.seed),
            Command::TrainVae(a) => Some(a.seed.seed),
            Command::Evaluate(a) => Some(a.seed.seed),
            _ => None,
        }
    }
}

#[derive(Args, Debug, Clone, Serialize)]
#[serde(transparent)]
pub struct SeedArg {
    /// Global seed; falls back to $GMLF_SEED, then 0.
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 300)]
    pub n: usize,
    #[arg(long, value_delimiter = ',', default_value = "square,disk,triangle")]
    pub classes: Vec<Shape>,
    #[arg(long, default_value_t = 16)]
    pub size: usize,
    /// 1 writes PGM, 3 writes PPM.
    #[arg(long, default_value_t = 1)]
    pub channels: usize,
    /// Standard deviation of pixel noise.
    #[arg(long, default_value_t = 0.05)]
    pub noise: f64,
    #[command(flatten)]
    pub seed: SeedArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerArg {
    Sgd,
    SgdMomentum,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct TrainClassifierArgs {
    /// Directory holding labels.csv and its images.
    #[arg(long)]
    pub data: PathBuf,
    /// Held-out directory for reporting accuracy.
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "128,64")]
    pub hidden: Vec<usize>,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, value_enum, default_value_t = OptimizerArg::SgdMomentum)]
    pub optimizer: OptimizerArg,
    /// Global gradient-norm clip; 0 disables it.
    #[arg(long, default_value_t = 5.0)]
    pub clip: f64,
    #[command(flatten)]
    pub seed: SeedArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct TrainVaeArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = gmlf::vae::DEFAULT_LATENT_DIM)]
    pub latent: usize,
    /// Weight of the KL term.
    #[arg(long, default_value_t = gmlf::vae::DEFAULT_BETA)]
    pub beta: f64,
    #[arg(long, value_delimiter = ',', default_value = "256,64")]
    pub hidden: Vec<usize>,
    #[arg(long, default_value_t = 60)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, value_enum, default_value_t = OptimizerArg::SgdMomentum)]
    pub optimizer: OptimizerArg,
    #[arg(long, default_value_t = 20.0)]
    pub clip: f64,
    #[command(flatten)]
    pub seed: SeedArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SegmentArgs {
    #[arg(long)]
    pub image: PathBuf,
    /// Number of levels when thresholds come from quantiles.
    #[arg(long, default_value_t = 3)]
    pub levels: usize,
    /// Explicit merge thresholds, coarse to fine.
    #[arg(long, value_delimiter = ',', conflicts_with = "auto_quantiles")]
    pub thresholds: Option<Vec<f64>>,
    /// Quantiles of the spanning-tree edge weights, coarse to fine.
    #[arg(long, value_delimiter = ',')]
    pub auto_quantiles: Option<Vec<f64>>,
    #[arg(long, default_value_t = 8)]
    pub min_region: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum KindArg {
    Flat,
    Hier,
    Vae,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct LrpArgs {
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 1e-9)]
    pub epsilon: f64,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ViewArgs {
    /// Segments (or chains) to highlight.
    #[arg(long, default_value_t = 2)]
    pub top: usize,
    /// Latents swept in the traversal grid.
    #[arg(long, default_value_t = 2)]
    pub latents: usize,
    #[arg(long, default_value_t = 7)]
    pub traversal_steps: usize,
    /// Pixel upscale factor of raster outputs.
    #[arg(long, default_value_t = 8)]
    pub scale: usize,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ExplainArgs {
    #[arg(long, value_enum)]
    pub kind: KindArg,
    /// Classifier model file.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub image: PathBuf,
    /// Segment hierarchy from `segment`; computed on the fly when absent.
    #[arg(long, conflicts_with = "vae")]
    pub hierarchy: Option<PathBuf>,
    #[arg(long)]
    pub vae: Option<PathBuf>,
    #[command(flatten)]
    pub lrp: LrpArgs,
    /// Explain this class instead of the predicted one.
    #[arg(long)]
    pub target_class: Option<usize>,
    #[command(flatten)]
    pub view: ViewArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct EvaluateArgs {
    #[arg(long, value_delimiter = ',', default_value = "gmlf-flat,gmlf-hier,lime,random")]
    pub explainer: Vec<Explainer>,
    /// Directory of PGM/PPM images, evaluated in file-name order.
    #[arg(long)]
    pub images: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub vae: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub steps: usize,
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    #[command(flatten)]
    pub seed: SeedArg,
    #[arg(long, default_value_t = 2.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 1e-9)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 1000)]
    pub lime_samples: usize,
    /// Evaluate only the first N images.
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct RenderArgs {
    #[arg(long)]
    pub image: PathBuf,
    /// report.json written by `explain`.
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long, conflicts_with = "vae")]
    pub hierarchy: Option<PathBuf>,
    #[arg(long)]
    pub vae: Option<PathBuf>,
    #[command(flatten)]
    pub view: ViewArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ReportArgs {
    /// Output directories of `evaluate` runs.
    #[arg(long = "eval", required = true, num_args = 1..)]
    pub evals: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub manifest: RunManifest,
    pub manifest_path: PathBuf,
    /// Human-readable summary for the terminal.
    pub message: String,
}

/// Parses `args` (program name first) and runs the command or the replay.
pub fn run<I, T>(args: I) -> Result<RunOutcome, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = Cli::try_parse_from(&argv)?;
    if let Some(path) = cli.manifest {
        return replay(&path);
    }
    let command = cli.command.ok_or_else(|| {
        CliError::Validation("a subcommand or --manifest is required (see --help)".into())
    })?;
    let recorded: Vec<String> = argv
        .iter()
        .skip(1)
        .map(|a| {
            a.to_str()
                .map(str::to_owned)
                .ok_or_else(|| CliError::Validation(format!("argument {a:?} is not UTF-8")))
        })
        .collect::<Result<_, _>>()?;
    execute(command, recorded)
}

fn execute(command: Command, mut args: Vec<String>) -> Result<RunOutcome, CliError> {
    if let Some(seed) = command.seed() {
        if !args.iter().any(|a| a == "--seed" || a.starts_with("--seed=")) {
            args.push("--seed".into());
            args.push(seed.to_string());
        }
    }
    let mut record = RunRecord::default();
    let result = commands::dispatch(&command, &mut record);
    let (status, error) = match &result {
        Ok(_) => (RunStatus::Ok, None),
        Err(e) => (RunStatus::Failed, Some(e.to_string())),
    };
    let Some(out_dir) = record.out_dir().map(Path::to_path_buf) else {
        // failed before anything was written
        return Err(result.expect_err("successful runs open their output directory"));
    };
    let outputs = record
        .outputs
        .iter()
        .filter(|p| p.exists())
        .map(|p| FileHash::of(p))
        .collect::<Result<Vec<_>, _>>()?;
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.name().into(),
        args,
        config: serde_json::to_value(&command).expect("arguments serialize"),
        seeds: command
            .seed()
            .map(|s| BTreeMap::from([("global".to_string(), s)]))
            .unwrap_or_default(),
        inputs: record.inputs,
        outputs,
        status,
        error,
    };
    let manifest_path = out_dir.join(MANIFEST_FILE);
    manifest.save(&manifest_path)?;
    result.map(|message| RunOutcome {
        manifest,
        manifest_path,
        message,
    })
}

/// Re-runs a recorded command and checks that every output is byte-identical.
pub fn replay(path: &Path) -> Result<RunOutcome, CliError> {
    let recorded = RunManifest::load(path)?;
    if recorded.status != RunStatus::Ok {
        return Err(CliError::Validation(format!(
            "{}: the recorded run failed; nothing to reproduce",
            path.display()
        )));
    }
    let changed = recorded.changed_inputs();
    if !changed.is_empty() {
        return Err(CliError::Validation(format!(
            "inputs changed since the recorded run: {}",
            changed
                .iter()
                .map(|p| p.display().to_string())
                .collect::<Vec<_>>()
                .join(", ")
        )));
    }
    let argv = std::iter::once(OsString::from("gmlf")).chain(recorded.args.iter().map(OsString::from));
    let cli = Cli::try_parse_from(argv)?;
    let command = cli
        .command
        .ok_or_else(|| CliError::Validation("manifest records no subcommand".into()))?;
    let outcome = execute(command, recorded.args.clone())?;
    let mut diffs = Vec::new();
    for old in &recorded.outputs {
        match outcome.manifest.outputs.iter().find(|f| f.path == old.path) {
            Some(new) if new.sha256 == old.sha256 => {}
            Some(_) => diffs.push(format!("{} changed", old.path.display())),
            None => diffs.push(format!("{} missing", old.path.display())),
        }
    }
    for new in &outcome.manifest.outputs {
        if !recorded.outputs.iter().any(|f| f.path == new.path) {
            diffs.push(format!("{} is new", new.path.display()));
        }
    }
    if !diffs.is_empty() {
        return Err(CliError::ReplayMismatch(diffs.join("; ")));
    }
    Ok(RunOutcome {
        message: format!(
            "replayed {}: {} outputs identical",
            recorded.command,
            recorded.outputs.len()
        ),
        ..outcome
    })
}
