use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dyadkit_harness::Condition;
use dyadkit_nn::{ModelKind, Precision};

#[derive(Debug, Parser)]
#[command(name = "dyadkit", version, about = "Skeleton-based recognition of two-person interactions")]
pub struct Cli {
    /// Worker threads for per-sample stages. Outputs do not depend on it.
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
    /// Seed for every random stage.
    #[arg(long, global = true, env = "DYADKIT_SEED")]
    pub seed: Option<u64>,
    /// JSON run configuration; flags override its keys.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset: capture files plus manifest.
    Synth(SynthArgs),
    /// Compute 91×467 feature files from capture files.
    Extract(ExtractArgs),
    /// Encode feature files as descriptor images or interaction graphs.
    Encode(EncodeArgs),
    /// Train every configured model under every condition and write reports.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset split.
    Eval(EvalArgs),
    /// Re-render report tables from a report JSON.
    Report(ReportArgs),
    /// Compare analytic and finite-difference gradients of the models.
    Gradcheck(GradcheckArgs),
    /// Check files without modifying them.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CaptureFormat {
    Binary,
    Jsonl,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory [config: data_dir].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Volunteer pairs [config: synth.n_pairs].
    #[arg(long)]
    pub pairs: Option<usize>,
    /// Repetitions of each class per pair [config: synth.reps_per_class].
    #[arg(long)]
    pub reps: Option<usize>,
    /// Fraction of samples with occlusion [config: synth.occlusion_rate].
    #[arg(long)]
    pub occlusion_rate: Option<f64>,
    /// Joint noise standard deviation in mm [config: synth.noise_std_mm].
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long, value_enum, default_value = "binary")]
    pub format: CaptureFormat,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// Capture file or directory of `.dyad`/`.jsonl` captures.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write a CSV copy of each feature file.
    #[arg(long)]
    pub csv: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EncodeForm {
    Descriptor,
    Graph,
    /// 8-bit descriptor rendering for inspection.
    Png,
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    #[arg(long, value_enum)]
    pub form: EncodeForm,
    /// Feature file or directory of `.feat` files.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory with manifest.json and encoded inputs [config: data_dir].
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output directory for checkpoints and reports [config: out_dir].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Manifest to use instead of `<data>/manifest.json`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Comma-separated model kinds [config: models].
    #[arg(long, value_delimiter = ',', value_parser = parse_kind)]
    pub models: Option<Vec<ModelKind>>,
    /// Comma-separated conditions: mixed, clean [config: conditions].
    #[arg(long, value_delimiter = ',', value_parser = parse_condition)]
    pub conditions: Option<Vec<Condition>>,
    /// [config: train.max_epochs]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// [config: train.patience]
    #[arg(long)]
    pub patience: Option<usize>,
    /// [config: train.batch_size]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// [config: train.optimizer.lr]
    #[arg(long)]
    pub lr: Option<f64>,
    /// [config: train.grad_chunk]
    #[arg(long)]
    pub grad_chunk: Option<usize>,
    /// Arithmetic for training [config: precision].
    #[arg(long, value_parser = parse_precision)]
    pub precision: Option<Precision>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    Test,
    All,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset directory [config: data_dir].
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    /// `clean` drops occluded samples.
    #[arg(long, value_parser = parse_condition, default_value = "mixed")]
    pub condition: Condition,
    #[arg(long, value_parser = parse_precision, default_value = "f64")]
    pub precision: Precision,
    /// Write the result here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// report.json, or a directory holding one.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Output directory; defaults to the input's directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    #[arg(long, value_delimiter = ',', value_parser = parse_kind)]
    pub models: Option<Vec<ModelKind>>,
    /// Frames per input.
    #[arg(long, default_value_t = 12)]
    pub frames: usize,
    #[arg(long, default_value_t = 2)]
    pub batch: usize,
    /// Entries probed per parameter block.
    #[arg(long, default_value_t = 16)]
    pub entries: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub step: f64,
    /// Also write the full report as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Files or directories to check.
    #[arg(long = "in", required = true, num_args = 1..)]
    pub inputs: Vec<PathBuf>,
}

fn parse_kind(s: &str) -> Result<ModelKind, String> {
    s.parse().map_err(|e: dyadkit_nn::NnError| e.to_string())
}

fn parse_condition(s: &str) -> Result<Condition, String> {
    s.parse().map_err(|e: dyadkit_harness::HarnessError| e.to_string())
}

fn parse_precision(s: &str) -> Result<Precision, String> {
    match s.to_ascii_lowercase().as_str() {
        "f64" | "64" => Ok(Precision::F64),
        "f32" | "32" => Ok(Precision::F32),
        _ => Err(format!("unknown precision `{s}` (expected f64 or f32)")),
    }
}
