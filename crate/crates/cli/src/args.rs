use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(
    name = "tabattn",
    version,
    about = "Tabular-conditioned attention for video regression"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset directory.
    GenData(GenDataArgs),
    /// Cross-validate one model variant.
    Train(TrainArgs),
    /// Evaluate a saved fold model on a dataset.
    Eval(EvalArgs),
    /// Cross-validate the attention ablation variants.
    Ablate(AblateArgs),
    /// Check analytic gradients against central differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct GenDataArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Number of samples [default: 96, or 92 with --paper-scale].
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Correlation between latent-copy tabular features and the image attribute.
    #[arg(long, default_value_t = 0.5)]
    pub redundancy: f64,
    /// Clip length `T` or range `MIN:MAX`.
    #[arg(long, default_value = "16:48")]
    pub frames: String,
    /// Frame size `HxW` [default: 64x64, or 128x128 with --paper-scale].
    #[arg(long)]
    pub size: Option<String>,
    #[arg(long, default_value_t = 6)]
    pub tab_dim: usize,
    #[arg(long, default_value_t = 2600.0)]
    pub a_img: f64,
    #[arg(long, default_value_t = 400.0)]
    pub a_tab: f64,
    #[arg(long, default_value_t = 50.0)]
    pub noise_std: f64,
    #[arg(long)]
    pub paper_scale: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelArg {
    ImageOnly,
    Linreg,
    LateConcat,
    Interactive,
    Daft,
    Tabattention,
}

/// Architecture and optimization settings shared by `train` and `ablate`.
#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    /// Dataset directory.
    #[arg(long)]
    pub data: PathBuf,
    /// Run directory for reports and checkpoints.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Epochs [default: 30, or 250 with --paper-scale].
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    /// Initial learning rate.
    #[arg(long, default_value_t = 1e-3, conflicts_with = "lr_grid")]
    pub lr: f64,
    /// Select the initial learning rate from {1e-2, 1e-3, 1e-4} by mean MAPE.
    #[arg(long)]
    pub lr_grid: bool,
    #[arg(long, default_value_t = 1e-4)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    /// Run only these folds (repeatable).
    #[arg(long = "fold")]
    pub only_folds: Vec<usize>,
    /// Stratification thresholds, comma separated [default: target tertiles].
    #[arg(long, value_delimiter = ',')]
    pub bins: Vec<f64>,
    #[arg(long)]
    pub no_augment: bool,
    /// Fit on raw instead of z-scored targets.
    #[arg(long)]
    pub raw_targets: bool,
    /// Ridge penalty for the tabular linear regression.
    #[arg(long, default_value_t = 1e-8)]
    pub ridge: f64,
    /// Channel widths of the backbone stages, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "8,16,32")]
    pub widths: Vec<usize>,
    /// Frames per model input segment.
    #[arg(long, default_value_t = 16)]
    pub segment_frames: usize,
    /// Channel-attention reduction ratio.
    #[arg(long, default_value_t = 16)]
    pub reduction: usize,
    #[arg(long, default_value_t = 2)]
    pub heads: usize,
    #[arg(long, default_value_t = 4)]
    pub head_dim: usize,
    /// Restore the full-size schedule (250 epochs).
    #[arg(long)]
    pub paper_scale: bool,
    /// Folds trained concurrently.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long, value_enum, default_value_t = ModelArg::Tabattention)]
    pub model: ModelArg,
    #[arg(long)]
    pub no_cam: bool,
    #[arg(long)]
    pub no_sam: bool,
    #[arg(long)]
    pub no_tam: bool,
    #[arg(long)]
    pub no_tab: bool,
    #[command(flatten)]
    pub fit: FitArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct AblateArgs {
    #[command(flatten)]
    pub fit: FitArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    /// Fold model directory written by `train` (contains model.json).
    #[arg(long)]
    pub model_dir: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Write predictions and metrics as JSON here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
pub enum FaultArg {
    SigmoidSignFlip,
}

#[derive(Debug, Args, Serialize)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Central-difference step.
    #[arg(long, default_value_t = 1e-6)]
    pub step: f64,
    /// Write the report as JSON here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, hide = true)]
    pub inject_fault: Option<FaultArg>,
}
