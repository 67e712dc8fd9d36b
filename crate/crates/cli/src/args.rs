use std::path::PathBuf;

use bsf_core::pipeline::PruneThreshold;
use clap::{Args, Parser, Subcommand};

/// Binary stochastic filtering: feature selection, neuron pruning and
/// kernel pruning with trainable Bernoulli gates.
///
/// Every command that trains writes report.json (and model.json when it
/// produces a model) into --out, plus frames/epoch_NNNN.{csv,pgm} with the
/// filter weights recorded during training.
#[derive(Debug, Parser)]
#[command(name = "bsf", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a classifier behind an input filter and report feature importances
    /// (tabular data: perceptron; images: convolutional network).
    Train(TrainArgs),
    /// k-fold cross-validation of a plain classifier (no filters).
    Cv(CvArgs),
    /// Rank features with an input filter and keep those passing --threshold.
    SelectFeatures(SelectArgs),
    /// Shrink a perceptron's hidden layers using hidden-layer filters.
    PruneNeurons(PruneNeuronsArgs),
    /// Remove convolution kernels using channel filters, then fine-tune.
    PruneKernels(PruneKernelsArgs),
    /// Write frames/epoch_NNNN.{csv,pgm} for the filter history stored in a model file.
    ExportFrames(ModelArgs),
    /// Print a model's layers, parameter counts and filter statistics.
    InspectModel(InspectArgs),
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// CSV file with a header row [default: none; exactly one of --data or --mnist-images/--mnist-labels is required]
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Name of the CSV class column
    #[arg(long, default_value = "class")]
    pub labels_col: String,
    /// CSV columns holding categorical values, encoded as integer codes [default: none]
    #[arg(long, value_delimiter = ',')]
    pub categorical: Vec<String>,
    /// IDX image file (MNIST format) [default: none; requires --mnist-labels]
    #[arg(long)]
    pub mnist_images: Option<PathBuf>,
    /// IDX label file matching --mnist-images [default: none]
    #[arg(long)]
    pub mnist_labels: Option<PathBuf>,
    /// Use only the first N samples [default: all]
    #[arg(long)]
    pub limit: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainingArgs {
    /// Seed for initialization, shuffling, gate sampling and fold assignment
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Maximum training epochs
    #[arg(long, default_value_t = 500)]
    pub epochs: usize,
    /// Stop after this many epochs without a training-loss improvement of at least 1e-5
    #[arg(long, default_value_t = 20)]
    pub patience: usize,
    /// Mini-batch size
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    /// Record filter weights every k-th epoch
    #[arg(long, default_value_t = 1)]
    pub snapshot_every: usize,
}

#[derive(Debug, Clone, Args)]
pub struct OutArgs {
    /// Output directory, created if absent
    #[arg(long, default_value = "bsf-out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub training: TrainingArgs,
    /// L1 coefficient on filter weights
    #[arg(long, default_value_t = 0.01)]
    pub l1: f64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args)]
pub struct CvArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub training: TrainingArgs,
    /// Number of cross-validation folds
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SelectArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub training: TrainingArgs,
    /// L1 coefficient on filter weights (must be > 0)
    #[arg(long, default_value_t = 0.01)]
    pub l1: f64,
    /// Which features to keep: abs:<w_min>, pct:<p> or topk:<k>
    #[arg(long, default_value_t = PruneThreshold::default())]
    pub threshold: PruneThreshold,
    /// Cross-validate plain classifiers on the original and selected features with this many folds [default: none, skip]
    #[arg(long)]
    pub folds: Option<usize>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args)]
pub struct PruneNeuronsArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub training: TrainingArgs,
    /// L1 coefficient on filter weights
    #[arg(long, default_value_t = 0.01)]
    pub l1: f64,
    /// Which hidden units to keep: abs:<w_min>, pct:<p> or topk:<k>
    #[arg(long, default_value_t = PruneThreshold::default())]
    pub threshold: PruneThreshold,
    /// Cross-validate the original and pruned shapes with this many folds [default: none, skip]
    #[arg(long)]
    pub folds: Option<usize>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args)]
pub struct PruneKernelsArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub training: TrainingArgs,
    /// L1 coefficient on filter weights
    #[arg(long, default_value_t = 0.001)]
    pub l1: f64,
    /// Which kernels to keep: abs:<w_min>, pct:<p> or topk:<k>
    #[arg(long, default_value_t = PruneThreshold::default())]
    pub threshold: PruneThreshold,
    /// Fine-tuning epochs after pruning, at a tenth of the learning rate
    #[arg(long, default_value_t = 20)]
    pub ft_epochs: usize,
    /// IDX test images for reporting accuracy [default: none, accuracy is measured on the training data]
    #[arg(long)]
    pub mnist_test_images: Option<PathBuf>,
    /// IDX test labels matching --mnist-test-images [default: none]
    #[arg(long)]
    pub mnist_test_labels: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Model file written by another command (model.json) [required]
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args)]
pub struct InspectArgs {
    /// Model file written by another command (model.json) [required]
    #[arg(long)]
    pub model: PathBuf,
    /// Also write report.json into this directory [default: none, print only]
    #[arg(long)]
    pub out: Option<PathBuf>,
}
