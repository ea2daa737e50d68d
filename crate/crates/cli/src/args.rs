use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "msc", version, about = "Multi-source clustering forests")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a planted synthetic dataset (manifest, CSVs and truth.csv).
    Synth(SynthArgs),
    /// Train a forest, cluster the training set, and write the model.
    Train(TrainArgs),
    /// Assign the samples of a manifest to training clusters.
    Cluster(ApplyArgs),
    /// Infer auxiliary tags for the samples of a manifest.
    Tag(ApplyArgs),
    /// Build a key-clip summary and timeline plot of a manifest.
    Summarize(SummarizeArgs),
    /// Export feature and source correlations of a trained model.
    Correlate(CorrelateArgs),
    /// Score tag predictions against a truth CSV.
    Eval(EvalArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Common {
    /// Random seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (0 = all cores); results do not depend on this.
    #[arg(long, default_value_t = 0)]
    #[serde(skip)]
    pub workers: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub clusters: usize,
    #[arg(long, default_value_t = 125)]
    pub per_cluster: usize,
    #[arg(long, default_value_t = 20)]
    pub dim: usize,
    #[arg(long, default_value_t = 8.0)]
    pub separation: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    /// Alignment of each categorical source (repeat for several sources).
    #[arg(long = "alignment", default_values_t = vec![0.9])]
    pub alignments: Vec<f64>,
    /// Continuous sources as `shift:sigma` (repeatable).
    #[arg(long = "continuous")]
    pub continuous: Vec<String>,
    /// Missing fraction applied to every auxiliary source.
    #[arg(long, default_value_t = 0.0)]
    pub missing: f64,
    /// Lay clusters out in contiguous time blocks.
    #[arg(long)]
    pub temporal_blocks: bool,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output model file.
    #[arg(long)]
    pub model: PathBuf,
    /// Optional COO CSV of the sparsified training affinity.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    pub trees: usize,
    /// Features sampled per node (default ⌈√d⌉).
    #[arg(long)]
    pub mtry: Option<usize>,
    #[arg(long, default_value_t = 2)]
    pub phi: usize,
    #[arg(long, default_value_t = 0.5)]
    pub alpha_v: f64,
    /// Neighbours kept per sample (default max(10, ⌈log2 N⌉ + 1)).
    #[arg(long)]
    pub knn_k: Option<usize>,
    #[arg(long, default_value_t = msc_core::model::DEFAULT_K_MAX)]
    pub kmax: usize,
    /// Fixed cluster count instead of the eigengap estimate.
    #[arg(long)]
    pub n_clusters: Option<usize>,
    /// Oblique two-feature splits instead of axis-aligned ones.
    #[arg(long)]
    pub oblique: bool,
    /// Draw one pseudo sample shared by all trees.
    #[arg(long)]
    pub shared_pseudo: bool,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ApplyArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// Output JSON-lines file.
    #[arg(long)]
    pub out: PathBuf,
    /// Nearest-centroid assignment over all clusters instead of tree voting.
    #[arg(long)]
    pub hard: bool,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SummarizeArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// Output summary JSON; the timeline SVG goes next to it.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub knn_k: Option<usize>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CorrelateArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Output CSV of the source correlation matrix; top pairs go to `<out>.pairs.json`.
    #[arg(long)]
    pub out: PathBuf,
    /// Leave trees that never co-sampled a pair out of its average.
    #[arg(long)]
    pub exclude_zero: bool,
    /// Symmetrise the source matrix.
    #[arg(long)]
    pub symmetric: bool,
    #[arg(long, default_value_t = 20)]
    pub top: usize,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvalArgs {
    /// Predictions JSON lines from `msc tag`.
    #[arg(long)]
    pub predictions: PathBuf,
    /// Truth CSV: sample_id, latent, then one column per categorical source.
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Unweighted mean entropy across clusters.
    #[arg(long)]
    pub unweighted: bool,
    /// Entropy in bits instead of nats.
    #[arg(long)]
    pub base2: bool,
    #[command(flatten)]
    pub common: Common,
}
