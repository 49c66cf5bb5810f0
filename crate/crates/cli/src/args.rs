use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ia_core::data::CategoryKey;
use ia_core::encoders::EncoderKind;
use ia_core::hoi::AlignSource;

#[derive(Parser, Debug)]
#[command(
    name = "ia",
    version,
    about = "Interaction-oriented attention prediction: data tools, training, evaluation and HOI alignment"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct GlobalArgs {
    /// Dataset manifest (JSON lines, one sample per line).
    #[arg(long, global = true, value_name = "FILE")]
    pub manifest: Option<PathBuf>,

    /// Directory that receives every output of the run.
    #[arg(long, global = true, value_name = "DIR", default_value = "ia-out")]
    pub out: PathBuf,

    /// Seed for splits, initialization and shuffling.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// TOML config; flags take precedence over it.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Worker threads for per-sample work.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    /// Encoder backend; the pretrained ones read IA_CACHE_DIR.
    #[arg(long, global = true, value_enum)]
    pub encoder: Option<EncoderArg>,

    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum EncoderArg {
    Mock,
    PretrainedBase,
    PretrainedLarge,
}

impl From<EncoderArg> for EncoderKind {
    fn from(e: EncoderArg) -> Self {
        match e {
            EncoderArg::Mock => EncoderKind::Mock,
            EncoderArg::PretrainedBase => EncoderKind::PretrainedBase,
            EncoderArg::PretrainedLarge => EncoderKind::PretrainedLarge,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum KeyArg {
    InteractionPair,
    ActionOnly,
}

impl From<KeyArg> for CategoryKey {
    fn from(k: KeyArg) -> Self {
        match k {
            KeyArg::InteractionPair => CategoryKey::InteractionPair,
            KeyArg::ActionOnly => CategoryKey::ActionOnly,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AlignArg {
    None,
    Human,
    Ia,
}

impl AlignArg {
    pub fn source(self) -> Option<AlignSource> {
        match self {
            AlignArg::None => None,
            AlignArg::Human => Some(AlignSource::Human),
            AlignArg::Ia => Some(AlignSource::IaPseudo),
        }
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Rasterize fixations into ground-truth heatmaps (IGHM and PNG).
    ConvertFixations {
        /// Gaussian width in pixels; scales with image width by default.
        #[arg(long)]
        sigma: Option<f64>,
        /// Use a single observer's fixations.
        #[arg(long)]
        observer: Option<String>,
        #[arg(long)]
        no_png: bool,
    },
    /// Write a zero-shot split with disjoint interaction categories.
    Split {
        #[arg(long, value_enum, default_value = "interaction-pair")]
        category_key: KeyArg,
        /// Share of categories held out for testing.
        #[arg(long)]
        test_fraction: Option<f64>,
    },
    /// Train the attention model and write a checkpoint.
    Train {
        /// Train on the split's training ids only.
        #[arg(long, value_name = "FILE")]
        split: Option<PathBuf>,
        /// Override the configured epoch count.
        #[arg(long)]
        epochs: Option<usize>,
        /// Continue from a checkpoint.
        #[arg(long, value_name = "FILE")]
        resume: Option<PathBuf>,
    },
    /// Predict attention maps with a trained checkpoint.
    Predict {
        #[arg(long, value_name = "FILE")]
        checkpoint: PathBuf,
        /// Predict the split's test ids only.
        #[arg(long, value_name = "FILE")]
        split: Option<PathBuf>,
        #[arg(long)]
        no_png: bool,
    },
    /// Score predictions with CC, KLdiv, SIM and AUC-Judd.
    Evaluate {
        /// Directory of `<sample_id>.ighm` predictions.
        #[arg(long, value_name = "DIR", group = "source")]
        pred: Option<PathBuf>,
        #[arg(long, value_name = "FILE", group = "source")]
        checkpoint: Option<PathBuf>,
        /// Score the ground truth against itself.
        #[arg(long, group = "source")]
        oracle: bool,
        /// Evaluate the split's test ids only.
        #[arg(long, value_name = "FILE")]
        split: Option<PathBuf>,
        /// Gaussian sigma in pixels; defaults to a width-relative value.
        #[arg(long)]
        sigma: Option<f64>,
    },
    /// Train and evaluate the full model and its component ablations.
    Ablate {
        /// Split to use; a fresh one is drawn from the seed when omitted.
        #[arg(long, value_name = "FILE")]
        split: Option<PathBuf>,
        /// Comma-separated variants, e.g. `full,w/o ICB`; all five by default.
        #[arg(long, value_delimiter = ',')]
        variants: Vec<String>,
        /// Override the configured epoch count.
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Generate IA attention pseudo-labels for a host dataset.
    PseudoLabel {
        #[arg(long, value_name = "FILE")]
        checkpoint: PathBuf,
    },
    /// Train the toy HOI host with or without attention alignment.
    TrainToy {
        #[arg(long, value_enum, default_value = "none")]
        align: AlignArg,
        /// Weight of the classification loss.
        #[arg(long)]
        lambda1: Option<f64>,
        /// Weight of the alignment loss.
        #[arg(long)]
        lambda2: Option<f64>,
    },
    /// Render an image next to heatmap overlays.
    Plot {
        #[arg(long, value_name = "FILE")]
        image: PathBuf,
        /// Heatmap in IGHM format; repeat for more panels.
        #[arg(long = "map", value_name = "FILE", required = true)]
        maps: Vec<PathBuf>,
        /// Panel caption; repeat once per map, optionally one more for the image first.
        #[arg(long = "label")]
        labels: Vec<String>,
        #[arg(long, default_value = "figure.png")]
        name: String,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::ConvertFixations { .. } => "convert-fixations",
            Command::Split { .. } => "split",
            Command::Train { .. } => "train",
            Command::Predict { .. } => "predict",
            Command::Evaluate { .. } => "evaluate",
            Command::Ablate { .. } => "ablate",
            Command::PseudoLabel { .. } => "pseudo-label",
            Command::TrainToy { .. } => "train-toy",
            Command::Plot { .. } => "plot",
        }
    }
}
