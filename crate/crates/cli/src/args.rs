use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tokenmetric::distances::DistanceKind;
use tokenmetric::eval::{Direction, SweepMetric};
use tokenmetric::histograms::DisplacementSet;
use tokenmetric::image::DegradeKind;
use tokenmetric::token_io::GridLayout;

#[derive(Parser, Debug)]
#[command(name = "tokenmetric", version, about = "Evaluate generative image models in discrete token space")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalArgs {
    /// Base seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Suppress progress messages on stderr.
    #[arg(long, global = true)]
    pub quiet: bool,
    /// Emit a JSON object instead of key=value lines.
    #[arg(long, global = true)]
    pub json: bool,
    /// Manifest path (default: `<out>.manifest.json` for commands that write files).
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Tokenize a directory of PNG/PPM images with the palette tokenizer.
    Tokenize {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        grid: GridLayout,
        #[arg(long)]
        codebook: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply one pixel-space degradation to every image in a directory.
    Degrade {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        kind: DegradeKind,
        #[arg(long)]
        param: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Codebook histogram distance between two token datasets.
    Chd {
        #[arg(long)]
        real: PathBuf,
        #[arg(long)]
        gen: PathBuf,
        #[arg(long, default_value = "right,down")]
        disp: DisplacementSet,
        #[arg(long, default_value = "hellinger")]
        distance: DistanceKind,
    },
    /// Entropy, adjacent mutual information and most frequent tokens.
    Tokenstats {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "right,down")]
        disp: DisplacementSet,
        #[arg(long, default_value_t = 10)]
        top: usize,
    },
    /// Feature-space baselines.
    #[command(subcommand)]
    Baseline(BaselineCommand),
    /// Learned token quality score.
    #[command(subcommand)]
    Cmms(CmmsCommand),
    /// Apply token corruption and within-sequence fragment swaps.
    Corrupt {
        #[arg(long = "in")]
        input: PathBuf,
        /// Per-token replacement probability.
        #[arg(long, default_value_t = 0.0)]
        p: f64,
        /// Fraction of the grid moved by a fragment swap (0 disables).
        #[arg(long, default_value_t = 0.0)]
        swap: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Agreement between metric scores and reference scores (`id value` files).
    Correlate {
        #[arg(long)]
        metric: PathBuf,
        #[arg(long)]
        human: PathBuf,
        #[arg(long, default_value = "higher")]
        direction: Direction,
    },
    /// Metric mean and spread over seeded subsamples of growing size.
    Sweep {
        #[arg(long)]
        real: PathBuf,
        #[arg(long)]
        gen: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 20)]
        repeats: usize,
        #[arg(long, default_value = "chd")]
        metric: SweepMetric,
        #[arg(long, default_value = "right,down")]
        disp: DisplacementSet,
    },
    /// Generate synthetic corpora.
    #[command(subcommand)]
    Synth(SynthCommand),
    /// Re-run a recorded command and compare output digests.
    Replay {
        manifest: PathBuf,
    },
}

#[derive(Subcommand, Debug)]
pub enum BaselineCommand {
    /// Fréchet distance between Gaussian fits.
    Frechet {
        #[arg(long)]
        real: PathBuf,
        #[arg(long)]
        gen: PathBuf,
    },
    /// Squared MMD with an RBF kernel.
    Mmd {
        #[arg(long)]
        real: PathBuf,
        #[arg(long)]
        gen: PathBuf,
        /// Kernel bandwidth (default: median pairwise distance).
        #[arg(long)]
        bandwidth: Option<f64>,
    },
}

#[derive(Subcommand, Debug)]
pub enum CmmsCommand {
    /// Train the regressor on a clean token corpus.
    Train {
        #[arg(long)]
        tokens: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// d=512 model with the batch-512, 200-epoch recipe.
        #[arg(long)]
        full_scale: bool,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
    },
    /// Score every sequence; prints the dataset mean.
    Score {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        tokens: PathBuf,
        /// Per-sequence scores as `index score` lines.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SynthKind {
    /// Region-structured grids.
    Structured,
    /// Independent tokens from a Zipf law.
    Iid,
}

#[derive(Subcommand, Debug)]
pub enum SynthCommand {
    Tokens {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        codebook: u32,
        #[arg(long)]
        grid: GridLayout,
        #[arg(long, value_enum, default_value = "structured")]
        kind: SynthKind,
        /// Zipf exponent for `--kind iid`.
        #[arg(long, default_value_t = 1.1)]
        zipf: f64,
        #[arg(long)]
        out: PathBuf,
    },
    Images {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        width: usize,
        #[arg(long)]
        height: usize,
        #[arg(long)]
        out: PathBuf,
    },
}
