//! Command-line argument definitions.

use std::path::PathBuf;

use clap::{ArgGroup, Parser, Subcommand};

/// Cross-lingual acoustic-model posterior fusion toolkit.
#[derive(Debug, Parser)]
#[command(
    name = "amfuse",
    version,
    about = "Synthesize corpora, train posterior mapping networks, fuse and evaluate"
)]
pub struct Cli {
    /// Master seed for every random choice; overrides seeds in config files.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,

    /// Progress notes on stderr.
    #[arg(long, global = true)]
    pub verbose: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic multilingual corpus directory.
    GenSynth(GenSynthArgs),
    /// Train a mapping network on paired posteriorgram sets.
    TrainMap(TrainMapArgs),
    /// Map posteriorgrams through a trained network.
    Map(MapArgs),
    /// Fuse frame-aligned posteriorgrams with convex weights.
    Fuse(FuseArgs),
    /// Score hypothesis posteriorgrams against a reference.
    Eval(EvalArgs),
    /// Run the full fusion experiment grid from a pipeline config.
    RunMatrix(RunMatrixArgs),
}

#[derive(Debug, Parser)]
#[command(group = ArgGroup::new("corpus_spec").required(true).args(["preset", "config"]))]
pub struct GenSynthArgs {
    /// Corpus directory to create.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,

    /// Built-in corpus family: default, confusable, graded or fusion.
    #[arg(long, value_name = "NAME")]
    pub preset: Option<String>,

    /// Utterance count for --preset corpora (default 16).
    #[arg(long, value_name = "N")]
    pub utts: Option<usize>,

    /// Corpus description file (TOML) spelling out every language.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Parser)]
pub struct TrainMapArgs {
    /// Source-model posteriorgrams: .pgm files or directories of them.
    #[arg(long = "source", value_name = "PATH", required = true, num_args = 1..)]
    pub source: Vec<PathBuf>,

    /// Target-model posteriorgrams, paired with the sources by utterance id.
    #[arg(long = "target", value_name = "PATH", required = true, num_args = 1..)]
    pub target: Vec<PathBuf>,

    /// Held-out source posteriorgrams for early stopping.
    #[arg(long = "dev-source", value_name = "PATH", num_args = 1.., requires = "dev_target")]
    pub dev_source: Vec<PathBuf>,

    /// Held-out target posteriorgrams for early stopping.
    #[arg(long = "dev-target", value_name = "PATH", num_args = 1.., requires = "dev_source")]
    pub dev_target: Vec<PathBuf>,

    /// Fraction of training utterances held out when no dev set is given.
    #[arg(long, value_name = "F", default_value_t = 0.1)]
    pub dev_fraction: f64,

    /// Hidden layer widths, exactly three.
    #[arg(long, value_name = "H1,H2,H3", value_delimiter = ',', default_value = "64,64,64")]
    pub hidden: Vec<usize>,

    /// Frames per gradient step.
    #[arg(long, value_name = "N", default_value_t = 256)]
    pub batch_size: usize,

    #[arg(long, value_name = "F", default_value_t = 0.01)]
    pub learning_rate: f64,

    #[arg(long, value_name = "F", default_value_t = 0.9)]
    pub momentum: f64,

    #[arg(long, value_name = "N", default_value_t = 50)]
    pub max_epochs: usize,

    /// Non-improving dev epochs tolerated before stopping.
    #[arg(long, value_name = "N", default_value_t = 5)]
    pub patience: usize,

    /// Probability floor inside the KL loss.
    #[arg(long, value_name = "F", default_value_t = 1e-10)]
    pub epsilon_floor: f64,

    /// Trained network file to write.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,

    /// Optional epoch-by-epoch training log.
    #[arg(long, value_name = "FILE")]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Parser)]
#[command(group = ArgGroup::new("dest").required(true).args(["out", "out_dir"]))]
pub struct MapArgs {
    /// Trained mapping network.
    #[arg(long, value_name = "FILE")]
    pub net: PathBuf,

    /// Output file (single input only).
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,

    /// Output directory; files are named `<utterance_id>.pgm`.
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,

    /// Input posteriorgrams: .pgm files or directories of them.
    #[arg(value_name = "INPUT", required = true)]
    pub inputs: Vec<PathBuf>,
}

#[derive(Debug, Parser)]
#[command(group = ArgGroup::new("weight_spec").required(true).args(["weights", "derive_weights"]))]
pub struct FuseArgs {
    /// Fusion mode: `multi` (target plus mapped sources) or `cross`
    /// (mapped sources only).
    #[arg(long, value_name = "MODE")]
    pub mode: String,

    /// Comma-separated convex weights, one per input (multi mode: target
    /// weight first).
    #[arg(
        long,
        value_name = "W,W,...",
        value_delimiter = ',',
        conflicts_with_all = ["sim_table", "tau", "target_share"]
    )]
    pub weights: Option<Vec<f64>>,

    /// Derive the weights from a similarity table instead of fixing them.
    #[arg(long, requires = "sim_table")]
    pub derive_weights: bool,

    /// Per-source mapping quality table (`lang entropy accuracy` lines).
    #[arg(long, value_name = "FILE", requires = "derive_weights")]
    pub sim_table: Option<PathBuf>,

    /// Entropy temperature for weight derivation.
    #[arg(long, value_name = "F", default_value_t = 0.25)]
    pub tau: f64,

    /// Weight kept by the target model when deriving in multi mode.
    #[arg(long, value_name = "F", default_value_t = 0.5)]
    pub target_share: f64,

    /// Fused posteriorgram to write.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,

    /// Input posteriorgrams. With --weights: plain paths. With
    /// --derive-weights: sources as `lang=path` (the multi-mode target stays
    /// a plain path).
    #[arg(value_name = "INPUT", required = true)]
    pub inputs: Vec<String>,
}

#[derive(Debug, Parser)]
pub struct EvalArgs {
    /// Hypothesis posteriorgrams: .pgm files or directories of them.
    #[arg(long = "hyp", value_name = "PATH", required = true, num_args = 1..)]
    pub hyp: Vec<PathBuf>,

    /// References: posteriorgram files or label files (one class index per
    /// line, utterance id taken from the file stem).
    #[arg(long = "ref", value_name = "PATH", required = true, num_args = 1..)]
    pub reference: Vec<PathBuf>,

    /// Class inventory of the hypothesis space.
    #[arg(long, value_name = "FILE")]
    pub inventory: PathBuf,

    /// Top-n accuracy sizes.
    #[arg(long, value_name = "N,N,...", value_delimiter = ',', default_value = "1,2,5,10")]
    pub topn: Vec<usize>,

    /// Also write the report to this file.
    #[arg(long, short = 'o', value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Parser)]
pub struct RunMatrixArgs {
    /// Pipeline description (TOML).
    #[arg(long, value_name = "FILE")]
    pub config: PathBuf,

    /// Output root; overrides `out_dir` from the config.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}
