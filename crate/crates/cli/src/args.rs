use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use loop_sentinel::classifier::FeatureMode;
use loop_sentinel::textual::{DetectorConfig, NumericalUnit};

#[derive(Debug, Parser)]
#[command(name = "loop-sentinel", version, about = "Detect and predict repetitive loops in generation traces")]
pub struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, env = "LOOP_SENTINEL_SEED", default_value_t = 42)]
    pub seed: u64,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus of trace directories.
    Gen(GenArgs),
    /// Train the hidden-state probe.
    Train(TrainArgs),
    /// Calibrate the CUSUM reference and threshold on normal traces.
    Calibrate(CalibrateArgs),
    /// Monitor one trace, or a token stream on standard input.
    Monitor(MonitorArgs),
    /// Compute early-detection metrics and the persistence ablation.
    Eval(EvalArgs),
    /// Export the reasoning graph of a trace and its semantic lead.
    Graph(GraphArgs),
    /// Report entropy, pivot-window, attention and cycle statistics.
    Stats(StatsArgs),
    /// Render score, entropy or attention series as SVG.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub cases: usize,
    #[arg(long, default_value_t = 0.5)]
    pub loop_ratio: f64,
    /// Share of loop cases that are numerical loops.
    #[arg(long, default_value_t = 0.0)]
    pub numerical_share: f64,
    #[arg(long, default_value_t = 16)]
    pub hidden_dim: usize,
    /// Distance between normal and loop state means, in standard deviations.
    #[arg(long, default_value_t = 4.0)]
    pub separation: f64,
    #[arg(long)]
    pub no_attention: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    All,
    Train,
    Calibration,
    Test,
}

#[derive(Debug, Args)]
pub struct CorpusArgs {
    /// A trace directory or a directory of trace directories.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Normal traces reserved for calibration.
    #[arg(long, default_value_t = 50)]
    pub calibration_cases: usize,
    /// Test cases per class.
    #[arg(long, default_value_t = 50)]
    pub test_per_class: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Statement,
    Numerical,
}

impl From<ModeArg> for FeatureMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Statement => FeatureMode::Statement,
            ModeArg::Numerical => FeatureMode::Numerical,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long, value_enum, default_value_t = SplitArg::Train)]
    pub split: SplitArg,
    #[arg(long, value_enum, default_value_t = ModeArg::Statement)]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 1e-3)]
    pub l2: f64,
    #[arg(long, default_value_t = 0.1)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 500)]
    pub epochs: usize,
    #[command(flatten)]
    pub detector: DetectorArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long, value_enum, default_value_t = SplitArg::Calibration)]
    pub split: SplitArg,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = loop_sentinel::cusum::DEFAULT_ALPHA)]
    pub alpha: f64,
    #[arg(long, default_value_t = loop_sentinel::cusum::DEFAULT_P)]
    pub p: usize,
    #[command(flatten)]
    pub detector: DetectorArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MonitorArgs {
    /// Trace directory to replay.
    #[arg(long, conflicts_with = "stdin", required_unless_present = "stdin")]
    pub trace: Option<PathBuf>,
    /// Read tokens.jsonl lines from standard input; each may carry a
    /// "hidden" array.
    #[arg(long)]
    pub stdin: bool,
    #[arg(long, requires = "cusum")]
    pub model: Option<PathBuf>,
    #[arg(long, requires = "model")]
    pub cusum: Option<PathBuf>,
    /// Suppress per-sentence score lines.
    #[arg(long)]
    pub no_scores: bool,
    #[command(flatten)]
    pub detector: DetectorArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub cusum: PathBuf,
    /// Persistence values to ablate.
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2, 3, 4, 5, 6])]
    pub ablate: Vec<usize>,
    /// Also sweep p and alpha, calibrating on the calibration split.
    #[arg(long)]
    pub grid: bool,
    /// Write the ablation table as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub detector: DetectorArgs,
}

#[derive(Debug, Args)]
pub struct GraphArgs {
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long, default_value_t = loop_sentinel::graph::DEFAULT_K)]
    pub k: usize,
    #[arg(long, default_value_t = loop_sentinel::graph::DEFAULT_MIN_REPS)]
    pub min_reps: usize,
    #[arg(long, default_value_t = loop_sentinel::graph::DEFAULT_MAX_ITER)]
    pub max_iter: usize,
    /// Include centroids in the export.
    #[arg(long)]
    pub centroids: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub detector: DetectorArgs,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// A trace directory or a directory of trace directories.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value_t = loop_sentinel::signals::DEFAULT_PHASE_WINDOW)]
    pub onset_window: usize,
    #[arg(long, default_value_t = loop_sentinel::signals::DEFAULT_PHASE_WINDOW)]
    pub stable_window: usize,
    #[arg(long, default_value_t = loop_sentinel::signals::DEFAULT_SHIFT_WINDOW)]
    pub shift_window: usize,
    #[arg(long, default_value_t = loop_sentinel::signals::DEFAULT_DROP_RATIO)]
    pub drop_ratio: f64,
    /// Comma-separated pivot tokens.
    #[arg(long, value_delimiter = ',')]
    pub lexicon: Option<Vec<String>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub detector: DetectorArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlotKind {
    Scores,
    Entropy,
    Attention,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long, value_enum)]
    pub kind: PlotKind,
    #[arg(long, required_if_eq("kind", "scores"))]
    pub model: Option<PathBuf>,
    #[arg(long, required_if_eq("kind", "scores"))]
    pub cusum: Option<PathBuf>,
    /// Moving-average window for token series.
    #[arg(long, default_value_t = 1)]
    pub smooth: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum UnitArg {
    Characters,
    Tokens,
}

#[derive(Debug, Args)]
pub struct DetectorArgs {
    #[arg(long, default_value_t = 500)]
    pub numerical_threshold: usize,
    #[arg(long, default_value_t = 3)]
    pub statement_threshold: usize,
    #[arg(long, default_value_t = 20)]
    pub numerical_breakpoint: usize,
    #[arg(long, default_value_t = 3)]
    pub statement_breakpoint: usize,
    #[arg(long, value_enum, default_value_t = UnitArg::Characters)]
    pub numerical_unit: UnitArg,
}

impl DetectorArgs {
    pub fn config(&self) -> loop_sentinel::Result<DetectorConfig> {
        let cfg = DetectorConfig {
            numerical_threshold: self.numerical_threshold,
            statement_threshold: self.statement_threshold,
            numerical_breakpoint: self.numerical_breakpoint,
            statement_breakpoint: self.statement_breakpoint,
            numerical_unit: match self.numerical_unit {
                UnitArg::Characters => NumericalUnit::Characters,
                UnitArg::Tokens => NumericalUnit::Tokens,
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
