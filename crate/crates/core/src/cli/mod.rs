//! Command-line front end: argument definitions, dispatch and exit codes.

mod analyze;
mod eval;
mod input;
mod output;
mod pipeline;

use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use output::Run;

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_INVARIANT: u8 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "rhs",
    version,
    about = "Representative helpful sentences from product reviews"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    #[command(flatten)]
    pub global: GlobalArgs,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    /// Pretty-print JSON and print a summary to stdout.
    #[arg(long, global = true)]
    pub pretty: bool,

    /// Input field renaming, e.g. `--map text=body`. Repeatable.
    #[arg(long = "map", global = true, value_name = "CANONICAL=ACTUAL")]
    pub map: Vec<String>,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Args)]
pub struct IoArgs {
    #[arg(long)]
    pub input: PathBuf,

    /// Output file; stdout when omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args, Clone, Copy)]
pub struct GateArgs {
    #[arg(long, default_value_t = 30)]
    pub min_chars: usize,

    #[arg(long, default_value_t = 200)]
    pub max_chars: usize,
}

#[derive(Debug, Args, Clone, Copy)]
pub struct SelectionArgs {
    /// Similarity threshold for support (default 0.876, or 0.75 with --relaxed).
    #[arg(long)]
    pub sigma: Option<f64>,

    /// Minimum support (default 5, or 0 with --relaxed).
    #[arg(long)]
    pub min_support: Option<usize>,

    #[arg(long, default_value_t = rhs_core::rhs::DEFAULT_ALPHA)]
    pub alpha: f64,

    /// Relaxed support settings for small review sets.
    #[arg(long)]
    pub relaxed: bool,

    /// Supporters listed per selected sentence.
    #[arg(long, default_value_t = rhs_core::rhs::DEFAULT_TOP_K_SUPPORTERS)]
    pub top_k: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProviderKind {
    Lexicon,
    Remote,
}

#[derive(Debug, Args, Clone)]
pub struct ProviderArgs {
    #[arg(long, value_enum, default_value_t = ProviderKind::Lexicon)]
    pub provider: ProviderKind,

    /// Endpoint for `--provider remote`.
    #[arg(long)]
    pub remote_url: Option<String>,

    /// Replacement positive word list for the lexicon provider.
    #[arg(long, requires = "negative_words")]
    pub positive_words: Option<PathBuf>,

    /// Replacement negative word list for the lexicon provider.
    #[arg(long, requires = "positive_words")]
    pub negative_words: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Reviews to gated sentences (JSON lines).
    Ingest {
        #[command(flatten)]
        io: IoArgs,
        #[command(flatten)]
        gate: GateArgs,
    },
    /// Fit a helpfulness regressor on an annotated dataset.
    Train {
        #[command(flatten)]
        io: IoArgs,
        #[arg(long, default_value_t = rhs_core::helpfulness::DEFAULT_LAMBDA)]
        lambda: f64,
        /// Train on vectors from this embedding file instead of TF-IDF.
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        min_df: u64,
        #[arg(long)]
        max_features: Option<usize>,
    },
    /// Predict helpfulness for sentences.
    Score {
        #[command(flatten)]
        io: IoArgs,
        #[arg(long)]
        model: PathBuf,
        /// Embedding file for models trained on external vectors.
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
    /// Select positive and negative representative sentences per product.
    Extract {
        #[command(flatten)]
        io: IoArgs,
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        gate: GateArgs,
        #[command(flatten)]
        selection: SelectionArgs,
        #[arg(long, default_value_t = rhs_core::helpfulness::DEFAULT_HELPFUL_FLOOR)]
        helpful_floor: f64,
        #[command(flatten)]
        provider: ProviderArgs,
        /// Similarity space: `idf-bow`, `tfidf` or an embedding file.
        #[arg(long, default_value = "idf-bow")]
        embeddings: String,
    },
    /// MSE, Pearson and NDCG@1 of predictions against gold scores.
    EvalHelpfulness {
        /// Predictions from `score`; omit with --random.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Annotated dataset with gold scores.
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        /// Evaluate a seeded uniform [0, 2] predictor instead.
        #[arg(long, conflicts_with = "input")]
        random: bool,
        /// Use clamped scores instead of raw predictions.
        #[arg(long)]
        clamped: bool,
        #[arg(long, default_value_t = rhs_core::evalmetrics::DEFAULT_RESAMPLES)]
        resamples: usize,
    },
    /// Mean NDCG@K over groups of scored items.
    EvalRanking {
        #[command(flatten)]
        io: IoArgs,
        #[arg(long, value_delimiter = ',', default_value = "1")]
        k: Vec<usize>,
        #[arg(long, value_enum, default_value_t = GainKind::Exponential)]
        gain: GainKind,
    },
    /// ROUGE-1/2/L of candidates against references.
    EvalRouge {
        #[command(flatten)]
        io: IoArgs,
        /// Average over references instead of taking the best one.
        #[arg(long)]
        average: bool,
    },
    /// Precision@K curves of similarity methods on labeled pairs (CSV).
    EvalSimilarity {
        #[command(flatten)]
        io: IoArgs,
        #[arg(long)]
        k_max: Option<usize>,
        /// Adds a method scored with vectors from this embedding file.
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
    /// Annotation and data analyses.
    Analyze(AnalyzeArgs),
    /// Fit the selection exponent from annotated Pareto candidates.
    FitAlpha {
        #[command(flatten)]
        io: IoArgs,
    },
    /// Smallest similarity threshold reaching a target precision.
    CalibrateSigma {
        #[command(flatten)]
        io: IoArgs,
        #[arg(long, default_value_t = 0.9)]
        target_precision: f64,
        /// Fraction of pairs held out to check the threshold.
        #[arg(long, default_value_t = 0.5)]
        holdout: f64,
        /// Score column to calibrate; otherwise similarities are computed.
        #[arg(long)]
        method: Option<String>,
        /// Embedding file for computed similarities (default idf-bow).
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Ingest { .. } => "ingest",
            Command::Train { .. } => "train",
            Command::Score { .. } => "score",
            Command::Extract { .. } => "extract",
            Command::EvalHelpfulness { .. } => "eval-helpfulness",
            Command::EvalRanking { .. } => "eval-ranking",
            Command::EvalRouge { .. } => "eval-rouge",
            Command::EvalSimilarity { .. } => "eval-similarity",
            Command::Analyze(_) => "analyze",
            Command::FitAlpha { .. } => "fit-alpha",
            Command::CalibrateSigma { .. } => "calibrate-sigma",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GainKind {
    Exponential,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AnalyzeKind {
    Agreement,
    SplitHalf,
    VoteCurve,
    Consistency,
    Contrast,
    Length,
    SentimentProbs,
    NeutralCorrelation,
    Distribution,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(value_enum)]
    pub kind: AnalyzeKind,
    #[command(flatten)]
    pub io: IoArgs,
    /// agreement: fraction of worst annotators dropped.
    #[arg(long, default_value_t = rhs_core::annostats::DEFAULT_TRIM_FRACTION)]
    pub trim: f64,
    /// vote-curve: vote counts to evaluate.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,5,10")]
    pub votes: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    pub resamples: usize,
    /// vote-curve: per-row predictions (default: full-vote means).
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// consistency: similarity threshold for grouping.
    #[arg(long, default_value_t = rhs_core::rhs::DEFAULT_SIGMA)]
    pub sigma: f64,
    /// consistency: embedding file (default idf-bow over the dataset).
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// sentiment-probs: gold score counted as helpful.
    #[arg(long, default_value_t = 1.5)]
    pub helpful_floor: f64,
    /// contrast: model scoring the review sentences.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// contrast: helpful-vote count for the helpful set.
    #[arg(long, default_value_t = 50)]
    pub vote_floor: u64,
    #[arg(long, default_value_t = 500)]
    pub sample_size: usize,
    #[arg(long, value_delimiter = ',', default_value = "1.0,1.5")]
    pub thresholds: Vec<f64>,
    /// distribution: histogram bin width.
    #[arg(long, default_value_t = rhs_core::annostats::DEFAULT_BIN_WIDTH)]
    pub bin_width: f64,
    /// distribution: also emit the random-annotator curve for this many votes.
    #[arg(long)]
    pub random_votes: Option<usize>,
    #[command(flatten)]
    pub gate: GateArgs,
    #[command(flatten)]
    pub provider: ProviderArgs,
}

/// Bad flag combinations found after parsing.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// An output failed a consistency check that should hold by construction.
#[derive(Debug)]
pub struct InvariantViolation(pub String);

impl fmt::Display for InvariantViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "internal invariant violated: {}", self.0)
    }
}

impl std::error::Error for InvariantViolation {}

pub fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        EXIT_USAGE
    } else if err.downcast_ref::<InvariantViolation>().is_some() {
        EXIT_INVARIANT
    } else {
        EXIT_INPUT
    }
}

pub fn run(cli: Cli, argv: Vec<String>) -> anyhow::Result<()> {
    let mut run = Run::new(argv, cli.command.name(), cli.global.seed, cli.global.pretty);
    let g = &cli.global;
    match cli.command {
        Command::Ingest { io, gate } => pipeline::ingest(&mut run, g, &io, gate),
        Command::Train {
            io,
            lambda,
            embeddings,
            min_df,
            max_features,
        } => pipeline::train(&mut run, g, &io, lambda, embeddings.as_deref(), min_df, max_features),
        Command::Score { io, model, embeddings } => pipeline::score(&mut run, g, &io, &model, embeddings.as_deref()),
        Command::Extract {
            io,
            model,
            gate,
            selection,
            helpful_floor,
            provider,
            embeddings,
        } => pipeline::extract(
            &mut run,
            g,
            &io,
            &pipeline::ExtractOptions {
                model,
                gate,
                selection,
                helpful_floor,
                provider,
                embeddings,
            },
        ),
        Command::EvalHelpfulness {
            input,
            gold,
            output,
            random,
            clamped,
            resamples,
        } => eval::helpfulness(
            &mut run,
            g,
            input.as_deref(),
            &gold,
            output.as_deref(),
            random,
            clamped,
            resamples,
        ),
        Command::EvalRanking { io, k, gain } => eval::ranking(&mut run, &io, &k, gain),
        Command::EvalRouge { io, average } => eval::rouge_cmd(&mut run, &io, average),
        Command::EvalSimilarity { io, k_max, embeddings } => {
            eval::similarity(&mut run, &io, k_max, embeddings.as_deref())
        }
        Command::Analyze(args) => analyze::run(&mut run, g, &args),
        Command::FitAlpha { io } => eval::alpha(&mut run, &io),
        Command::CalibrateSigma {
            io,
            target_precision,
            holdout,
            method,
            embeddings,
        } => eval::calibrate_sigma(
            &mut run,
            g,
            &io,
            target_precision,
            holdout,
            method.as_deref(),
            embeddings.as_deref(),
        ),
    }?;
    run.finish()
}
