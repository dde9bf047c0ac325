//! `normkit` command-line pipelines.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on data errors.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use normkit::embed::ExtractionConfig;
use normkit::pipeline::ContextMode;

#[derive(Parser)]
#[command(name = "normkit", version, about = "Medical concept normalization toolkit")]
struct Cli {
    /// Worker threads for parallel stages.
    #[arg(long, global = true, env = "NORMKIT_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Knowledge-base construction and inspection.
    #[command(subcommand)]
    Kb(KbCommand),
    /// Subword tokenizer training.
    #[command(subcommand)]
    Bpe(BpeCommand),
    /// Built-in embeddings for names and mentions.
    #[command(subcommand)]
    Embed(EmbedCommand),
    /// Candidate generation.
    #[command(subcommand)]
    Link(LinkCommand),
    /// Re-ranking data and re-ranking.
    #[command(subcommand)]
    Rerank(RerankCommand),
    /// Self-alignment training of a linear projection.
    #[command(subcommand)]
    Align(AlignCommand),
    /// Accuracy@n and weighted precision/recall/F1.
    Eval(EvalArgs),
    /// Error categorization.
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
}

#[derive(Subcommand)]
pub enum KbCommand {
    /// Load and validate a knowledge-base directory, optionally merge a
    /// lexicon, and write canonical tables.
    Build(KbBuildArgs),
    /// Merge a LEX1 lexicon into a knowledge base.
    MergeLexicon(KbMergeArgs),
    /// Per-source name and concept counts.
    Stats(KbStatsArgs),
}

#[derive(Args, Serialize)]
pub struct KbBuildArgs {
    #[arg(long)]
    pub kb: PathBuf,
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// Match lexicon headwords without stemming.
    #[arg(long)]
    pub no_stem: bool,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Serialize)]
pub struct KbMergeArgs {
    #[arg(long)]
    pub kb: PathBuf,
    #[arg(long)]
    pub lexicon: PathBuf,
    #[arg(long)]
    pub no_stem: bool,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Serialize)]
pub struct KbStatsArgs {
    #[arg(long)]
    pub kb: PathBuf,
    /// Also write the table to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand)]
pub enum BpeCommand {
    /// Train merges on knowledge-base names and/or corpus text.
    Train(BpeTrainArgs),
}

#[derive(Args, Serialize)]
pub struct BpeTrainArgs {
    #[arg(long)]
    pub kb: Option<PathBuf>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long, default_value_t = 2000)]
    pub merges: usize,
    /// Merge list (BPE1); the vocabulary goes to `<out>.vocab`.
    #[arg(long)]
    pub out: PathBuf,
}

/// Built-in embedder settings shared by several commands.
#[derive(Args, Serialize, Clone)]
pub struct EmbedderArgs {
    /// Trained merge list; `<bpe>.vocab` must sit next to it.
    #[arg(long)]
    pub bpe: Option<PathBuf>,
    #[arg(long, default_value_t = 128)]
    pub dim: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Serialize, Clone, Copy)]
pub struct ContextArgs {
    #[arg(long, value_enum, default_value_t = ContextArg::None)]
    pub context: ContextArg,
    #[arg(long, default_value_t = 64)]
    pub window_tokens: usize,
    #[arg(long, default_value_t = 150)]
    pub max_sentence_tokens: usize,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ContextArg {
    None,
    Window,
    Sentence,
}

impl From<ContextArg> for ContextMode {
    fn from(c: ContextArg) -> Self {
        match c {
            ContextArg::None => ContextMode::None,
            ContextArg::Window => ContextMode::Window,
            ContextArg::Sentence => ContextMode::Sentence,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ConfigArg {
    Cls,
    Nospec,
    All,
}

impl From<ConfigArg> for ExtractionConfig {
    fn from(c: ConfigArg) -> Self {
        match c {
            ConfigArg::Cls => ExtractionConfig::Cls,
            ConfigArg::Nospec => ExtractionConfig::Nospec,
            ConfigArg::All => ExtractionConfig::All,
        }
    }
}

#[derive(Subcommand)]
pub enum EmbedCommand {
    /// One row per concept name.
    Index(EmbedIndexArgs),
    /// One row per corpus mention.
    Mentions(EmbedMentionsArgs),
}

#[derive(Args, Serialize)]
pub struct EmbedIndexArgs {
    #[arg(long)]
    pub kb: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub embedder: EmbedderArgs,
    #[arg(long, value_enum, default_value_t = ConfigArg::Cls)]
    pub config: ConfigArg,
    /// EMB1 output; ids go to `<out>.ids`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Serialize)]
pub struct EmbedMentionsArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub embedder: EmbedderArgs,
    #[arg(long, value_enum, default_value_t = ConfigArg::Cls)]
    pub config: ConfigArg,
    #[command(flatten)]
    #[serde(flatten)]
    pub context: ContextArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Subcommand)]
pub enum LinkCommand {
    /// Edit-distance candidates over the stemmed name index.
    String(LinkStringArgs),
    /// Cosine candidates over a name embedding index.
    Embed(LinkEmbedArgs),
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreArg {
    /// Score is the negated edit distance.
    Distance,
    /// Score is one minus the normalized edit distance.
    Similarity,
}

#[derive(Args, Serialize)]
pub struct LinkStringArgs {
    #[arg(long)]
    pub kb: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value_t = 64)]
    pub k: usize,
    #[arg(long)]
    pub no_stem: bool,
    #[arg(long, value_enum, default_value_t = ScoreArg::Distance)]
    pub score: ScoreArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Serialize)]
pub struct LinkEmbedArgs {
    /// Precomputed name index (EMB1). Built from `--kb` when absent.
    #[arg(long)]
    pub index: Option<PathBuf>,
    #[arg(long)]
    pub kb: Option<PathBuf>,
    /// Precomputed mention embeddings (EMB1). Built from `--corpus` when absent.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub embedder: EmbedderArgs,
    #[arg(long, value_enum, default_value_t = ConfigArg::Cls)]
    pub config: ConfigArg,
    #[command(flatten)]
    #[serde(flatten)]
    pub context: ContextArgs,
    /// Accept index and mention vectors pooled with different configs.
    #[arg(long)]
    pub allow_mixed_config: bool,
    #[arg(long, default_value_t = 64)]
    pub k: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Subcommand)]
pub enum RerankCommand {
    /// Sentence-level training data (RRK1) with sampled negatives.
    BuildData(RerankBuildArgs),
    /// Reorder PRED1 candidates with a scores file or the baseline scorer.
    Apply(RerankApplyArgs),
}

#[derive(Args, Serialize)]
pub struct RerankBuildArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub kb: PathBuf,
    /// Tokenizer for the length filter; whitespace/punctuation words if absent.
    #[arg(long)]
    pub bpe: Option<PathBuf>,
    #[arg(long, default_value_t = 63)]
    pub negatives: usize,
    #[arg(long, default_value_t = 150)]
    pub max_sentence_tokens: usize,
    #[arg(long, default_value_t = 0.8)]
    pub split: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory for `train.rrk1` and `validation.rrk1`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Serialize)]
pub struct RerankApplyArgs {
    #[arg(long)]
    pub predictions: PathBuf,
    /// JSON-lines `{example_id, scores}` aligned with each candidate list.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Corpus for the baseline scorer's sentence context.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub embedder: EmbedderArgs,
    #[arg(long, value_enum, default_value_t = ConfigArg::Nospec)]
    pub config: ConfigArg,
    #[arg(long, default_value_t = 150)]
    pub max_sentence_tokens: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Subcommand)]
pub enum AlignCommand {
    /// Gradient descent on the multi-similarity loss with mined pairs.
    Train(AlignTrainArgs),
}

#[derive(Args, Serialize)]
pub struct AlignTrainArgs {
    /// Input vectors (EMB1). Labels are the CUI part of `cui<TAB>name` ids,
    /// or the whole id.
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Training config JSON (alpha, beta, epsilon, lambda, rate, epochs, seed).
    #[arg(long)]
    pub train_config: Option<PathBuf>,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    /// Output dimension; defaults to the input dimension (identity start).
    #[arg(long)]
    pub dim_out: Option<usize>,
    /// Projection matrix as EMB1 (rows of W); loss trace in `<out>.loss.csv`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub predictions: PathBuf,
    /// Accuracy cut-offs.
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 5, 10, 32, 64])]
    pub n: Vec<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand)]
pub enum AnalyzeCommand {
    /// Categorize top-1 errors.
    Errors(AnalyzeErrorsArgs),
}

#[derive(Args, Serialize)]
pub struct AnalyzeErrorsArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub kb: PathBuf,
    /// Also dump error records as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// An error in how the tool was invoked rather than in the data.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Kb(KbCommand::Build(a)) => commands::kb_build(&a),
        Command::Kb(KbCommand::MergeLexicon(a)) => commands::kb_merge(&a),
        Command::Kb(KbCommand::Stats(a)) => commands::kb_stats(&a),
        Command::Bpe(BpeCommand::Train(a)) => commands::bpe_train(&a),
        Command::Embed(EmbedCommand::Index(a)) => commands::embed_index(&a),
        Command::Embed(EmbedCommand::Mentions(a)) => commands::embed_mentions(&a),
        Command::Link(LinkCommand::String(a)) => commands::link_string(&a),
        Command::Link(LinkCommand::Embed(a)) => commands::link_embed(&a),
        Command::Rerank(RerankCommand::BuildData(a)) => commands::rerank_build(&a),
        Command::Rerank(RerankCommand::Apply(a)) => commands::rerank_apply(&a),
        Command::Align(AlignCommand::Train(a)) => commands::align_train(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Analyze(AnalyzeCommand::Errors(a)) => commands::analyze_errors(&a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
