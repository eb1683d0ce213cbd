//! Command-line surface. Every flag documented here appears in `--help`.

use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "driftqa",
    version,
    about = "Temporal question answering experiments over drifting document corpora",
    long_about = None,
    after_help = "Backends are configured through the environment only:\n  \
        DRIFTQA_CHAT_URL, DRIFTQA_CHAT_MODEL, DRIFTQA_API_KEY\n  \
        DRIFTQA_EMBED_URL, DRIFTQA_EMBED_MODEL, DRIFTQA_EMBED_API_KEY\n  \
        DRIFTQA_JUDGE_URLS, DRIFTQA_JUDGE_MODELS, DRIFTQA_JUDGE_API_KEY\n\
        Exit codes: 0 success, 1 internal error, 2 usage or configuration error."
)]
pub struct Cli {
    /// Raise log verbosity; repeat for more detail
    #[arg(short, long, action = ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

// Parsed once per process; boxing the variants buys nothing.
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Subcommand)]
pub enum Command {
    /// Clean page dumps and optionally check that answers survive cleaning
    Ingest(IngestArgs),
    /// Extract temporal facts from a corpus into a knowledge base file
    BuildKb(BuildKbArgs),
    /// Answer every benchmark question with one pipeline
    Run(RunArgs),
    /// Score answer records against the benchmark gold answers
    Evaluate(EvaluateArgs),
    /// Render accuracy tables and bucket datasets from eval files
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Benchmark JSON file of snapshot events
    #[arg(
        long,
        value_name = "PATH",
        required_unless_present = "articles",
        conflicts_with = "articles"
    )]
    pub input: Option<PathBuf>,

    /// Dated articles as JSON lines, for a unified corpus
    #[arg(long, value_name = "PATH", requires = "questions")]
    pub articles: Option<PathBuf>,

    /// Questions about the article entities as JSON lines
    #[arg(long, value_name = "PATH", requires = "articles")]
    pub questions: Option<PathBuf>,

    /// Directory for the cleaned corpus and reports
    #[arg(long, value_name = "DIR")]
    pub out_dir: PathBuf,

    /// Character pattern table replacing the built-in one
    #[arg(long, value_name = "PATH")]
    pub patterns: Option<PathBuf>,

    /// Drop incidents whose cleaned text does not contain the gold answer
    #[arg(long)]
    pub check_answers: bool,

    /// Also ask a judge model whether the cleaned text supports the answer
    #[arg(long, requires = "check_answers")]
    pub semantic_check: bool,

    /// Scripted judge for the semantic check instead of DRIFTQA_JUDGE_URLS
    #[arg(long, value_name = "PATH", requires = "semantic_check")]
    pub judge_mock_script: Option<PathBuf>,

    /// Directory of prompt template overrides
    #[arg(long, value_name = "DIR")]
    pub templates: Option<PathBuf>,

    /// Worker threads
    #[arg(long, value_name = "N", env = "DRIFTQA_JOBS", hide_env_values = true)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BuildKbArgs {
    /// Benchmark JSON file
    #[arg(long, value_name = "PATH")]
    pub benchmark: PathBuf,

    /// Knowledge base file to write
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,

    /// TOML file with run settings
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Evidence selection: closest, latest, cumulative or unified
    #[arg(long, value_name = "MODE", env = "DRIFTQA_SNAPSHOT_MODE", hide_env_values = true)]
    pub snapshot_mode: Option<String>,

    /// Longest text, in characters, sent to the extractor at once
    #[arg(
        long,
        value_name = "CHARS",
        env = "DRIFTQA_EXTRACTION_WINDOW",
        hide_env_values = true
    )]
    pub extraction_window: Option<usize>,

    /// Seed recorded in the manifest
    #[arg(long, value_name = "N", env = "DRIFTQA_SEED", hide_env_values = true)]
    pub seed: Option<u64>,

    /// Scripted chat replies as JSON lines instead of DRIFTQA_CHAT_URL
    #[arg(long, value_name = "PATH")]
    pub mock_script: Option<PathBuf>,

    /// Phrase-to-relation rules replacing model-based fact extraction
    #[arg(long, value_name = "PATH")]
    pub extraction_rules: Option<PathBuf>,

    /// Directory of prompt template overrides
    #[arg(long, value_name = "DIR")]
    pub templates: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Benchmark JSON file
    #[arg(long, value_name = "PATH")]
    pub benchmark: PathBuf,

    /// Answer records to write, as JSON lines
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,

    /// Run manifest to write [default: <OUT> with extension manifest.json]
    #[arg(long, value_name = "PATH")]
    pub manifest: Option<PathBuf>,

    /// TOML file with run settings
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Inference scheme: zs, icl, rag or ko
    #[arg(long, value_name = "NAME", env = "DRIFTQA_PIPELINE", hide_env_values = true)]
    pub pipeline: Option<String>,

    /// Evidence selection: closest, latest, cumulative or unified
    #[arg(long, value_name = "MODE", env = "DRIFTQA_SNAPSHOT_MODE", hide_env_values = true)]
    pub snapshot_mode: Option<String>,

    /// Knowledge base lifetime: per_run or per_question
    #[arg(long, value_name = "SCOPE", env = "DRIFTQA_KB_SCOPE", hide_env_values = true)]
    pub kb_scope: Option<String>,

    /// Chunks retrieved per question
    #[arg(long, value_name = "K", env = "DRIFTQA_TOP_K", hide_env_values = true)]
    pub top_k: Option<usize>,

    /// Largest chunk, in characters
    #[arg(long, value_name = "CHARS", env = "DRIFTQA_CHUNK_SIZE", hide_env_values = true)]
    pub chunk_size: Option<usize>,

    /// Characters shared by neighbouring chunks
    #[arg(long, value_name = "CHARS", env = "DRIFTQA_CHUNK_OVERLAP", hide_env_values = true)]
    pub chunk_overlap: Option<usize>,

    /// Embedding dimension
    #[arg(long, value_name = "N", env = "DRIFTQA_EMBED_DIM", hide_env_values = true)]
    pub embed_dim: Option<usize>,

    /// Largest prompt, in characters, the answering model accepts
    #[arg(long, value_name = "CHARS", env = "DRIFTQA_CONTEXT_BUDGET", hide_env_values = true)]
    pub context_budget: Option<usize>,

    /// Longest text, in characters, sent to the extractor at once
    #[arg(
        long,
        value_name = "CHARS",
        env = "DRIFTQA_EXTRACTION_WINDOW",
        hide_env_values = true
    )]
    pub extraction_window: Option<usize>,

    /// Let the model fall back on what it already knows
    #[arg(long, value_name = "BOOL", action = ArgAction::Set, env = "DRIFTQA_PARAMETRIC_MEMORY", hide_env_values = true)]
    pub parametric_memory: Option<bool>,

    /// Query every relation of the subject when the exact key has no facts
    #[arg(long, value_name = "BOOL", action = ArgAction::Set, env = "DRIFTQA_SUBJECT_FALLBACK", hide_env_values = true)]
    pub subject_fallback: Option<bool>,

    /// Seed for the hashing embedder and all tie-breaks
    #[arg(long, value_name = "N", env = "DRIFTQA_SEED", hide_env_values = true)]
    pub seed: Option<u64>,

    /// Worker threads
    #[arg(long, value_name = "N", env = "DRIFTQA_JOBS", hide_env_values = true)]
    pub jobs: Option<usize>,

    /// Scripted chat replies as JSON lines instead of DRIFTQA_CHAT_URL
    #[arg(long, value_name = "PATH")]
    pub mock_script: Option<PathBuf>,

    /// Model name written to records [default: the backend name]
    #[arg(long, value_name = "NAME")]
    pub model_label: Option<String>,

    /// Phrase-to-relation rules replacing model-based fact extraction
    #[arg(long, value_name = "PATH")]
    pub extraction_rules: Option<PathBuf>,

    /// Directory of prompt template overrides
    #[arg(long, value_name = "DIR")]
    pub templates: Option<PathBuf>,

    /// Knowledge base file written after a per-run ko pipeline
    #[arg(long, value_name = "PATH")]
    pub kb_out: Option<PathBuf>,

    /// Record wall-clock latency per question (makes records non-reproducible)
    #[arg(long)]
    pub measure_latency: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Answer records written by `run`
    #[arg(long, value_name = "PATH")]
    pub records: PathBuf,

    /// Benchmark JSON file holding the gold answers
    #[arg(long, value_name = "PATH")]
    pub benchmark: PathBuf,

    /// Eval records to write, as JSON lines
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,

    /// Scripted judge replies; repeat for several judges
    #[arg(long, value_name = "PATH")]
    pub judge_mock_script: Vec<PathBuf>,

    /// Directory of prompt template overrides
    #[arg(long, value_name = "DIR")]
    pub templates: Option<PathBuf>,

    /// Worker threads
    #[arg(long, value_name = "N", env = "DRIFTQA_JOBS", hide_env_values = true)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Eval records written by `evaluate`; repeat to combine runs
    #[arg(long, value_name = "PATH", required = true)]
    pub eval: Vec<PathBuf>,

    /// Directory for the table and CSV files
    #[arg(long, value_name = "DIR")]
    pub out_dir: PathBuf,

    /// Table columns: temporal_wiki or unified_clark [default: inferred]
    #[arg(long, value_name = "LAYOUT")]
    pub layout: Option<String>,

    /// What counts as correct: consensus or exact_match [default: inferred]
    #[arg(long, value_name = "BASIS")]
    pub basis: Option<String>,

    /// Partition records; the only value is zero-shot, which needs --zs
    #[arg(long, value_name = "KIND")]
    pub split: Option<String>,

    /// Zero-shot eval records used by --split zero-shot
    #[arg(long, value_name = "PATH")]
    pub zs: Option<PathBuf>,

    /// Ascending document length bucket edges, comma separated
    #[arg(long, value_name = "CHARS", value_delimiter = ',')]
    pub length_edges: Option<Vec<usize>>,

    /// Buckets with fewer records are flagged as low sample
    #[arg(long, value_name = "N", default_value_t = 10)]
    pub min_n: usize,
}
