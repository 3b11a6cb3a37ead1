use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qcmatch_core::coclr::RewriteMode;
use qcmatch_core::pyfunc::ComponentMask;

#[derive(Debug, Parser)]
#[command(name = "qcmatch", version, about = "Query-code matching workbench")]
pub struct Cli {
    /// Base directory for relative input paths.
    #[arg(long, global = true, env = "QCMATCH_DATA_DIR")]
    pub data_dir: Option<PathBuf>,

    /// Where to write the run manifest. Defaults to `<output>.manifest.json`.
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Keep queries that mention python and trip no intent rule.
    Filter(FilterArgs),
    /// Pair queries with their most similar code.
    Curate(CurateArgs),
    /// Train a siamese matcher.
    Train(TrainArgs),
    /// Evaluate a checkpoint.
    Eval(EvalArgs),
    /// Inter-annotator agreement of a vote file.
    Alpha(AlphaArgs),
    /// Run the annotation service.
    Serve(ServeArgs),
    /// Split one Python function into header, docstring and body.
    Parse(ParseArgs),
    /// Drop components from every code in a code file.
    Strip(StripArgs),
    /// Generate a synthetic corpus.
    Synth(SynthArgs),
    /// Corpus statistics.
    Stats(StatsArgs),
    /// Split a labeled corpus for QA or search.
    Split(SplitArgs),
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    /// Rule file; the bundled rules are used when absent.
    #[arg(long)]
    pub rules: Option<PathBuf>,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub rejected: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CurateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long)]
    pub codes: PathBuf,
    #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
    pub threshold: f64,
    #[arg(long = "max-occ", default_value_t = 10)]
    pub max_occ: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Qa,
    Search,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// JSON training config; omitted fields take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Labeled training pairs.
    #[arg(long, default_value = "train.jsonl")]
    pub data: PathBuf,
    /// Held-out pairs for epoch selection.
    #[arg(long)]
    pub valid: Option<PathBuf>,
    /// With --valid, select epochs by search MRR over this codebase instead of QA accuracy.
    #[arg(long)]
    pub codebase: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub no_iba: bool,
    #[arg(long)]
    pub no_qra: bool,
    #[arg(long)]
    pub qra_mode: Option<RewriteMode>,
    /// Components to keep, e.g. `header,body`.
    #[arg(long, value_parser = parse_mask, default_value = "header,docstring,body")]
    pub keep: ComponentMask,
    #[arg(long, default_value = "checkpoint.json")]
    pub out: PathBuf,
    /// Per-epoch loss and validation metric as JSONL.
    #[arg(long)]
    pub history: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(subcommand)]
    pub task: EvalTask,
}

#[derive(Debug, Subcommand)]
pub enum EvalTask {
    /// Accuracy of thresholded match scores.
    Qa(EvalQaArgs),
    /// Mean reciprocal rank over a codebase.
    Search(EvalSearchArgs),
}

#[derive(Debug, Args)]
pub struct EvalCommon {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_parser = parse_mask, default_value = "header,docstring,body")]
    pub keep: ComponentMask,
    /// Write the JSON result here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalQaArgs {
    #[command(flatten)]
    pub common: EvalCommon,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
}

#[derive(Debug, Args)]
pub struct EvalSearchArgs {
    #[command(flatten)]
    pub common: EvalCommon,
    #[arg(long, required = true)]
    pub codebase: PathBuf,
    /// Per-query ranks and top-10 lists as JSONL.
    #[arg(long)]
    pub details: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AlphaArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, default_value_t = 2.0 / 3.0)]
    pub min_agreement: f64,
    #[arg(long, default_value_t = 3)]
    pub min_votes: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Candidate pairs to annotate.
    #[arg(long)]
    pub data: PathBuf,
    /// Append-only vote log; replayed on start.
    #[arg(long)]
    pub log: PathBuf,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: std::net::IpAddr,
    #[arg(long, default_value_t = 2.0 / 3.0)]
    pub min_agreement: f64,
}

#[derive(Debug, Args)]
pub struct ParseArgs {
    /// A file holding one Python function.
    #[arg(long = "in")]
    pub input: PathBuf,
}

#[derive(Debug, Args)]
pub struct StripArgs {
    /// Code file, one `{"code_id", "code"}` object per line.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_parser = parse_mask)]
    pub keep: ComponentMask,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// JSON generator config; omitted fields take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Put concept words in docstrings only.
    #[arg(long)]
    pub docstring_only: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub task: TaskArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Split sizes; defaults to the full-corpus sizes for the task.
    #[arg(long, value_delimiter = ',')]
    pub counts: Option<Vec<usize>>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn parse_mask(s: &str) -> Result<ComponentMask, String> {
    let mut mask = ComponentMask::new(false, false, false);
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part {
            "header" => mask.keep_header = true,
            "docstring" | "doc" | "documentation" => mask.keep_docstring = true,
            "body" => mask.keep_body = true,
            other => return Err(format!("unknown component `{other}` (expected header, docstring or body)")),
        }
    }
    if mask.is_valid() {
        Ok(mask)
    } else {
        Err("keep at least one component".into())
    }
}
