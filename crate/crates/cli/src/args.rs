use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "osv", version, about = "Order-sensitive Shapley explanations for sequence classifiers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Explain each input line on its own.
    Explain(ExplainArgs),
    /// Explain slot-aligned input lines together as one template.
    Global(ExplainArgs),
    /// Run the synthetic ground-truth evaluation.
    Synth(SynthArgs),
    /// Apply an adversarial text transform line by line.
    Transform(TransformArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OrderModeArg {
    Absolute,
    Relative,
    /// Order left untouched: plain Shapley values.
    None,
}

#[derive(Debug, Args)]
pub struct EstimatorArgs {
    #[arg(long, default_value_t = 4)]
    pub q_samples: usize,

    #[arg(long, default_value_t = 5)]
    pub g_samples: usize,

    /// Convergence factor t.
    #[arg(long, default_value_t = 0.005)]
    pub tolerance: f64,

    /// Overridden by the OSV_SEED environment variable when set.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[arg(long, default_value_t = 100_000)]
    pub max_permutations: usize,

    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,

    /// Enumerate every coalition instead of sampling (sequences up to 6 tokens).
    #[arg(long)]
    pub exact: bool,

    /// Worker threads; 1 runs sequentially. Defaults to all cores.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    /// `stub`, `rule:task1`, `rule:bow:a,b`, `subprocess:<cmd>`, `tcp:<host>:<port>`, ...
    #[arg(long)]
    pub model: String,

    /// Whitespace-tokenized text, one sequence per line.
    #[arg(long)]
    pub input: PathBuf,

    /// `c1,c0` for p(c1) - p(c0), or `c1` for p(c1). Two-class models
    /// default to the second label minus the first.
    #[arg(long)]
    pub value_fn: Option<String>,

    #[arg(long, value_enum, default_value_t = OrderModeArg::Absolute)]
    pub order_mode: OrderModeArg,

    /// Occurrence intervention: `uniform-int:<V>`, `uniform:<tok>,<tok>,...`,
    /// `mask:<tok>`, or `slots:<file>` with one line of candidate tokens per
    /// slot. Defaults to uniform over the tokens of the input file.
    #[arg(long = "g")]
    pub g: Option<String>,

    /// Sum attributions over slot ranges, e.g. `0-1,3-4`.
    #[arg(long)]
    pub merge_slots: Option<String>,

    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,

    /// Bridge response timeout in milliseconds.
    #[arg(long, default_value_t = 5000)]
    pub timeout_ms: u64,

    #[command(flatten)]
    pub estimator: EstimatorArgs,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=3))]
    pub task: u8,

    /// Sequence length.
    #[arg(long, default_value_t = 8)]
    pub k: usize,

    #[arg(long, default_value_t = 200)]
    pub vocab: usize,

    /// Records in the generated dataset.
    #[arg(long, default_value_t = 10_000)]
    pub count: usize,

    /// Sequences beginning with a duplicate to explain.
    #[arg(long, default_value_t = 1000)]
    pub explain_count: usize,

    #[arg(long, default_value_t = 0.5)]
    pub positive_fraction: f64,

    #[arg(long, default_value_t = 0.99)]
    pub train_fraction: f64,

    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,

    #[command(flatten)]
    pub estimator: EstimatorArgs,
}

#[derive(Debug, Args)]
pub struct TransformArgs {
    /// `hans_star`, `append_phrase` or `prepend_symbol`.
    pub name: String,

    #[arg(long)]
    pub input: PathBuf,

    /// Defaults to standard output.
    #[arg(long)]
    pub output: Option<PathBuf>,

    /// Index into the negation phrase list (append_phrase).
    #[arg(long, default_value_t = 0)]
    pub phrase_id: usize,

    /// `end`, `end_with_comma` or `begin` (append_phrase).
    #[arg(long, default_value = "end")]
    pub position: String,

    /// Symbol to prepend (prepend_symbol).
    #[arg(long, default_value = ".")]
    pub symbol: String,
}
