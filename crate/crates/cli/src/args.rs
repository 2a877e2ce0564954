//! Command-line surface. Every option is optional at parse time so that validation can
//! report all problems at once; config files fill gaps, flags win.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Parser, Debug)]
#[command(name = "tailcut", version, about = "Scaling-law simulations of training on generated data")]
#[command(args_override_self = true)]
pub struct Cli {
    /// Master seed; every (point, trial) stream derives from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Monte Carlo trials per grid point.
    #[arg(long, global = true)]
    pub trials: Option<usize>,
    /// Worker threads: a number or `auto`. Defaults to $TAILCUT_WORKERS, then `auto`.
    #[arg(long, global = true)]
    pub workers: Option<String>,
    /// Output CSV path; stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// TOML file with defaults: top-level globals plus one table per subcommand.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Only check the configuration and list every problem.
    #[arg(long, global = true)]
    pub validate: bool,
    /// Add predicted broken-line rows next to the measured ones.
    #[arg(long, global = true)]
    pub emit_asymptotes: bool,
    /// Fill `wall_time_ms`; off by default so reruns are byte-identical.
    #[arg(long, global = true)]
    pub record_time: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Clone)]
pub enum Command {
    /// Print the asymptotes a scaling law predicts.
    Predict(PredictArgs),
    /// Memorizing learner on Zipf data.
    Hutter(HutterArgs),
    /// Count-ratio bigram estimator.
    Bigram(BigramArgs),
    /// Associative memory capacity sweeps.
    Memory(MemoryArgs),
    /// Repeated regeneration chains.
    Chain(ChainArgs),
    /// Fit exponents, plateaus and crossovers of an experiment CSV.
    Fit(FitArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Predict(_) => "predict",
            Command::Hutter(_) => "hutter",
            Command::Bigram(_) => "bigram",
            Command::Memory(_) => "memory",
            Command::Chain(_) => "chain",
            Command::Fit(_) => "fit",
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TheoremKind {
    Simple,
    FiniteT0,
    Narrow,
    NFold,
    Grokk,
    GrokkNarrow,
    Annealed,
    Bigram,
    Triplet,
    MarginalTv,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    Counting,
    Thresholded,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[command(args_override_self = true)]
#[serde(rename_all = "kebab-case")]
pub struct PredictArgs {
    #[arg(value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theorem: Option<TheoremKind>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub k: Option<f64>,
    #[arg(long)]
    pub t0: Option<f64>,
    #[arg(long)]
    pub beta_prime: Option<f64>,
    /// Number of generations.
    #[arg(long)]
    pub n: Option<u32>,
    #[arg(long = "T")]
    #[serde(rename = "T")]
    pub t: Option<f64>,
    #[arg(long)]
    pub pi: Option<f64>,
    #[arg(long)]
    pub n_start: Option<f64>,
    #[arg(long, value_enum)]
    pub rule: Option<Rule>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HutterKind {
    Scaling,
    Grokking,
    Annealed,
    FixedBudget,
    Narrow,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[command(args_override_self = true)]
#[serde(rename_all = "kebab-case")]
pub struct HutterArgs {
    #[arg(value_enum)]
    pub kind: Option<HutterKind>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Support size N of the Zipf law.
    #[arg(long)]
    pub support: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub pi: Option<f64>,
    #[arg(long)]
    pub n_start: Option<usize>,
    /// Weight of the head in the annealed mixture.
    #[arg(long)]
    pub head_weight: Option<f64>,
    /// Synthetic sample count for the fixed-budget mixture.
    #[arg(long)]
    pub t_ai: Option<u64>,
    #[arg(long)]
    pub beta_prime: Option<f64>,
    /// `lo..hi` (geometric) or a comma-separated list.
    #[arg(long = "T")]
    #[serde(rename = "T")]
    pub t: Option<String>,
    #[arg(long)]
    pub per_decade: Option<usize>,
    /// Closed-form expected error instead of Monte Carlo.
    #[arg(long)]
    #[serde(default)]
    pub exact: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BigramKind {
    Scaling,
    Cutoff,
    Sequences,
    Perplexity,
    MarginalTv,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Permutation {
    Identity,
    Random,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[command(args_override_self = true)]
#[serde(rename_all = "kebab-case")]
pub struct BigramArgs {
    #[arg(value_enum)]
    pub kind: Option<BigramKind>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Head cut of the training conditionals.
    #[arg(long)]
    pub k: Option<usize>,
    /// Vocabulary size V.
    #[arg(long = "V")]
    #[serde(rename = "V")]
    pub vocab: Option<usize>,
    /// Number of contexts N_ctx.
    #[arg(long)]
    pub contexts: Option<usize>,
    #[arg(long, value_enum)]
    pub permutation: Option<Permutation>,
    #[arg(long)]
    pub permutation_seed: Option<u64>,
    #[arg(long = "T")]
    #[serde(rename = "T")]
    pub t: Option<String>,
    #[arg(long)]
    pub per_decade: Option<usize>,
    /// Sequence length in the sequence experiments.
    #[arg(long)]
    pub length: Option<usize>,
    /// Nucleus mass applied when generating training sequences.
    #[arg(long)]
    pub top_p: Option<f64>,
    /// Temperature applied when generating training sequences.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Clean held-out sequences for perplexity.
    #[arg(long)]
    pub test_sequences: Option<usize>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Axis {
    T,
    D,
    K,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Embedding {
    Sphere,
    Orthonormal,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[command(args_override_self = true)]
#[serde(rename_all = "kebab-case")]
pub struct MemoryArgs {
    #[arg(long, value_enum)]
    pub axis: Option<Axis>,
    #[arg(long, value_enum)]
    pub rule: Option<Rule>,
    #[arg(long, value_enum)]
    pub embedding: Option<Embedding>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Number of contexts N.
    #[arg(long = "N")]
    #[serde(rename = "N")]
    pub contexts: Option<usize>,
    /// Number of classes m.
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long = "T")]
    #[serde(rename = "T")]
    pub t: Option<u64>,
    /// Values of the swept axis: `lo..hi` or a list.
    #[arg(long)]
    pub grid: Option<String>,
    #[arg(long)]
    pub per_decade: Option<usize>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LearnerKind {
    Hutter,
    Bigram,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[command(args_override_self = true)]
#[serde(rename_all = "kebab-case")]
pub struct ChainArgs {
    #[arg(long, value_enum)]
    pub learner: Option<LearnerKind>,
    #[arg(long)]
    pub generations: Option<usize>,
    /// Per-generation sample size: a number, a comma list (one per generation) or `match`.
    #[arg(long)]
    pub t0: Option<String>,
    /// Distortions applied at each regeneration, e.g. `top-p:0.9,temperature:0.8,truncate:100`.
    #[arg(long)]
    pub transforms: Option<String>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub support: Option<usize>,
    #[arg(long = "V")]
    #[serde(rename = "V")]
    pub vocab: Option<usize>,
    #[arg(long)]
    pub contexts: Option<usize>,
    #[arg(long = "T")]
    #[serde(rename = "T")]
    pub t: Option<String>,
    #[arg(long)]
    pub per_decade: Option<usize>,
    /// Bigram chains: carry the fitted context marginal forward.
    #[arg(long)]
    #[serde(default)]
    pub propagate_marginal: bool,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[command(args_override_self = true)]
#[serde(rename_all = "kebab-case")]
pub struct FitArgs {
    /// CSV written by an experiment subcommand.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Fit window `lo..hi`; defaults to trimming half a decade at each end.
    #[arg(long)]
    pub window: Option<String>,
}
