//! Scaling laws of learners trained on heavy-tailed data whose tail has been cut,
//! narrowed or regenerated by earlier models.
//!
//! Indices are 0-based throughout: rank `r` of a Zipf law lives at index `r - 1`, and a
//! cutoff `k` keeps indices `0..k`.

pub mod analytic;
pub mod bigram;
pub mod distributions;
pub mod error;
pub mod fitting;
pub mod generations;
pub mod hutter;
pub mod memory;
pub mod rng;
pub mod trials;

pub use analytic::{hutter_exact_error, predict, AsymptotePrediction, Theorem};
pub use bigram::{BigramModel, ConditionalFamily, PairCounts, PermutationMode, PowerLawConditionals, UnseenPolicy};
pub use distributions::{zipf_pmf, Categorical, PowerLawSpec, SampleCounts, Sampler, TailTransform};
pub use error::{Error, Result};
pub use fitting::{CrossoverFit, PowerFit, ScalingCurve};
pub use generations::{ChainConfig, ChainResult, GenerationTrace};
pub use hutter::{EvalMode, HutterModel, MixtureSpec};
pub use memory::{EmbeddingMode, EmbeddingSet, GroundTruth, MemoryModel, RuleKind, UpdateRule};
pub use rng::RngStream;
pub use trials::{Runner, TrialStats};
