//! Resolution (defaults + validation) and execution of every subcommand.

use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use tailcut_core::analytic::{predict, AsymptotePrediction, Theorem};
use tailcut_core::bigram::{
    self, BigramModel, ConditionalFamily, HeadCutKind, PermutationMode, PowerLawConditionals, UnseenPolicy,
    PERPLEXITY_FLOOR,
};
use tailcut_core::distributions::{zipf_pmf, PowerLawSpec, TailTransform};
use tailcut_core::fitting::{crossover_detect, geometric_grid, loglog_fit, ScalingCurve};
use tailcut_core::generations::{run_chain, run_chain_bigram, ChainConfig, Learner, T0Schedule};
use tailcut_core::hutter::{self, EvalMode};
use tailcut_core::memory::{self, EmbeddingMode, RuleKind, SweepAxis, TripletConfig};
use tailcut_core::trials::{trial_stream, Runner};
use tailcut_core::{Categorical, TrialStats};

use crate::args::*;
use crate::output::{num, params, Table};

pub const RESULT_HEADER: [&str; 8] = [
    "experiment",
    "params",
    "x",
    "error_mean",
    "error_stderr",
    "trials",
    "master_seed",
    "wall_time_ms",
];

/// Settings shared by every subcommand after defaults are applied.
#[derive(Debug, Clone)]
pub struct Globals {
    pub seed: u64,
    pub trials: usize,
    pub workers: usize,
    pub emit_asymptotes: bool,
    pub record_time: bool,
}

/// Collected constraint violations; each names the offending field.
#[derive(Debug, Default)]
pub struct Diagnostics(pub Vec<String>);

impl Diagnostics {
    fn push(&mut self, field: &str, msg: impl AsRef<str>) {
        self.0.push(format!("{field}: {}", msg.as_ref()));
    }

    fn beta(&mut self, field: &str, beta: f64) {
        if !(beta.is_finite() && beta > 1.0) {
            self.push(field, format!("Zipf exponent must exceed 1, got {beta}"));
        }
    }

    fn positive<T: PartialOrd + Default + std::fmt::Display>(&mut self, field: &str, v: T) {
        if v <= T::default() {
            self.push(field, format!("must be positive, got {v}"));
        }
    }

    fn at_most(&mut self, field: &str, v: usize, bound_name: &str, bound: usize) {
        if v > bound {
            self.push(field, format!("{v} exceeds {bound_name} = {bound}"));
        }
    }

    fn fraction(&mut self, field: &str, v: f64) {
        if !(0.0..=1.0).contains(&v) {
            self.push(field, format!("must lie in [0, 1], got {v}"));
        }
    }

    fn grid(&mut self, field: &str, spec: &str, per_decade: usize) -> Vec<u64> {
        match parse_grid(spec, per_decade) {
            Ok(g) => g,
            Err(e) => {
                self.push(field, e.to_string());
                Vec::new()
            }
        }
    }

    fn theorem(&mut self, t: Theorem) {
        if let Err(e) = predict(&t) {
            self.push("asymptotes", e.to_string());
        }
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `lo..hi` with `per_decade` geometric points, or an explicit comma list.
pub fn parse_grid(spec: &str, per_decade: usize) -> Result<Vec<u64>> {
    let spec = spec.trim();
    if spec.is_empty() {
        bail!("grid is empty");
    }
    let grid = if let Some((lo, hi)) = spec.split_once("..") {
        let lo: f64 = lo.trim().parse().with_context(|| format!("bad grid start `{lo}`"))?;
        let hi: f64 = hi.trim().parse().with_context(|| format!("bad grid end `{hi}`"))?;
        if !(lo >= 1.0 && hi >= lo) {
            bail!("grid range must satisfy 1 <= lo <= hi, got {lo}..{hi}");
        }
        geometric_grid(lo, hi, per_decade)?
    } else {
        let mut g = Vec::new();
        for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let v: f64 = item.parse().with_context(|| format!("bad grid value `{item}`"))?;
            if !(v >= 1.0 && v.fract() == 0.0 && v < 1.8e19) {
                bail!("grid values must be positive integers, got {item}");
            }
            g.push(v as u64);
        }
        if g.windows(2).any(|w| w[1] <= w[0]) {
            bail!("grid values must be strictly increasing");
        }
        g
    };
    if grid.is_empty() {
        bail!("grid is empty");
    }
    Ok(grid)
}

fn parse_window(spec: &str) -> Result<(f64, f64)> {
    let (lo, hi) = spec.split_once("..").context("window must look like lo..hi")?;
    let (lo, hi): (f64, f64) = (lo.trim().parse()?, hi.trim().parse()?);
    if !(lo > 0.0 && hi > lo) {
        bail!("window must satisfy 0 < lo < hi");
    }
    Ok((lo, hi))
}

/// `top-p:0.9,temperature:0.8,truncate:100,narrow:1.5`
pub fn parse_transforms(spec: &str) -> Result<Vec<TailTransform>> {
    let mut out = Vec::new();
    for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (name, value) = item.split_once(':').with_context(|| format!("transform `{item}` needs a value"))?;
        let t = match name.trim() {
            "top-p" | "top_p" => TailTransform::TopP { mass: value.parse()? },
            "temperature" | "tau" => TailTransform::Temperature { tau: value.parse()? },
            "truncate" | "top-k" | "top_k" => TailTransform::Truncate { k: value.parse()? },
            "narrow" => TailTransform::Narrow { beta_prime: value.parse()? },
            other => bail!("unknown transform `{other}`"),
        };
        t.validate()?;
        out.push(t);
    }
    Ok(out)
}

fn zipf(beta: f64, n: usize) -> Result<Categorical> {
    Ok(zipf_pmf(&PowerLawSpec::new(beta, n)?)?)
}

fn rule_kind(r: Rule) -> RuleKind {
    match r {
        Rule::Counting => RuleKind::Counting,
        Rule::Thresholded => RuleKind::Thresholded,
    }
}

/// Predicted broken line at `x` (unit constants).
fn broken_line(p: &AsymptotePrediction, x: f64) -> f64 {
    let decay = p.amplitude.unwrap_or(1.0) * x.powf(-p.exponent_t);
    match (p.plateau_level, p.crossover_t, p.amplitude) {
        // plateau first, clean decay after the crossover
        (Some(level), Some(cross), Some(_)) => {
            if x < cross {
                level
            } else {
                decay
            }
        }
        (Some(level), _, None) => x.powf(-p.exponent_t) + level,
        (None, Some(cross), Some(_)) => match p.early_exponent {
            Some(e) if x < cross => x.powf(-e),
            _ => decay,
        },
        _ => decay,
    }
}

/// Rows of one measured curve plus, optionally, its predicted asymptote.
struct Emitter<'a> {
    table: Table,
    globals: &'a Globals,
    extra_cols: usize,
}

impl<'a> Emitter<'a> {
    fn new(globals: &'a Globals, extra: &[&'static str]) -> Self {
        let mut header: Vec<&'static str> = RESULT_HEADER[..2].to_vec();
        header.extend_from_slice(extra);
        header.extend_from_slice(&RESULT_HEADER[2..]);
        Self {
            table: Table::new(header),
            globals,
            extra_cols: extra.len(),
        }
    }

    fn row(&mut self, experiment: &str, params: &str, extra: &[String], x: f64, stats: TrialStats, wall_ms: u128) {
        debug_assert_eq!(extra.len(), self.extra_cols);
        let mut r = vec![experiment.to_string(), params.to_string()];
        r.extend_from_slice(extra);
        r.extend([
            num(x),
            num(stats.mean),
            num(stats.stderr),
            stats.trials.to_string(),
            self.globals.seed.to_string(),
            if self.globals.record_time { wall_ms.to_string() } else { "0".into() },
        ]);
        self.table.push(r);
    }

    fn curve(&mut self, curve: &ScalingCurve, params: &str, extra: &[String], trials: usize, wall_ms: u128) {
        for p in curve.points() {
            let stats = TrialStats {
                mean: p.y_mean,
                stderr: p.y_stderr,
                trials,
            };
            self.row(&curve.tag, params, extra, p.x, stats, wall_ms);
        }
    }

    fn asymptote(&mut self, tag: &str, params: &str, extra: &[String], xs: &[u64], f: impl Fn(f64) -> f64) {
        if !self.globals.emit_asymptotes {
            return;
        }
        for &x in xs {
            self.row(&format!("{tag}_asymptote"), params, extra, x as f64, TrialStats::exact(f(x as f64)), 0);
        }
    }
}

/// A fully resolved, validated command, ready to run.
pub enum Plan {
    Predict(PredictArgs, Theorem),
    Hutter(HutterArgs, Vec<u64>),
    Bigram(BigramArgs, Vec<u64>, Vec<TailTransform>),
    Memory(MemoryArgs, Vec<u64>),
    Chain(ChainArgs, Vec<u64>, T0Schedule, Vec<TailTransform>),
    Fit(PathBuf, Option<(f64, f64)>),
}

pub fn resolve_globals(cli: &Cli, diag: &mut Diagnostics) -> Globals {
    let workers = match cli.workers.clone().or_else(|| std::env::var("TAILCUT_WORKERS").ok()) {
        None => 0,
        Some(w) if w.trim() == "auto" => 0,
        Some(w) => match w.trim().parse::<usize>() {
            Ok(n) if n > 0 => n,
            _ => {
                diag.push("workers", format!("expected a positive integer or `auto`, got `{w}`"));
                0
            }
        },
    };
    Globals {
        seed: cli.seed.unwrap_or(0),
        trials: cli.trials.unwrap_or(20),
        workers,
        emit_asymptotes: cli.emit_asymptotes,
        record_time: cli.record_time,
    }
}

/// Fills defaults into the command's arguments and checks every constraint.
pub fn resolve(cmd: &Command, g: &Globals, diag: &mut Diagnostics) -> Option<Plan> {
    let plan = match cmd.clone() {
        Command::Predict(a) => resolve_predict(a, diag),
        Command::Hutter(a) => resolve_hutter(a, g, diag),
        Command::Bigram(a) => resolve_bigram(a, g, diag),
        Command::Memory(a) => resolve_memory(a, g, diag),
        Command::Chain(a) => resolve_chain(a, g, diag),
        Command::Fit(a) => {
            let window = match a.window.as_deref().map(parse_window) {
                Some(Err(e)) => {
                    diag.push("window", e.to_string());
                    None
                }
                Some(Ok(w)) => Some(w),
                None => None,
            };
            match a.input {
                Some(p) => Some(Plan::Fit(p, window)),
                None => {
                    diag.push("input", "a CSV file to fit is required");
                    None
                }
            }
        }
    };
    if diag.is_empty() {
        plan
    } else {
        None
    }
}

fn resolve_predict(a: PredictArgs, diag: &mut Diagnostics) -> Option<Plan> {
    let Some(kind) = a.theorem else {
        diag.push("theorem", "which scaling law to evaluate is required");
        return None;
    };
    let beta = a.beta.unwrap_or(1.5);
    let mut need = |name: &str, v: Option<f64>| -> f64 {
        v.unwrap_or_else(|| {
            diag.push(name, format!("required for `{}`", format!("{kind:?}").to_lowercase()));
            f64::NAN
        })
    };
    let theorem = match kind {
        TheoremKind::Simple => Theorem::Simple { beta, k: need("k", a.k) },
        TheoremKind::FiniteT0 => Theorem::FiniteT0 { beta, t0: need("t0", a.t0) },
        TheoremKind::Narrow => Theorem::Narrow {
            beta,
            beta_prime: need("beta-prime", a.beta_prime),
        },
        TheoremKind::NFold => Theorem::NFold {
            beta,
            n: a.n.unwrap_or(1),
            t: need("T", a.t),
            t0: need("t0", a.t0),
        },
        TheoremKind::Grokk => Theorem::Grokk {
            beta,
            k: need("k", a.k),
            pi: need("pi", a.pi),
        },
        TheoremKind::GrokkNarrow => Theorem::GrokkNarrow {
            beta,
            beta_prime: need("beta-prime", a.beta_prime),
            pi: need("pi", a.pi),
        },
        TheoremKind::Annealed => Theorem::Annealed {
            beta,
            k: need("k", a.k),
            n_start: need("n-start", a.n_start),
        },
        TheoremKind::Bigram => Theorem::Bigram { beta, k: a.k },
        TheoremKind::Triplet => Theorem::Triplet {
            beta,
            rule: rule_kind(a.rule.unwrap_or(Rule::Counting)),
        },
        TheoremKind::MarginalTv => Theorem::MarginalTv { beta },
    };
    if !diag.is_empty() {
        return None;
    }
    if let Err(e) = predict(&theorem) {
        diag.push("predict", e.to_string());
        return None;
    }
    let resolved = PredictArgs {
        beta: Some(beta),
        ..a
    };
    Some(Plan::Predict(resolved, theorem))
}

fn resolve_hutter(a: HutterArgs, g: &Globals, diag: &mut Diagnostics) -> Option<Plan> {
    let Some(kind) = a.kind else {
        diag.push("kind", "experiment kind is required (scaling, grokking, annealed, fixed-budget, narrow)");
        return None;
    };
    let beta = a.beta.unwrap_or(1.5);
    let support = a.support.unwrap_or(100_000);
    let k = a.k.unwrap_or(100);
    let per_decade = a.per_decade.unwrap_or(4);
    let r = HutterArgs {
        kind: Some(kind),
        beta: Some(beta),
        support: Some(support),
        k: Some(k),
        pi: Some(a.pi.unwrap_or(0.01)),
        n_start: Some(a.n_start.unwrap_or(2 * k)),
        head_weight: Some(a.head_weight.unwrap_or(0.5)),
        t_ai: Some(a.t_ai.unwrap_or(10_000)),
        beta_prime: Some(a.beta_prime.unwrap_or(2.0)),
        t: Some(a.t.unwrap_or_else(|| "1e2..1e6".into())),
        per_decade: Some(per_decade),
        exact: a.exact,
    };
    diag.beta("beta", beta);
    diag.positive("support", support);
    diag.positive("per-decade", per_decade);
    let grid = diag.grid("T", r.t.as_deref().unwrap(), per_decade.max(1));
    if !r.exact && g.trials < 2 {
        diag.push("trials", format!("Monte Carlo needs at least 2 trials, got {}", g.trials));
    }
    let uses_k = matches!(kind, HutterKind::Grokking | HutterKind::Annealed | HutterKind::FixedBudget);
    if uses_k {
        diag.positive("k", k);
        diag.at_most("k", k, "support", support);
    }
    match kind {
        HutterKind::Grokking => diag.fraction("pi", r.pi.unwrap()),
        HutterKind::Annealed => {
            let n_start = r.n_start.unwrap();
            if n_start <= k {
                diag.push("n-start", format!("purchased tail must start beyond k = {k}, got {n_start}"));
            }
            diag.at_most("n-start", n_start, "support", support);
            diag.fraction("head-weight", r.head_weight.unwrap());
        }
        HutterKind::FixedBudget => diag.positive("t-ai", r.t_ai.unwrap()),
        HutterKind::Narrow => diag.beta("beta-prime", r.beta_prime.unwrap()),
        HutterKind::Scaling => {}
    }
    if g.emit_asymptotes && diag.is_empty() {
        diag.theorem(hutter_theorem(&r));
    }
    Some(Plan::Hutter(r, grid))
}

fn hutter_theorem(a: &HutterArgs) -> Theorem {
    let beta = a.beta.unwrap();
    let k = a.k.unwrap() as f64;
    match a.kind.unwrap() {
        HutterKind::Scaling => Theorem::Simple {
            beta,
            k: a.support.unwrap() as f64,
        },
        HutterKind::Grokking => Theorem::Grokk { beta, k, pi: a.pi.unwrap() },
        HutterKind::Annealed => Theorem::Annealed {
            beta,
            k,
            n_start: a.n_start.unwrap() as f64,
        },
        HutterKind::FixedBudget => Theorem::Simple { beta, k },
        HutterKind::Narrow => Theorem::Narrow {
            beta,
            beta_prime: a.beta_prime.unwrap(),
        },
    }
}

fn resolve_bigram(a: BigramArgs, g: &Globals, diag: &mut Diagnostics) -> Option<Plan> {
    let Some(kind) = a.kind else {
        diag.push("kind", "experiment kind is required (scaling, cutoff, sequences, perplexity, marginal-tv)");
        return None;
    };
    let sequences = matches!(kind, BigramKind::Sequences | BigramKind::Perplexity);
    let vocab = a.vocab.unwrap_or(1000);
    let per_decade = a.per_decade.unwrap_or(4);
    let r = BigramArgs {
        kind: Some(kind),
        beta: Some(a.beta.unwrap_or(1.4)),
        k: Some(a.k.unwrap_or(10)),
        vocab: Some(vocab),
        contexts: Some(a.contexts.unwrap_or(if sequences { vocab } else { 100 })),
        permutation: Some(a.permutation.unwrap_or(Permutation::Identity)),
        permutation_seed: Some(a.permutation_seed.unwrap_or(0)),
        t: Some(a.t.unwrap_or_else(|| "1e2..1e5".into())),
        per_decade: Some(per_decade),
        length: Some(a.length.unwrap_or(32)),
        top_p: a.top_p,
        tau: a.tau,
        test_sequences: Some(a.test_sequences.unwrap_or(100)),
    };
    let beta = r.beta.unwrap();
    diag.beta("beta", beta);
    diag.positive("V", vocab);
    diag.positive("contexts", r.contexts.unwrap());
    diag.positive("per-decade", per_decade);
    let grid = diag.grid("T", r.t.as_deref().unwrap(), per_decade.max(1));
    if g.trials < 2 {
        diag.push("trials", format!("Monte Carlo needs at least 2 trials, got {}", g.trials));
    }
    if kind == BigramKind::Cutoff {
        diag.positive("k", r.k.unwrap());
        diag.at_most("k", r.k.unwrap(), "V", vocab);
    }
    if sequences {
        if r.contexts != Some(vocab) {
            diag.push("contexts", format!("sequence experiments need contexts = V = {vocab}"));
        }
        diag.positive("length", r.length.unwrap());
        if kind == BigramKind::Perplexity {
            diag.positive("test-sequences", r.test_sequences.unwrap());
        }
    } else if r.top_p.is_some() || r.tau.is_some() {
        diag.push("top-p", "top-p and tau only apply to the sequence experiments");
    }
    let transforms = sequence_transforms(&r, diag);
    if g.emit_asymptotes && diag.is_empty() {
        if let Some(t) = bigram_theorem(&r) {
            diag.theorem(t);
        }
    }
    Some(Plan::Bigram(r, grid, transforms))
}

fn sequence_transforms(a: &BigramArgs, diag: &mut Diagnostics) -> Vec<TailTransform> {
    let mut out = Vec::new();
    if let Some(mass) = a.top_p {
        out.push(TailTransform::TopP { mass });
    }
    if let Some(tau) = a.tau {
        out.push(TailTransform::Temperature { tau });
    }
    for t in &out {
        if let Err(e) = t.validate() {
            diag.push("transforms", e.to_string());
        }
    }
    out
}

fn bigram_theorem(a: &BigramArgs) -> Option<Theorem> {
    let beta = a.beta.unwrap();
    match a.kind.unwrap() {
        BigramKind::Scaling => Some(Theorem::Bigram { beta, k: None }),
        BigramKind::Cutoff => Some(Theorem::Bigram {
            beta,
            k: Some(a.k.unwrap() as f64),
        }),
        BigramKind::MarginalTv => Some(Theorem::MarginalTv { beta }),
        BigramKind::Sequences | BigramKind::Perplexity => None,
    }
}

fn resolve_memory(a: MemoryArgs, g: &Globals, diag: &mut Diagnostics) -> Option<Plan> {
    let axis = a.axis.unwrap_or(Axis::T);
    let contexts = a.contexts.unwrap_or(10_000);
    let per_decade = a.per_decade.unwrap_or(3);
    let default_grid = match axis {
        Axis::T => "1e2..1e5",
        Axis::D => "16,32,64,128,256,512,1024,2048",
        Axis::K => "1e1..1e3",
    };
    let r = MemoryArgs {
        axis: Some(axis),
        rule: Some(a.rule.unwrap_or(Rule::Counting)),
        embedding: Some(a.embedding.unwrap_or(Embedding::Sphere)),
        beta: Some(a.beta.unwrap_or(2.0)),
        contexts: Some(contexts),
        m: Some(a.m.unwrap_or(32)),
        d: Some(a.d.unwrap_or(2048)),
        k: Some(a.k.unwrap_or(contexts)),
        t: Some(a.t.unwrap_or(10_000_000)),
        grid: Some(a.grid.unwrap_or_else(|| default_grid.into())),
        per_decade: Some(per_decade),
    };
    diag.beta("beta", r.beta.unwrap());
    diag.positive("N", contexts);
    diag.positive("m", r.m.unwrap());
    diag.positive("d", r.d.unwrap());
    diag.positive("k", r.k.unwrap());
    diag.positive("T", r.t.unwrap());
    diag.at_most("k", r.k.unwrap(), "N", contexts);
    diag.positive("per-decade", per_decade);
    let grid = diag.grid("grid", r.grid.as_deref().unwrap(), per_decade.max(1));
    if g.trials == 0 {
        diag.push("trials", "need at least one trial");
    }
    let need_d = contexts.max(r.m.unwrap());
    if r.embedding == Some(Embedding::Orthonormal) {
        let smallest_d = if axis == Axis::D { grid.first().map_or(0, |&d| d as usize) } else { r.d.unwrap() };
        if smallest_d < need_d {
            diag.push("d", format!("orthonormal embeddings need d >= max(N, m) = {need_d}, got {smallest_d}"));
        }
    }
    if axis == Axis::K {
        if let Some(&last) = grid.last() {
            diag.at_most("grid", last as usize, "N", contexts);
        }
    }
    Some(Plan::Memory(r, grid))
}

fn resolve_chain(a: ChainArgs, g: &Globals, diag: &mut Diagnostics) -> Option<Plan> {
    let learner = a.learner.unwrap_or(LearnerKind::Hutter);
    let generations = a.generations.unwrap_or(5);
    let per_decade = a.per_decade.unwrap_or(4);
    let r = ChainArgs {
        learner: Some(learner),
        generations: Some(generations),
        t0: Some(a.t0.unwrap_or_else(|| "match".into())),
        transforms: Some(a.transforms.unwrap_or_default()),
        beta: Some(a.beta.unwrap_or(1.5)),
        support: Some(a.support.unwrap_or(100_000)),
        vocab: Some(a.vocab.unwrap_or(100)),
        contexts: Some(a.contexts.unwrap_or(100)),
        t: Some(a.t.unwrap_or_else(|| "1e2..1e4".into())),
        per_decade: Some(per_decade),
        propagate_marginal: a.propagate_marginal,
    };
    diag.beta("beta", r.beta.unwrap());
    diag.positive("per-decade", per_decade);
    let grid = diag.grid("T", r.t.as_deref().unwrap(), per_decade.max(1));
    let t0 = match r.t0.as_deref().unwrap().trim() {
        "match" => T0Schedule::MatchT,
        s if s.contains(',') => match s.split(',').map(|v| v.trim().parse::<f64>().map(|x| x as u64)).collect() {
            Ok(v) => T0Schedule::PerGeneration(v),
            Err(_) => {
                diag.push("t0", format!("cannot parse schedule `{s}`"));
                T0Schedule::MatchT
            }
        },
        s => match s.parse::<f64>() {
            Ok(v) if v >= 1.0 => T0Schedule::Fixed(v as u64),
            _ => {
                diag.push("t0", format!("expected a positive number, a list or `match`, got `{s}`"));
                T0Schedule::MatchT
            }
        },
    };
    let transforms = match parse_transforms(r.transforms.as_deref().unwrap()) {
        Ok(t) => t,
        Err(e) => {
            diag.push("transforms", e.to_string());
            Vec::new()
        }
    };
    match learner {
        LearnerKind::Hutter => diag.positive("support", r.support.unwrap()),
        LearnerKind::Bigram => {
            diag.positive("V", r.vocab.unwrap());
            diag.positive("contexts", r.contexts.unwrap());
        }
    }
    if !grid.is_empty() {
        let cfg = chain_config(&r, &grid, t0.clone(), transforms.clone(), g);
        if let Err(e) = cfg.validate() {
            diag.push("chain", e.to_string());
        }
    }
    Some(Plan::Chain(r, grid, t0, transforms))
}

fn chain_config(a: &ChainArgs, grid: &[u64], t0: T0Schedule, transforms: Vec<TailTransform>, g: &Globals) -> ChainConfig {
    ChainConfig {
        generations: a.generations.unwrap(),
        t0,
        transforms,
        learner: match a.learner.unwrap() {
            LearnerKind::Hutter => Learner::Hutter,
            LearnerKind::Bigram => Learner::Bigram,
        },
        final_t_grid: grid.to_vec(),
        trials: g.trials,
        seed: g.seed,
        propagate_marginal: a.propagate_marginal,
    }
}

/// The resolved arguments, for the run's config record.
pub fn resolved_section(plan: &Plan) -> Result<(&'static str, toml::Table)> {
    let (name, value) = match plan {
        Plan::Predict(a, _) => ("predict", toml::Table::try_from(a)?),
        Plan::Hutter(a, _) => ("hutter", toml::Table::try_from(a)?),
        Plan::Bigram(a, _, _) => ("bigram", toml::Table::try_from(a)?),
        Plan::Memory(a, _) => ("memory", toml::Table::try_from(a)?),
        Plan::Chain(a, _, _, _) => ("chain", toml::Table::try_from(a)?),
        Plan::Fit(input, window) => {
            let mut t = toml::Table::new();
            t.insert("input".into(), input.display().to_string().into());
            if let Some((lo, hi)) = window {
                t.insert("window".into(), format!("{lo}..{hi}").into());
            }
            ("fit", t)
        }
    };
    Ok((name, value))
}

pub fn execute(plan: &Plan, g: &Globals) -> Result<Table> {
    let runner = Runner::new(g.workers)?;
    match plan {
        Plan::Predict(_, theorem) => run_predict(theorem),
        Plan::Hutter(a, grid) => run_hutter(a, grid, g, &runner),
        Plan::Bigram(a, grid, transforms) => run_bigram(a, grid, transforms, g, &runner),
        Plan::Memory(a, grid) => run_memory(a, grid, g, &runner),
        Plan::Chain(a, grid, t0, transforms) => run_chain_cmd(a, grid, t0, transforms, g, &runner),
        Plan::Fit(input, window) => run_fit(input, *window),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn run_predict(theorem: &Theorem) -> Result<Table> {
    let p = predict(theorem)?;
    let mut t = Table::new(vec![
        "theorem",
        "params",
        "exponent",
        "plateau",
        "crossover",
        "early_exponent",
        "amplitude",
        "error_level",
        "exponent_d",
        "exponent_k",
        "description",
    ]);
    let ps: Vec<(&str, String)> = theorem.params().into_iter().map(|(k, v)| (k, num(v))).collect();
    t.push(vec![
        p.theorem.to_string(),
        params(&ps),
        num(p.exponent_t),
        opt(p.plateau_level),
        opt(p.crossover_t),
        opt(p.early_exponent),
        opt(p.amplitude),
        opt(p.error_level),
        opt(p.exponent_d),
        opt(p.exponent_k),
        p.description,
    ]);
    Ok(t)
}

fn run_hutter(a: &HutterArgs, grid: &[u64], g: &Globals, runner: &Runner) -> Result<Table> {
    let kind = a.kind.unwrap();
    let beta = a.beta.unwrap();
    let support = a.support.unwrap();
    let k = a.k.unwrap();
    let spec = PowerLawSpec::new(beta, support)?;
    let (mode, trials) = if a.exact {
        (EvalMode::Exact, 0)
    } else {
        (EvalMode::MonteCarlo { trials: g.trials }, g.trials)
    };
    let mut ps = vec![("beta", num(beta)), ("support", support.to_string())];
    let start = Instant::now();
    let curve = match kind {
        HutterKind::Scaling => hutter::scaling_curve(&spec, grid, mode, g.seed, runner)?,
        HutterKind::Grokking => {
            ps.extend([("k", k.to_string()), ("pi", num(a.pi.unwrap()))]);
            hutter::grokking_curve(&zipf_pmf(&spec)?, k, a.pi.unwrap(), grid, mode, g.seed, runner)?
        }
        HutterKind::Annealed => {
            ps.extend([
                ("k", k.to_string()),
                ("n_start", a.n_start.unwrap().to_string()),
                ("head_weight", num(a.head_weight.unwrap())),
            ]);
            hutter::annealed_curve(&spec, k, a.n_start.unwrap(), a.head_weight.unwrap(), grid, mode, g.seed, runner)?
        }
        HutterKind::FixedBudget => {
            ps.extend([("k", k.to_string()), ("t_ai", a.t_ai.unwrap().to_string())]);
            hutter::fixed_budget_curve(&zipf_pmf(&spec)?, k, a.t_ai.unwrap(), grid, mode, g.seed, runner)?
        }
        HutterKind::Narrow => {
            ps.push(("beta_prime", num(a.beta_prime.unwrap())));
            hutter::narrow_curve(&spec, a.beta_prime.unwrap(), grid, mode, g.seed, runner)?
        }
    };
    let wall = start.elapsed().as_millis();
    ps.push(("mode", if a.exact { "exact".into() } else { "mc".into() }));
    let ps = params(&ps);
    let mut e = Emitter::new(g, &[]);
    e.curve(&curve, &ps, &[], trials, wall);
    if g.emit_asymptotes {
        let pred = predict(&hutter_theorem(a))?;
        e.asymptote(&curve.tag, &ps, &[], grid, |x| broken_line(&pred, x));
    }
    Ok(e.table)
}

const SALT_SEQUENCES: u64 = 0x5345_5155_454e_4345;
const SALT_HELD_OUT: u64 = 0x4845_4c44_4f55_5400;

fn bigram_family(a: &BigramArgs, head_cut: Option<usize>) -> Result<ConditionalFamily> {
    let beta = a.beta.unwrap();
    let permutation = match a.permutation.unwrap() {
        Permutation::Identity => PermutationMode::Identity,
        Permutation::Random => PermutationMode::SeededRandom {
            seed: a.permutation_seed.unwrap(),
        },
    };
    Ok(ConditionalFamily::power_law(
        zipf(beta, a.contexts.unwrap())?,
        a.vocab.unwrap(),
        PowerLawConditionals {
            beta,
            permutation,
            head_cut,
            cut_kind: HeadCutKind::Rank,
        },
    )?)
}

fn run_bigram(a: &BigramArgs, grid: &[u64], transforms: &[TailTransform], g: &Globals, runner: &Runner) -> Result<Table> {
    let kind = a.kind.unwrap();
    let mut ps = vec![
        ("beta", num(a.beta.unwrap())),
        ("V", a.vocab.unwrap().to_string()),
        ("contexts", a.contexts.unwrap().to_string()),
        ("permutation", format!("{:?}", a.permutation.unwrap()).to_lowercase()),
    ];
    if a.permutation == Some(Permutation::Random) {
        ps.push(("permutation_seed", a.permutation_seed.unwrap().to_string()));
    }
    let truth = bigram_family(a, None)?;
    let start = Instant::now();
    let (curve, metric) = match kind {
        BigramKind::Scaling => (bigram::expected_tv_curve(&truth, grid, g.trials, g.seed, UnseenPolicy::Two, runner)?, "tv"),
        BigramKind::Cutoff => {
            ps.push(("k", a.k.unwrap().to_string()));
            let cut = bigram_family(a, a.k)?;
            (bigram::tv_curve("bigram_cutoff", &cut, &truth, grid, g.trials, g.seed, UnseenPolicy::Two, runner)?, "tv")
        }
        BigramKind::MarginalTv => (bigram::marginal_tv_curve(truth.marginal(), grid, g.trials, g.seed, runner)?, "tv"),
        BigramKind::Sequences | BigramKind::Perplexity => {
            ps.push(("length", a.length.unwrap().to_string()));
            if let Some(m) = a.top_p {
                ps.push(("top_p", num(m)));
            }
            if let Some(t) = a.tau {
                ps.push(("tau", num(t)));
            }
            let perplexity = kind == BigramKind::Perplexity;
            if perplexity {
                ps.push(("test_sequences", a.test_sequences.unwrap().to_string()));
            }
            sequence_curve(a, &truth, grid, transforms, perplexity, g, runner)?
        }
    };
    let wall = start.elapsed().as_millis();
    let ps = params(&ps);
    let metric = vec![metric.to_string()];
    let mut e = Emitter::new(g, &["metric"]);
    e.curve(&curve, &ps, &metric, g.trials, wall);
    if g.emit_asymptotes {
        if let Some(t) = bigram_theorem(a) {
            let pred = predict(&t)?;
            e.asymptote(&curve.tag, &ps, &metric, grid, |x| broken_line(&pred, x));
        }
    }
    Ok(e.table)
}

/// Trains on `ceil(T / length)` generated sequences per grid point and scores either TV
/// against the truth or perplexity on clean held-out sequences.
fn sequence_curve(
    a: &BigramArgs,
    truth: &ConditionalFamily,
    grid: &[u64],
    transforms: &[TailTransform],
    perplexity: bool,
    g: &Globals,
    runner: &Runner,
) -> Result<(ScalingCurve, &'static str)> {
    let length = a.length.unwrap();
    let vocab = a.vocab.unwrap();
    let stats = runner.grid_stats(grid.len(), g.trials, |point, trial| {
        let count = grid[point].div_ceil(length as u64) as usize;
        let mut rng = trial_stream(g.seed, SALT_SEQUENCES, point, trial);
        let train = bigram::sample_sequences(truth, count, length, &mut rng, transforms)?;
        let model = BigramModel::from_sequences(&train, vocab)?;
        if perplexity {
            let mut held = trial_stream(g.seed, SALT_HELD_OUT, 0, trial);
            let test = bigram::sample_sequences(truth, a.test_sequences.unwrap(), length, &mut held, &[])?;
            bigram::perplexity(&model, &test, PERPLEXITY_FLOOR)
        } else {
            bigram::tv_error(&model, truth, UnseenPolicy::Two)
        }
    })?;
    let tag = if perplexity { "bigram_perplexity" } else { "bigram_sequences" };
    let mut curve = ScalingCurve::new(tag);
    for (&t, s) in grid.iter().zip(&stats) {
        curve.push(t as f64, s.mean, s.stderr)?;
    }
    Ok((curve, if perplexity { "perplexity" } else { "tv" }))
}

fn run_memory(a: &MemoryArgs, grid: &[u64], g: &Globals, runner: &Runner) -> Result<Table> {
    let axis = a.axis.unwrap();
    let cfg = TripletConfig {
        beta: a.beta.unwrap(),
        contexts: a.contexts.unwrap(),
        classes: a.m.unwrap(),
        t: a.t.unwrap(),
        d: a.d.unwrap(),
        k: a.k.unwrap(),
        rule: rule_kind(a.rule.unwrap()),
        embedding: match a.embedding.unwrap() {
            Embedding::Sphere => EmbeddingMode::RandomSphere,
            Embedding::Orthonormal => EmbeddingMode::Orthonormal,
        },
    };
    let sweep = match axis {
        Axis::T => SweepAxis::T,
        Axis::D => SweepAxis::D,
        Axis::K => SweepAxis::K,
    };
    let start = Instant::now();
    let curve = memory::triplet_sweep(&cfg, sweep, grid, g.trials, g.seed, runner)?;
    let wall = start.elapsed().as_millis();
    let mut ps = vec![
        ("axis", format!("{axis:?}")),
        ("rule", format!("{:?}", a.rule.unwrap()).to_lowercase()),
        ("embedding", format!("{:?}", a.embedding.unwrap()).to_lowercase()),
        ("beta", num(cfg.beta)),
        ("N", cfg.contexts.to_string()),
        ("m", cfg.classes.to_string()),
    ];
    match axis {
        Axis::T => ps.extend([("d", cfg.d.to_string()), ("k", cfg.k.to_string())]),
        Axis::D => ps.extend([("T", cfg.t.to_string()), ("k", cfg.k.to_string())]),
        Axis::K => ps.extend([("T", cfg.t.to_string()), ("d", cfg.d.to_string())]),
    }
    let ps = params(&ps);
    let mut e = Emitter::new(g, &[]);
    e.curve(&curve, &ps, &[], g.trials, wall);
    if g.emit_asymptotes {
        let pred = predict(&Theorem::Triplet {
            beta: cfg.beta,
            rule: cfg.rule,
        })?;
        let exponent = match axis {
            Axis::T => pred.exponent_t,
            Axis::D => pred.exponent_d.unwrap_or(f64::NAN),
            Axis::K => pred.exponent_k.unwrap_or(f64::NAN),
        };
        e.asymptote(&curve.tag, &ps, &[], grid, |x| x.powf(-exponent));
    }
    Ok(e.table)
}

fn run_chain_cmd(
    a: &ChainArgs,
    grid: &[u64],
    t0: &T0Schedule,
    transforms: &[TailTransform],
    g: &Globals,
    runner: &Runner,
) -> Result<Table> {
    let cfg = chain_config(a, grid, t0.clone(), transforms.to_vec(), g);
    let beta = a.beta.unwrap();
    let mut ps = vec![
        ("learner", format!("{:?}", a.learner.unwrap()).to_lowercase()),
        ("beta", num(beta)),
        ("t0", a.t0.clone().unwrap()),
    ];
    if !transforms.is_empty() {
        ps.push(("transforms", a.transforms.clone().unwrap()));
    }
    let start = Instant::now();
    let result = match a.learner.unwrap() {
        LearnerKind::Hutter => {
            ps.push(("support", a.support.unwrap().to_string()));
            run_chain(&cfg, &zipf(beta, a.support.unwrap())?, runner)?
        }
        LearnerKind::Bigram => {
            ps.extend([
                ("V", a.vocab.unwrap().to_string()),
                ("contexts", a.contexts.unwrap().to_string()),
                ("propagate_marginal", a.propagate_marginal.to_string()),
            ]);
            let family = ConditionalFamily::power_law(
                zipf(beta, a.contexts.unwrap())?,
                a.vocab.unwrap(),
                PowerLawConditionals {
                    beta,
                    permutation: PermutationMode::Identity,
                    head_cut: None,
                    cut_kind: HeadCutKind::Rank,
                },
            )?;
            run_chain_bigram(&cfg, &family, runner)?
        }
    };
    let wall = start.elapsed().as_millis();
    let ps = params(&ps);
    let mut e = Emitter::new(g, &["generation"]);
    for (n, curve) in result.curves.iter().enumerate() {
        let gen = vec![n.to_string()];
        e.curve(curve, &ps, &gen, g.trials, wall);
    }
    let hutter_law = a.learner == Some(LearnerKind::Hutter) && transforms.is_empty();
    if g.emit_asymptotes && hutter_law {
        for n in 0..=cfg.generations {
            let gen = vec![n.to_string()];
            let t0_at = |x: f64| match t0 {
                T0Schedule::Fixed(v) => *v as f64,
                T0Schedule::PerGeneration(v) => v.first().copied().unwrap_or(1) as f64,
                T0Schedule::MatchT => x,
            };
            let tag = result.curves[n].tag.clone();
            e.asymptote(&tag, &ps, &gen, grid, |x| {
                predict(&Theorem::NFold {
                    beta,
                    n: n as u32,
                    t: x,
                    t0: t0_at(x),
                })
                .ok()
                .and_then(|p| p.error_level)
                .unwrap_or(f64::NAN)
            });
        }
    }
    Ok(e.table)
}

fn run_fit(input: &PathBuf, window: Option<(f64, f64)>) -> Result<Table> {
    let mut reader = csv::Reader::from_path(input).with_context(|| format!("cannot read {}", input.display()))?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (Some(ei), Some(pi), Some(xi), Some(yi)) = (col("experiment"), col("params"), col("x"), col("error_mean")) else {
        bail!("{} is not an experiment CSV (needs experiment, params, x, error_mean)", input.display());
    };
    let si = col("error_stderr");
    let group_cols: Vec<usize> = ["metric", "generation"].iter().filter_map(|c| col(c)).collect();
    let mut groups: Vec<((String, String, String), Vec<(f64, f64, f64)>)> = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec?;
        let experiment = rec[ei].to_string();
        if experiment.ends_with("_asymptote") {
            continue;
        }
        let group = group_cols.iter().map(|&c| format!("{}={}", &headers[c], &rec[c])).collect::<Vec<_>>().join(";");
        let parse = |i: usize| -> Result<f64> {
            rec[i].parse().with_context(|| format!("row {}: bad number `{}`", line + 2, &rec[i]))
        };
        let point = (parse(xi)?, parse(yi)?, si.map(parse).transpose()?.unwrap_or(0.0));
        let key = (experiment, rec[pi].to_string(), group);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, pts)) => pts.push(point),
            None => groups.push((key, vec![point])),
        }
    }
    if groups.is_empty() {
        bail!("{} has no measured rows", input.display());
    }
    let mut t = Table::new(vec!["tag", "params", "group", "exponent", "r_squared", "plateau", "crossover", "n_points"]);
    for ((tag, ps, group), mut pts) in groups {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut curve = ScalingCurve::new(tag.clone());
        for (x, y, s) in &pts {
            curve.push(*x, *y, *s).with_context(|| format!("curve {tag} [{ps}]"))?;
        }
        let fit = loglog_fit(&curve, window).ok();
        let cross = crossover_detect(&curve, None).ok();
        t.push(vec![
            tag,
            ps,
            group,
            opt(fit.map(|f| f.exponent)),
            opt(fit.map(|f| f.r_squared)),
            opt(cross.map(|c| c.plateau_level)),
            opt(cross.map(|c| c.crossover_x)),
            curve.len().to_string(),
        ]);
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        assert_eq!(parse_grid("1e2..1e4", 2).unwrap(), vec![100, 316, 1000, 3162, 10000]);
        assert_eq!(parse_grid("10, 20,40", 4).unwrap(), vec![10, 20, 40]);
        assert!(parse_grid("", 4).is_err());
        assert!(parse_grid("20,10", 4).is_err());
        assert!(parse_grid("1e4..1e2", 4).is_err());
        assert!(parse_grid("1.5", 4).is_err());
    }

    #[test]
    fn transforms() {
        let t = parse_transforms("top-p:0.9, temperature:0.8,truncate:5").unwrap();
        assert_eq!(
            t,
            vec![
                TailTransform::TopP { mass: 0.9 },
                TailTransform::Temperature { tau: 0.8 },
                TailTransform::Truncate { k: 5 }
            ]
        );
        assert!(parse_transforms("blur:2").is_err());
        assert!(parse_transforms("temperature:-1").is_err());
    }

    #[test]
    fn grokking_broken_line_is_continuous() {
        let p = predict(&Theorem::Grokk { beta: 2.0, k: 10.0, pi: 0.01 }).unwrap();
        assert_eq!(broken_line(&p, 100.0), 0.1);
        let at = broken_line(&p, 1e4);
        assert!((at - 0.1).abs() < 1e-12);
        assert!(broken_line(&p, 1e6) < 0.1);
    }
}
