//! Probabilistic labels: a bigram world with permuted power-law conditionals and the
//! count-ratio estimator `q(j|i) = n(i,j) / n(i)`.
//!
//! Test error is `Σ_i p_i · TV(q(·|i), p(·|i))` with `TV(a, b) = Σ_j |a_j − b_j|`
//! (range `[0, 2]`).

use std::collections::HashMap;
use std::sync::{Arc, OnceLock};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::distributions::{
    apply_transforms, power_law, stable_sum, truncate_tail, Categorical, Sampler, TailTransform,
};
use crate::error::{ensure_same_support, invalid, Error, Result};
use crate::fitting::ScalingCurve;
use crate::rng::RngStream;
use crate::trials::{trial_stream, Runner, TrialStats};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum PermutationMode {
    Identity,
    /// Per-context shuffle keyed by `(seed, context)`.
    SeededRandom { seed: u64 },
}

/// How a head cut `k` selects the kept outputs of each conditional.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadCutKind {
    /// Keep the `k` most probable outputs of each context.
    #[default]
    Rank,
    /// Keep output indices `j < k`, whatever their rank.
    Index,
}

/// Power-law conditionals `p(j|i) ∝ π_i(j)^{-β}`, where `π_i(j)` is the 1-based rank
/// of output `j` in context `i`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerLawConditionals {
    pub beta: f64,
    pub permutation: PermutationMode,
    pub head_cut: Option<usize>,
    #[serde(default)]
    pub cut_kind: HeadCutKind,
}

/// One materialized conditional with its sampler.
#[derive(Clone, Debug)]
pub struct Conditional {
    dist: Categorical,
    sampler: Sampler,
}

impl Conditional {
    pub fn new(dist: Categorical) -> Result<Self> {
        let sampler = Sampler::new(&dist)?;
        Ok(Self { dist, sampler })
    }

    pub fn dist(&self) -> &Categorical {
        &self.dist
    }

    pub fn sampler(&self) -> &Sampler {
        &self.sampler
    }
}

#[derive(Clone, Debug)]
enum Source {
    PowerLaw {
        law: PowerLawConditionals,
        /// Shared by every context under the identity permutation.
        shared: Option<Arc<Conditional>>,
    },
    Explicit,
}

/// Marginal over contexts plus one conditional per context.
///
/// Conditionals are built on first use and cached; concurrent first uses may both
/// compute, and the (identical) result is published once.
#[derive(Clone, Debug)]
pub struct ConditionalFamily {
    marginal: Categorical,
    marginal_sampler: Sampler,
    vocab: usize,
    source: Source,
    cache: Vec<OnceLock<Arc<Conditional>>>,
}

const SALT_PERMUTATION: u64 = 0x5045_524d_5554_4500;

impl ConditionalFamily {
    pub fn power_law(marginal: Categorical, vocab: usize, law: PowerLawConditionals) -> Result<Self> {
        if !(law.beta.is_finite() && law.beta > 1.0) {
            return Err(invalid("beta", format!("conditional exponent must exceed 1, got {}", law.beta)));
        }
        if vocab == 0 {
            return Err(invalid("V", "vocabulary must be non-empty"));
        }
        if let Some(k) = law.head_cut {
            if k == 0 || k > vocab {
                return Err(invalid("k", format!("head cut {k} outside 1..={vocab}")));
            }
        }
        let shared = match law.permutation {
            PermutationMode::Identity => Some(Arc::new(Conditional::new(Self::ranked_pmf(&law, vocab, None)?)?)),
            PermutationMode::SeededRandom { .. } => None,
        };
        let n = marginal.support_size();
        Ok(Self {
            marginal_sampler: Sampler::new(&marginal)?,
            marginal,
            vocab,
            source: Source::PowerLaw { law, shared },
            cache: (0..n).map(|_| OnceLock::new()).collect(),
        })
    }

    /// A family with the given conditionals, one per context.
    pub fn explicit(marginal: Categorical, conditionals: Vec<Categorical>) -> Result<Self> {
        ensure_same_support(marginal.support_size(), conditionals.len())?;
        let vocab = conditionals.first().ok_or(Error::Empty("conditionals"))?.support_size();
        let cache = conditionals
            .into_iter()
            .map(|c| {
                ensure_same_support(vocab, c.support_size())?;
                let cell = OnceLock::new();
                let _ = cell.set(Arc::new(Conditional::new(c)?));
                Ok(cell)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            marginal_sampler: Sampler::new(&marginal)?,
            marginal,
            vocab,
            source: Source::Explicit,
            cache,
        })
    }

    /// The same conditionals under a different context marginal.
    pub fn with_marginal(&self, marginal: Categorical) -> Result<Self> {
        ensure_same_support(self.marginal.support_size(), marginal.support_size())?;
        Ok(Self {
            marginal_sampler: Sampler::new(&marginal)?,
            marginal,
            vocab: self.vocab,
            source: self.source.clone(),
            cache: self.cache.clone(),
        })
    }

    /// `probs[j] ∝ rank(j)^{-β}` with the head cut applied; `ranks = None` is the identity.
    fn ranked_pmf(law: &PowerLawConditionals, vocab: usize, ranks: Option<&[usize]>) -> Result<Categorical> {
        let by_rank = power_law(law.beta, vocab)?;
        let rank_of = |j: usize| ranks.map_or(j, |r| r[j]);
        match (law.head_cut, law.cut_kind) {
            (None, _) => Ok(match ranks {
                None => by_rank,
                Some(r) => Categorical::new(r.iter().map(|&rank| by_rank.get(rank)).collect())?,
            }),
            (Some(k), HeadCutKind::Rank) => {
                let cut = truncate_tail(&by_rank, k)?;
                match ranks {
                    None => Ok(cut),
                    Some(r) => Categorical::new(r.iter().map(|&rank| cut.get(rank)).collect()),
                }
            }
            (Some(k), HeadCutKind::Index) => Categorical::from_weights(
                (0..vocab)
                    .map(|j| if j < k { by_rank.get(rank_of(j)) } else { 0.0 })
                    .collect(),
            ),
        }
    }

    /// Rank (0-based) of each output in context `i` under a seeded shuffle.
    pub fn permutation_ranks(seed: u64, i: usize, vocab: usize) -> Vec<usize> {
        let mut ranks: Vec<usize> = (0..vocab).collect();
        ranks.shuffle(&mut RngStream::keyed(seed, &[SALT_PERMUTATION, i as u64]));
        ranks
    }

    pub fn entry(&self, i: usize) -> Result<Arc<Conditional>> {
        let cell = self
            .cache
            .get(i)
            .ok_or_else(|| invalid("context", format!("context {i} outside 0..{}", self.cache.len())))?;
        if let Some(c) = cell.get() {
            return Ok(c.clone());
        }
        let built = match &self.source {
            Source::PowerLaw { shared: Some(c), .. } => c.clone(),
            Source::PowerLaw { law, shared: None } => {
                let PermutationMode::SeededRandom { seed } = law.permutation else {
                    unreachable!("identity families always carry the shared conditional")
                };
                let ranks = Self::permutation_ranks(seed, i, self.vocab);
                Arc::new(Conditional::new(Self::ranked_pmf(law, self.vocab, Some(&ranks))?)?)
            }
            Source::Explicit => unreachable!("explicit families are fully materialized"),
        };
        Ok(cell.get_or_init(|| built).clone())
    }

    /// `p(·|i)`.
    pub fn conditional_pmf(&self, i: usize) -> Result<Categorical> {
        Ok(self.entry(i)?.dist.clone())
    }

    pub fn marginal(&self) -> &Categorical {
        &self.marginal
    }

    pub fn contexts(&self) -> usize {
        self.marginal.support_size()
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn law(&self) -> Option<&PowerLawConditionals> {
        match &self.source {
            Source::PowerLaw { law, .. } => Some(law),
            Source::Explicit => None,
        }
    }
}

pub fn conditional_pmf(family: &ConditionalFamily, i: usize) -> Result<Categorical> {
    family.conditional_pmf(i)
}

/// Context counts `n(i)` and sparse joint counts `n(i, j)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairCounts {
    context_counts: Vec<u64>,
    /// Per context, `(j, n(i, j))` sorted by `j`, zero counts omitted.
    joint: Vec<Vec<(usize, u64)>>,
    vocab: usize,
    total: u64,
}

fn merge_sorted(mut entries: Vec<(usize, u64)>) -> Vec<(usize, u64)> {
    entries.sort_unstable_by_key(|e| e.0);
    let mut out: Vec<(usize, u64)> = Vec::with_capacity(entries.len());
    for (j, c) in entries {
        match out.last_mut() {
            Some(last) if last.0 == j => last.1 += c,
            _ => out.push((j, c)),
        }
    }
    out
}

impl PairCounts {
    pub fn empty(contexts: usize, vocab: usize) -> Self {
        Self {
            context_counts: vec![0; contexts],
            joint: vec![Vec::new(); contexts],
            vocab,
            total: 0,
        }
    }

    /// Build from `(i, j)` observations.
    pub fn from_pairs(contexts: usize, vocab: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut raw: Vec<Vec<(usize, u64)>> = vec![Vec::new(); contexts];
        for (i, j) in pairs {
            if i >= contexts || j >= vocab {
                return Err(invalid("pair", format!("({i}, {j}) outside {contexts} x {vocab}")));
            }
            raw[i].push((j, 1));
        }
        let joint: Vec<Vec<(usize, u64)>> = raw.into_iter().map(merge_sorted).collect();
        let context_counts: Vec<u64> = joint.iter().map(|r| r.iter().map(|e| e.1).sum()).collect();
        let total = context_counts.iter().sum();
        Ok(Self {
            context_counts,
            joint,
            vocab,
            total,
        })
    }

    pub fn context_counts(&self) -> &[u64] {
        &self.context_counts
    }

    pub fn row(&self, i: usize) -> &[(usize, u64)] {
        &self.joint[i]
    }

    pub fn joint(&self, i: usize, j: usize) -> u64 {
        self.joint[i]
            .binary_search_by_key(&j, |e| e.0)
            .map_or(0, |pos| self.joint[i][pos].1)
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn contexts(&self) -> usize {
        self.context_counts.len()
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }
}

/// `T` pairs: `i` from the marginal, then `j ~ p(·|i)`.
pub fn sample_pairs(family: &ConditionalFamily, t: u64, rng: &mut RngStream) -> Result<PairCounts> {
    let mut context_counts = vec![0u64; family.contexts()];
    family.marginal_sampler.accumulate(t, rng, |i, c| context_counts[i] += c);
    let mut joint = vec![Vec::new(); family.contexts()];
    for (i, &n) in context_counts.iter().enumerate() {
        if n == 0 {
            continue;
        }
        let cond = family.entry(i)?;
        let mut raw = Vec::new();
        cond.sampler.accumulate(n, rng, |j, c| raw.push((j, c)));
        joint[i] = merge_sorted(raw);
    }
    Ok(PairCounts {
        context_counts,
        joint,
        vocab: family.vocab(),
        total: t,
    })
}

/// Count-ratio estimates for seen contexts, plus an optional context marginal.
#[derive(Clone, Debug, PartialEq)]
pub struct BigramModel {
    marginal: Option<Categorical>,
    /// Sparse `(j, q(j|i))` sorted by `j`; `None` for unseen contexts.
    conditionals: Vec<Option<Vec<(usize, f64)>>>,
    vocab: usize,
}

impl BigramModel {
    /// `q(j|i) = n(i,j) / n(i)` and the fitted marginal `n(i) / T`.
    pub fn fit(counts: &PairCounts) -> Self {
        let conditionals = counts
            .joint
            .iter()
            .zip(&counts.context_counts)
            .map(|(row, &n)| (n > 0).then(|| row.iter().map(|&(j, c)| (j, c as f64 / n as f64)).collect()))
            .collect();
        let marginal = (counts.total > 0).then(|| {
            let t = counts.total as f64;
            Categorical::new(counts.context_counts.iter().map(|&n| n as f64 / t).collect())
                .expect("count ratios are a distribution")
        });
        Self {
            marginal,
            conditionals,
            vocab: counts.vocab,
        }
    }

    /// The model that knows the true family.
    pub fn from_family(family: &ConditionalFamily) -> Result<Self> {
        let conditionals = (0..family.contexts())
            .map(|i| {
                let c = family.entry(i)?;
                Ok(Some(
                    c.dist.probs().iter().enumerate().filter(|(_, &p)| p > 0.0).map(|(j, &p)| (j, p)).collect(),
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            marginal: Some(family.marginal.clone()),
            conditionals,
            vocab: family.vocab,
        })
    }

    /// Fit from sequences: transitions give the conditionals, first tokens the marginal.
    pub fn from_sequences(sequences: &[Vec<usize>], vocab: usize) -> Result<Self> {
        let pairs = sequences.iter().flat_map(|s| s.windows(2).map(|w| (w[0], w[1])));
        let mut model = Self::fit(&PairCounts::from_pairs(vocab, vocab, pairs)?);
        let mut first = vec![0u64; vocab];
        for s in sequences {
            if let Some(&tok) = s.first() {
                *first.get_mut(tok).ok_or_else(|| invalid("token", format!("{tok} outside vocabulary {vocab}")))? += 1;
            }
        }
        let n: u64 = first.iter().sum();
        model.marginal = (n > 0).then(|| Categorical::new(first.iter().map(|&c| c as f64 / n as f64).collect()).expect("ratios"));
        Ok(model)
    }

    pub fn is_seen(&self, i: usize) -> bool {
        self.conditionals.get(i).is_some_and(Option::is_some)
    }

    pub fn estimate(&self, i: usize) -> Option<&[(usize, f64)]> {
        self.conditionals.get(i)?.as_deref()
    }

    /// `q(j|i)`, or `None` when context `i` is unseen.
    pub fn q(&self, i: usize, j: usize) -> Option<f64> {
        let row = self.estimate(i)?;
        Some(row.binary_search_by_key(&j, |e| e.0).map_or(0.0, |pos| row[pos].1))
    }

    /// Dense `q(·|i)`.
    pub fn conditional(&self, i: usize) -> Option<Categorical> {
        let row = self.estimate(i)?;
        let mut probs = vec![0.0; self.vocab];
        for &(j, q) in row {
            probs[j] = q;
        }
        Categorical::new(probs).ok()
    }

    pub fn marginal(&self) -> Option<&Categorical> {
        self.marginal.as_ref()
    }

    pub fn contexts(&self) -> usize {
        self.conditionals.len()
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }
}

pub fn fit(counts: &PairCounts) -> BigramModel {
    BigramModel::fit(counts)
}

/// `Σ_j |a_j − b_j|`.
pub fn tv(a: &Categorical, b: &Categorical) -> Result<f64> {
    ensure_same_support(a.support_size(), b.support_size())?;
    Ok(stable_sum(a.probs().iter().zip(b.probs()).map(|(x, y)| (x - y).abs())))
}

/// TV between a sparse estimate and a dense truth:
/// `Σ_{j seen} (|q_j − p_j| − p_j) + Σ_j p_j`.
fn sparse_tv(estimate: &[(usize, f64)], truth: &Categorical) -> f64 {
    let p = truth.probs();
    1.0 + stable_sum(estimate.iter().map(|&(j, q)| (q - p[j]).abs() - p[j]))
}

/// How unseen contexts enter the aggregate error.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnseenPolicy {
    /// `TV := 2` for unseen contexts.
    #[default]
    Two,
    /// Drop unseen contexts and renormalize the marginal over the seen ones.
    SkipRenormalize,
}

/// `Σ_i p_i TV(q(·|i), p(·|i))` for a fitted model against the true family.
pub fn tv_error(model: &BigramModel, truth: &ConditionalFamily, policy: UnseenPolicy) -> Result<f64> {
    ensure_same_support(model.contexts(), truth.contexts())?;
    ensure_same_support(model.vocab(), truth.vocab())?;
    let mut terms = Vec::with_capacity(truth.contexts());
    let mut seen_mass = Vec::with_capacity(truth.contexts());
    for (i, &w) in truth.marginal.probs().iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        match model.estimate(i) {
            Some(row) => {
                terms.push(w * sparse_tv(row, truth.entry(i)?.dist()));
                seen_mass.push(w);
            }
            None => {
                if policy == UnseenPolicy::Two {
                    terms.push(2.0 * w);
                }
            }
        }
    }
    let total = stable_sum(terms);
    Ok(match policy {
        UnseenPolicy::Two => total,
        UnseenPolicy::SkipRenormalize => {
            let mass = stable_sum(seen_mass);
            if mass > 0.0 {
                total / mass
            } else {
                2.0
            }
        }
    })
}

const SALT_TV: u64 = 0x4249_4752_414d_0001;
const SALT_MARGINAL: u64 = 0x4249_4752_414d_0002;

/// Error of one training run on `t` pairs drawn from `train`, measured against `truth`.
pub fn simulate_tv(
    train: &ConditionalFamily,
    truth: &ConditionalFamily,
    t: u64,
    policy: UnseenPolicy,
    rng: &mut RngStream,
) -> Result<f64> {
    tv_error(&BigramModel::fit(&sample_pairs(train, t, rng)?), truth, policy)
}

/// Monte Carlo `E[Σ_i p_i TV(q_T(·|i), p(·|i))]`.
pub fn expected_tv_mc(
    family: &ConditionalFamily,
    t: u64,
    trials: usize,
    seed: u64,
    policy: UnseenPolicy,
    runner: &Runner,
) -> Result<TrialStats> {
    if trials < 2 {
        return Err(invalid("trials", "Monte Carlo needs at least 2 trials"));
    }
    Ok(runner.grid_stats(1, trials, |_, trial| {
        let mut rng = trial_stream(seed, SALT_TV ^ t, 0, trial);
        simulate_tv(family, family, t, policy, &mut rng)
    })?[0])
}

/// Expected TV error along a `T` grid, trained and tested on the same family.
pub fn expected_tv_curve(
    family: &ConditionalFamily,
    t_grid: &[u64],
    trials: usize,
    seed: u64,
    policy: UnseenPolicy,
    runner: &Runner,
) -> Result<ScalingCurve> {
    tv_curve("bigram_tv", family, family, t_grid, trials, seed, policy, runner)
}

/// Expected TV error of training on `train` and testing against `truth`.
#[allow(clippy::too_many_arguments)]
pub fn tv_curve(
    tag: &str,
    train: &ConditionalFamily,
    truth: &ConditionalFamily,
    t_grid: &[u64],
    trials: usize,
    seed: u64,
    policy: UnseenPolicy,
    runner: &Runner,
) -> Result<ScalingCurve> {
    if t_grid.is_empty() || t_grid[0] == 0 || t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("T grid", "grid must be non-empty, positive and strictly increasing"));
    }
    if trials < 2 {
        return Err(invalid("trials", "Monte Carlo needs at least 2 trials"));
    }
    // Warm the conditional cache once instead of racing inside the trials.
    for i in 0..train.contexts() {
        train.entry(i)?;
        truth.entry(i)?;
    }
    let stats = runner.grid_stats(t_grid.len(), trials, |point, trial| {
        let mut rng = trial_stream(seed, SALT_TV, point, trial);
        simulate_tv(train, truth, t_grid[point], policy, &mut rng)
    })?;
    let mut curve = ScalingCurve::new(tag)
        .with_param("contexts", truth.contexts() as f64)
        .with_param("vocab", truth.vocab() as f64);
    if let Some(law) = truth.law() {
        curve = curve.with_param("beta", law.beta);
    }
    if let Some(k) = train.law().and_then(|l| l.head_cut) {
        curve = curve.with_param("k", k as f64);
    }
    for (&t, s) in t_grid.iter().zip(&stats) {
        curve.push(t as f64, s.mean, s.stderr)?;
    }
    Ok(curve)
}

/// Default ceiling on `(N_ctx · V)^T` for exhaustive enumeration.
pub const ENUMERATION_BUDGET: f64 = 1e7;

/// Exact `E[Σ_i p_i TV(q_T(·|i), p(·|i))]` by enumerating every dataset of size `T`
/// (as count compositions over the `(i, j)` cells, weighted by their multinomial
/// probability). Unseen contexts score 2.
pub fn expected_tv_bruteforce(family: &ConditionalFamily, t: u64) -> Result<f64> {
    let cells_total = (family.contexts() * family.vocab()) as f64;
    let combinations = cells_total.powf(t as f64);
    if combinations > ENUMERATION_BUDGET {
        return Err(Error::EnumerationBudget {
            combinations,
            budget: ENUMERATION_BUDGET,
        });
    }
    let mut cells = Vec::new();
    for i in 0..family.contexts() {
        let w = family.marginal.get(i);
        let cond = family.entry(i)?;
        for (j, &p) in cond.dist.probs().iter().enumerate() {
            if w * p > 0.0 {
                cells.push((i, j, w * p));
            }
        }
    }
    let truth: Vec<Arc<Conditional>> = (0..family.contexts()).map(|i| family.entry(i)).collect::<Result<_>>()?;
    let ln_fact: Vec<f64> = (0..=t).scan(0.0, |acc, n| {
        if n > 0 {
            *acc += (n as f64).ln();
        }
        Some(*acc)
    }).collect();

    struct Walk<'a> {
        cells: &'a [(usize, usize, f64)],
        family: &'a ConditionalFamily,
        truth: &'a [Arc<Conditional>],
        ln_fact: &'a [f64],
        counts: Vec<u64>,
        terms: Vec<f64>,
        t: u64,
    }

    impl Walk<'_> {
        fn leaf(&mut self) {
            let mut ln_prob = self.ln_fact[self.t as usize];
            for (c, &(_, _, p)) in self.counts.iter().zip(self.cells) {
                ln_prob += *c as f64 * p.ln() - self.ln_fact[*c as usize];
            }
            let prob = ln_prob.exp();
            let contexts = self.family.contexts();
            let mut n_ctx = vec![0u64; contexts];
            for (c, &(i, _, _)) in self.counts.iter().zip(self.cells) {
                n_ctx[i] += c;
            }
            let mut err = 0.0;
            for i in 0..contexts {
                let w = self.family.marginal.get(i);
                if w == 0.0 {
                    continue;
                }
                if n_ctx[i] == 0 {
                    err += 2.0 * w;
                    continue;
                }
                let row: Vec<(usize, f64)> = self
                    .counts
                    .iter()
                    .zip(self.cells)
                    .filter(|(&c, &(ci, _, _))| ci == i && c > 0)
                    .map(|(&c, &(_, j, _))| (j, c as f64 / n_ctx[i] as f64))
                    .collect();
                err += w * sparse_tv(&row, self.truth[i].dist());
            }
            self.terms.push(prob * err);
        }

        fn go(&mut self, cell: usize, left: u64) {
            if cell + 1 == self.cells.len() {
                self.counts[cell] = left;
                self.leaf();
                self.counts[cell] = 0;
                return;
            }
            for c in 0..=left {
                self.counts[cell] = c;
                self.go(cell + 1, left - c);
            }
            self.counts[cell] = 0;
        }
    }

    if t == 0 {
        return Ok(2.0 * stable_sum(family.marginal.probs().iter().copied()));
    }
    let mut walk = Walk {
        cells: &cells,
        family,
        truth: &truth,
        ln_fact: &ln_fact,
        counts: vec![0; cells.len()],
        terms: Vec::new(),
        t,
    };
    walk.go(0, t);
    Ok(stable_sum(walk.terms))
}

/// `a = Σ_{p(j|i) ≤ 1/n} p(j|i)` and `b = n^{-1/2} Σ_{p(j|i) ≥ 1/n} √p(j|i)`; atoms at
/// exactly `1/n` count in both.
pub fn berend_conditional_terms(family: &ConditionalFamily, i: usize, n: u64) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(invalid("n", "count must be at least 1"));
    }
    let cond = family.entry(i)?;
    let threshold = 1.0 / n as f64;
    let probs = cond.dist.probs();
    let a = stable_sum(probs.iter().copied().filter(|&p| p <= threshold));
    let b = stable_sum(probs.iter().filter(|&&p| p > 0.0 && p >= threshold).map(|p| p.sqrt()));
    Ok((a, b / (n as f64).sqrt()))
}

/// `count` sequences of `length` tokens: the first from the marginal, the rest from the
/// conditionals of the previous token after `transforms`.
pub fn sample_sequences(
    family: &ConditionalFamily,
    count: usize,
    length: usize,
    rng: &mut RngStream,
    transforms: &[TailTransform],
) -> Result<Vec<Vec<usize>>> {
    if length == 0 {
        return Err(invalid("length", "sequences need at least one token"));
    }
    if family.contexts() != family.vocab() {
        return Err(invalid(
            "V",
            format!("sequence mode needs N_ctx = V, got {} and {}", family.contexts(), family.vocab()),
        ));
    }
    for t in transforms {
        t.validate()?;
    }
    let mut samplers: HashMap<usize, Arc<Conditional>> = HashMap::new();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut seq = Vec::with_capacity(length);
        let mut tok = family.marginal_sampler.draw(rng);
        seq.push(tok);
        for _ in 1..length {
            let cond = match samplers.get(&tok) {
                Some(c) => c.clone(),
                None => {
                    let base = family.entry(tok)?;
                    let c = if transforms.is_empty() {
                        base
                    } else {
                        Arc::new(Conditional::new(apply_transforms(base.dist(), transforms)?)?)
                    };
                    samplers.insert(tok, c.clone());
                    c
                }
            };
            tok = cond.sampler.draw(rng);
            seq.push(tok);
        }
        out.push(seq);
    }
    Ok(out)
}

/// Default floor for unseen transitions.
pub const PERPLEXITY_FLOOR: f64 = 1e-8;

/// `exp(mean −ln max(q, floor))` over every token: first tokens against the model's
/// marginal, later ones against `q(next | current)`.
pub fn perplexity(model: &BigramModel, sequences: &[Vec<usize>], floor: f64) -> Result<f64> {
    if !(floor > 0.0 && floor <= 1.0) {
        return Err(invalid("floor", format!("smoothing floor must lie in (0, 1], got {floor}")));
    }
    let mut nll = Vec::new();
    for seq in sequences {
        if let Some(&first) = seq.first() {
            let q = model.marginal().map_or(0.0, |m| if first < m.support_size() { m.get(first) } else { 0.0 });
            nll.push(-q.max(floor).ln());
        }
        for w in seq.windows(2) {
            let q = model.q(w[0], w[1]).unwrap_or(0.0);
            nll.push(-q.max(floor).ln());
        }
    }
    if nll.is_empty() {
        return Err(Error::Empty("sequences"));
    }
    let n = nll.len() as f64;
    Ok((stable_sum(nll) / n).exp())
}

/// `E[TV(p̂_T, p)]` of the empirical distribution of `T` draws, along a grid.
pub fn marginal_tv_curve(p: &Categorical, t_grid: &[u64], trials: usize, seed: u64, runner: &Runner) -> Result<ScalingCurve> {
    if t_grid.is_empty() || t_grid[0] == 0 || t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("T grid", "grid must be non-empty, positive and strictly increasing"));
    }
    if trials < 2 {
        return Err(invalid("trials", "Monte Carlo needs at least 2 trials"));
    }
    let sampler = Sampler::new(p)?;
    let stats = runner.grid_stats(t_grid.len(), trials, |point, trial| {
        let t = t_grid[point];
        let mut rng = trial_stream(seed, SALT_MARGINAL, point, trial);
        let mut raw = Vec::new();
        sampler.accumulate(t, &mut rng, |i, c| raw.push((i, c)));
        let row: Vec<(usize, f64)> = merge_sorted(raw).into_iter().map(|(i, c)| (i, c as f64 / t as f64)).collect();
        Ok(sparse_tv(&row, p))
    })?;
    let mut curve = ScalingCurve::new("bigram_marginal_tv").with_param("support", p.support_size() as f64);
    for (&t, s) in t_grid.iter().zip(&stats) {
        curve.push(t as f64, s.mean, s.stderr)?;
    }
    Ok(curve)
}
