//! Power laws, AI-generation distortions of their tails, and reproducible sampling.
//!
//! Outcomes are ranks. Rank `r` (1-based, as in `p_r ∝ r^{-β}`) lives at index `r - 1`
//! of every probability or count vector. Cutoffs such as `k` are counts of kept ranks,
//! so `truncate_tail(p, k)` keeps indices `0..k`.

use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::{Binomial, Distribution};

use crate::error::{ensure_same_support, invalid, Error, Result};
use crate::rng::RngStream;

/// Tolerance on `Σ p = 1` for every distribution in the crate.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// Slack used when comparing a cumulative sum against a top-p threshold.
const TOP_P_SLACK: f64 = 1e-12;

/// Compensated (Neumaier) summation.
pub fn stable_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// A normalized finite discrete distribution over outcomes `0..support_size`.
#[derive(Clone, Debug, PartialEq)]
pub struct Categorical {
    probs: Vec<f64>,
}

impl Categorical {
    /// Validates non-negativity and normalization.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Empty("probability vector"));
        }
        if let Some(bad) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::NotNormalized(format!("entry {bad} is negative or non-finite")));
        }
        let total = stable_sum(probs.iter().copied());
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::NotNormalized(format!("entries sum to {total}")));
        }
        Ok(Self { probs })
    }

    /// Normalizes arbitrary non-negative weights.
    pub fn from_weights(mut weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Empty("weight vector"));
        }
        if let Some(bad) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::NotNormalized(format!("weight {bad} is negative or non-finite")));
        }
        let total = stable_sum(weights.iter().copied());
        if total <= 0.0 {
            return Err(Error::MassDestroyed("all weights are zero".into()));
        }
        weights.iter_mut().for_each(|w| *w /= total);
        Ok(Self { probs: weights })
    }

    pub fn point_mass(support_size: usize, outcome: usize) -> Result<Self> {
        if outcome >= support_size {
            return Err(invalid("outcome", format!("{outcome} outside support of size {support_size}")));
        }
        let mut probs = vec![0.0; support_size];
        probs[outcome] = 1.0;
        Ok(Self { probs })
    }

    pub fn uniform(support_size: usize) -> Result<Self> {
        if support_size == 0 {
            return Err(Error::Empty("uniform support"));
        }
        Ok(Self {
            probs: vec![1.0 / support_size as f64; support_size],
        })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn support_size(&self) -> usize {
        self.probs.len()
    }

    pub fn get(&self, outcome: usize) -> f64 {
        self.probs[outcome]
    }

    /// Number of outcomes with positive probability.
    pub fn positive_support(&self) -> usize {
        self.probs.iter().filter(|&&p| p > 0.0).count()
    }

    /// Largest index with positive probability.
    pub fn max_positive_index(&self) -> Option<usize> {
        self.probs.iter().rposition(|&p| p > 0.0)
    }

    /// Mass on indices `>= k`, i.e. on ranks beyond `k`.
    pub fn tail_mass(&self, k: usize) -> f64 {
        if k >= self.probs.len() {
            return 0.0;
        }
        stable_sum(self.probs[k..].iter().copied())
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        -stable_sum(self.probs.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()))
    }

    pub fn into_probs(self) -> Vec<f64> {
        self.probs
    }
}

/// Zipf exponent and the finite support standing in for the infinite one.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PowerLawSpec {
    pub beta: f64,
    pub support_size: usize,
}

impl PowerLawSpec {
    pub fn new(beta: f64, support_size: usize) -> Result<Self> {
        let spec = Self { beta, support_size };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta.is_finite() && self.beta > 1.0) {
            return Err(invalid("beta", format!("Zipf exponent must exceed 1, got {}", self.beta)));
        }
        if self.support_size < 1 {
            return Err(invalid("support_size", "must be at least 1"));
        }
        Ok(())
    }
}

/// `p_r ∝ r^{-exponent}` on ranks `1..=n`, for any finite exponent `>= 0`.
///
/// Unlike [`zipf_pmf`] this accepts exponents at or below 1, which appear as the
/// result of heating a Zipf law (`β / τ` with `τ > β`).
pub fn power_law(exponent: f64, n: usize) -> Result<Categorical> {
    if !(exponent.is_finite() && exponent >= 0.0) {
        return Err(invalid("exponent", format!("must be finite and >= 0, got {exponent}")));
    }
    if n == 0 {
        return Err(invalid("support_size", "must be at least 1"));
    }
    Categorical::from_weights((1..=n).map(|r| (r as f64).powf(-exponent)).collect())
}

pub fn zipf_pmf(spec: &PowerLawSpec) -> Result<Categorical> {
    spec.validate()?;
    power_law(spec.beta, spec.support_size)
}

/// AI-generation distortions of a distribution's tail.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TailTransform {
    /// Keep the first `k` ranks.
    Truncate { k: usize },
    /// Re-weight the surviving ranks as `r^{-beta_prime}`.
    Narrow { beta_prime: f64 },
    /// `p_r ∝ p_r^{1/tau}`.
    Temperature { tau: f64 },
    /// Nucleus: shortest most-probable prefix with cumulative mass `>= mass`.
    TopP { mass: f64 },
}

impl TailTransform {
    pub fn validate(&self) -> Result<()> {
        match *self {
            TailTransform::Truncate { k: 0 } => Err(invalid("k", "cutoff must be positive")),
            TailTransform::Narrow { beta_prime } if !(beta_prime.is_finite() && beta_prime > 1.0) => {
                Err(invalid("beta_prime", format!("must exceed 1, got {beta_prime}")))
            }
            TailTransform::Temperature { tau } if !(tau.is_finite() && tau > 0.0) => {
                Err(invalid("tau", format!("temperature must be positive, got {tau}")))
            }
            TailTransform::TopP { mass } if !(mass > 0.0 && mass <= 1.0) => {
                Err(invalid("mass", format!("top-p mass must lie in (0, 1], got {mass}")))
            }
            _ => Ok(()),
        }
    }

    pub fn apply(&self, dist: &Categorical) -> Result<Categorical> {
        self.validate()?;
        match *self {
            // A cutoff beyond the support is a no-op for generation-time truncation.
            TailTransform::Truncate { k } => truncate_tail(dist, k.min(dist.support_size())),
            TailTransform::Narrow { beta_prime } => narrow_tail(dist, beta_prime),
            TailTransform::Temperature { tau } => temperature_transform(dist, tau),
            TailTransform::TopP { mass } => top_p_transform(dist, mass),
        }
    }
}

/// Apply transforms left to right.
pub fn apply_transforms(dist: &Categorical, transforms: &[TailTransform]) -> Result<Categorical> {
    transforms
        .iter()
        .try_fold(dist.clone(), |acc, t| t.apply(&acc))
}

pub fn truncate_tail(dist: &Categorical, k: usize) -> Result<Categorical> {
    let n = dist.support_size();
    if k < 1 || k > n {
        return Err(invalid("k", format!("cutoff {k} outside 1..={n}")));
    }
    if k == n {
        return Ok(dist.clone());
    }
    let mut weights = dist.probs().to_vec();
    weights[k..].iter_mut().for_each(|w| *w = 0.0);
    Categorical::from_weights(weights).map_err(|_| Error::MassDestroyed(format!("no mass on the first {k} ranks")))
}

/// `r^{-β'}` on the support of `dist`.
pub fn narrow_tail(dist: &Categorical, beta_prime: f64) -> Result<Categorical> {
    let weights = dist
        .probs()
        .iter()
        .enumerate()
        .map(|(i, &p)| if p > 0.0 { ((i + 1) as f64).powf(-beta_prime) } else { 0.0 })
        .collect();
    Categorical::from_weights(weights)
}

pub fn temperature_transform(dist: &Categorical, tau: f64) -> Result<Categorical> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(invalid("tau", format!("temperature must be positive, got {tau}")));
    }
    if tau == 1.0 {
        return Ok(dist.clone());
    }
    let logits: Vec<f64> = dist
        .probs()
        .iter()
        .map(|&p| if p > 0.0 { p.ln() / tau } else { f64::NEG_INFINITY })
        .collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::MassDestroyed("distribution has no positive entry".into()));
    }
    Categorical::from_weights(logits.iter().map(|&z| (z - max).exp()).collect())
}

pub fn top_p_transform(dist: &Categorical, mass: f64) -> Result<Categorical> {
    if !(mass > 0.0 && mass <= 1.0) {
        return Err(invalid("mass", format!("top-p mass must lie in (0, 1], got {mass}")));
    }
    if mass == 1.0 {
        return Ok(dist.clone());
    }
    let probs = dist.probs();
    let mut order: Vec<usize> = (0..probs.len()).collect();
    // Stable sort keeps lower indices first among ties.
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]));
    let mut weights = vec![0.0; probs.len()];
    let mut cumulative = 0.0;
    for &i in &order {
        if probs[i] <= 0.0 {
            break;
        }
        weights[i] = probs[i];
        cumulative += probs[i];
        if cumulative >= mass - TOP_P_SLACK {
            break;
        }
    }
    Categorical::from_weights(weights)
}

/// Convex combination `Σ_m w_m · components[m]`.
pub fn mix(components: &[&Categorical], weights: &[f64]) -> Result<Categorical> {
    if components.is_empty() {
        return Err(Error::Empty("mixture components"));
    }
    if components.len() != weights.len() {
        return Err(invalid(
            "weights",
            format!("{} weights for {} components", weights.len(), components.len()),
        ));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(invalid("weights", "mixture weights must be non-negative"));
    }
    let total = stable_sum(weights.iter().copied());
    if (total - 1.0).abs() > NORMALIZATION_TOL {
        return Err(invalid("weights", format!("mixture weights sum to {total}, not 1")));
    }
    let n = components[0].support_size();
    for c in components {
        ensure_same_support(n, c.support_size())?;
    }
    let probs = (0..n)
        .map(|i| {
            components
                .iter()
                .zip(weights)
                .map(|(c, w)| w * c.get(i))
                .sum::<f64>()
        })
        .collect();
    Ok(Categorical { probs })
}

/// Zipf mass restricted to ranks `start..=N` (1-based `start`), renormalized.
pub fn acquired_tail(spec: &PowerLawSpec, start: usize) -> Result<Categorical> {
    spec.validate()?;
    let n = spec.support_size;
    if start < 1 || start > n {
        return Err(invalid("start", format!("tail start {start} outside 1..={n}")));
    }
    let weights = (1..=n)
        .map(|r| if r >= start { (r as f64).powf(-spec.beta) } else { 0.0 })
        .collect();
    Categorical::from_weights(weights)
}

/// Predicted tail cutoff induced by fitting on `t0` samples: `t0^{1/β}`.
pub fn effective_cutoff(t0: u64, beta: f64) -> Result<f64> {
    if t0 < 1 {
        return Err(invalid("t0", "sample size must be at least 1"));
    }
    if !(beta.is_finite() && beta > 1.0) {
        return Err(invalid("beta", format!("Zipf exponent must exceed 1, got {beta}")));
    }
    Ok((t0 as f64).powf(1.0 / beta))
}

/// Outcome counts of a multinomial sample.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SampleCounts {
    counts: Vec<u64>,
    total: u64,
}

impl SampleCounts {
    pub fn new(counts: Vec<u64>) -> Self {
        let total = counts.iter().sum();
        Self { counts, total }
    }

    pub fn zeros(support_size: usize) -> Self {
        Self::new(vec![0; support_size])
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn support_size(&self) -> usize {
        self.counts.len()
    }

    /// Pool two samples over the same support.
    pub fn pooled(&self, other: &SampleCounts) -> Result<SampleCounts> {
        ensure_same_support(self.support_size(), other.support_size())?;
        Ok(Self::new(
            self.counts.iter().zip(&other.counts).map(|(a, b)| a + b).collect(),
        ))
    }

    /// Empirical frequencies `n_i / T`.
    pub fn empirical(&self) -> Result<Categorical> {
        if self.total == 0 {
            return Err(Error::Empty("sample (T = 0)"));
        }
        let t = self.total as f64;
        Ok(Categorical {
            probs: self.counts.iter().map(|&c| c as f64 / t).collect(),
        })
    }
}

/// Reusable sampler for one distribution.
///
/// Single draws use an alias table (O(1) per draw). Aggregate counts switch to
/// sequential conditional binomials once `T` dwarfs the support, which costs
/// O(support) instead of O(T) and is still an exact multinomial draw.
#[derive(Clone, Debug)]
pub struct Sampler {
    alias: WeightedAliasIndex<f64>,
    support_size: usize,
    /// Positive-probability outcomes with the mass remaining from each onward.
    positive: Vec<(usize, f64, f64)>,
}

/// Counts switch to the binomial path when `T > BINOMIAL_FACTOR * positive support`.
const BINOMIAL_FACTOR: u64 = 16;

impl Sampler {
    pub fn new(dist: &Categorical) -> Result<Self> {
        let alias = WeightedAliasIndex::new(dist.probs().to_vec())
            .map_err(|e| Error::NotNormalized(format!("alias table: {e}")))?;
        let mut positive: Vec<(usize, f64, f64)> = dist
            .probs()
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(i, &p)| (i, p, 0.0))
            .collect();
        let mut remaining = 0.0;
        let mut comp = 0.0;
        for entry in positive.iter_mut().rev() {
            // Neumaier running suffix sum.
            let t = remaining + entry.1;
            if remaining >= entry.1 {
                comp += (remaining - t) + entry.1;
            } else {
                comp += (entry.1 - t) + remaining;
            }
            remaining = t;
            entry.2 = remaining + comp;
        }
        Ok(Self {
            alias,
            support_size: dist.support_size(),
            positive,
        })
    }

    pub fn support_size(&self) -> usize {
        self.support_size
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.alias.sample(rng)
    }

    /// Multinomial counts of `t` draws.
    pub fn counts<R: Rng + ?Sized>(&self, t: u64, rng: &mut R) -> SampleCounts {
        let mut counts = vec![0u64; self.support_size];
        self.accumulate(t, rng, |i, c| counts[i] += c);
        SampleCounts::new(counts)
    }

    /// Feeds `(outcome, count)` pairs of a `t`-draw multinomial sample to `sink`.
    pub fn accumulate<R: Rng + ?Sized>(&self, t: u64, rng: &mut R, mut sink: impl FnMut(usize, u64)) {
        if t == 0 {
            return;
        }
        if t > BINOMIAL_FACTOR * self.positive.len() as u64 {
            let mut left = t;
            let last = self.positive.len() - 1;
            for (pos, &(i, p, remaining)) in self.positive.iter().enumerate() {
                if left == 0 {
                    break;
                }
                let c = if pos == last {
                    left
                } else {
                    let ratio = (p / remaining).clamp(0.0, 1.0);
                    Binomial::new(left, ratio).map(|b| b.sample(rng)).unwrap_or(0)
                };
                if c > 0 {
                    sink(i, c);
                    left -= c;
                }
            }
        } else {
            for _ in 0..t {
                sink(self.draw(rng), 1);
            }
        }
    }
}

/// Multinomial `(T, dist)` counts drawn from `stream`.
pub fn sample_counts(dist: &Categorical, t: u64, stream: &mut RngStream) -> Result<SampleCounts> {
    Ok(Sampler::new(dist)?.counts(t, stream))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn assert_probs(dist: &Categorical, expected: &[f64], tol: f64) {
        assert_eq!(dist.support_size(), expected.len());
        for (a, b) in dist.probs().iter().zip(expected) {
            assert_abs_diff_eq!(*a, *b, epsilon = tol);
        }
    }

    fn zipf(beta: f64, n: usize) -> Categorical {
        zipf_pmf(&PowerLawSpec::new(beta, n).unwrap()).unwrap()
    }

    #[test]
    fn zipf_small_supports() {
        assert_probs(&zipf(2.0, 3), &[36.0 / 49.0, 9.0 / 49.0, 4.0 / 49.0], 1e-15);
        assert_probs(&zipf(2.0, 2), &[0.8, 0.2], 1e-15);
        assert_probs(&zipf(3.7, 1), &[1.0], 0.0);
    }

    #[test]
    fn zipf_rejects_bad_spec() {
        assert!(PowerLawSpec::new(1.0, 10).is_err());
        assert!(PowerLawSpec::new(0.5, 10).is_err());
        assert!(PowerLawSpec::new(2.0, 0).is_err());
        assert!(zipf_pmf(&PowerLawSpec { beta: 1.0, support_size: 3 }).is_err());
    }

    #[test]
    fn truncation_examples() {
        let p = zipf(2.0, 3);
        assert_probs(&truncate_tail(&p, 2).unwrap(), &[0.8, 0.2, 0.0], 1e-15);
        assert_eq!(truncate_tail(&p, 3).unwrap(), p);
        assert_probs(&truncate_tail(&p, 1).unwrap(), &[1.0, 0.0, 0.0], 0.0);
        assert!(truncate_tail(&p, 0).is_err());
        assert!(truncate_tail(&p, 4).is_err());
    }

    #[test]
    fn temperature_examples() {
        let p = zipf(2.0, 2);
        assert_eq!(temperature_transform(&p, 1.0).unwrap(), p);
        assert_probs(&temperature_transform(&p, 2.0).unwrap(), &[2.0 / 3.0, 1.0 / 3.0], 1e-15);
        assert_probs(&temperature_transform(&p, 2.0).unwrap(), power_law(1.0, 2).unwrap().probs(), 1e-15);
        let cold = temperature_transform(&Categorical::new(vec![0.2, 0.5, 0.3]).unwrap(), 1e-6).unwrap();
        assert_probs(&cold, &[0.0, 1.0, 0.0], 1e-12);
        assert!(temperature_transform(&p, 0.0).is_err());
        assert!(temperature_transform(&p, -1.0).is_err());
    }

    #[test]
    fn temperature_keeps_zeros() {
        let p = Categorical::new(vec![0.5, 0.0, 0.5]).unwrap();
        let hot = temperature_transform(&p, 3.0).unwrap();
        assert_eq!(hot.get(1), 0.0);
    }

    #[test]
    fn top_p_examples() {
        let p = Categorical::new(vec![0.6, 0.3, 0.1]).unwrap();
        assert_probs(&top_p_transform(&p, 0.8).unwrap(), &[2.0 / 3.0, 1.0 / 3.0, 0.0], 1e-15);
        assert_eq!(top_p_transform(&p, 1.0).unwrap(), p);
        assert_probs(&top_p_transform(&p, 0.5).unwrap(), &[1.0, 0.0, 0.0], 0.0);
        // Cumulative 0.6 + 0.3 hits 0.9 exactly up to rounding.
        assert_probs(&top_p_transform(&p, 0.9).unwrap(), &[2.0 / 3.0, 1.0 / 3.0, 0.0], 1e-15);
        assert!(top_p_transform(&p, 0.0).is_err());
        assert!(top_p_transform(&p, 1.5).is_err());
    }

    #[test]
    fn top_p_ties_prefer_lower_index() {
        let p = Categorical::new(vec![0.25, 0.25, 0.25, 0.25]).unwrap();
        assert_probs(&top_p_transform(&p, 0.3).unwrap(), &[0.5, 0.5, 0.0, 0.0], 1e-15);
    }

    #[test]
    fn mixture_examples() {
        let p = zipf(2.0, 3);
        assert_probs(&mix(&[&p, &p], &[0.5, 0.5]).unwrap(), p.probs(), 1e-15);
        let a = Categorical::point_mass(2, 0).unwrap();
        let b = Categorical::point_mass(2, 1).unwrap();
        assert_probs(&mix(&[&a, &b], &[0.25, 0.75]).unwrap(), &[0.25, 0.75], 0.0);
        let cut = truncate_tail(&p, 2).unwrap();
        assert_probs(
            &mix(&[&p, &cut], &[0.5, 0.5]).unwrap(),
            &[0.767_346_938_775_510_2, 0.191_836_734_693_877_56, 0.040_816_326_530_612_24],
            1e-12,
        );
    }

    #[test]
    fn mixture_rejects_bad_inputs() {
        let p = zipf(2.0, 3);
        let q = zipf(2.0, 4);
        assert!(matches!(mix(&[&p, &q], &[0.5, 0.5]), Err(Error::SupportMismatch { .. })));
        assert!(mix(&[&p, &p], &[0.5, 0.6]).is_err());
        assert!(mix(&[&p, &p], &[1.5, -0.5]).is_err());
        assert!(mix(&[&p], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn acquired_tail_examples() {
        let spec = PowerLawSpec::new(2.0, 3).unwrap();
        assert_probs(&acquired_tail(&spec, 1).unwrap(), zipf(2.0, 3).probs(), 1e-15);
        assert_probs(&acquired_tail(&spec, 3).unwrap(), &[0.0, 0.0, 1.0], 0.0);
        assert_probs(&acquired_tail(&spec, 2).unwrap(), &[0.0, 9.0 / 13.0, 4.0 / 13.0], 1e-15);
        assert!(acquired_tail(&spec, 0).is_err());
        assert!(acquired_tail(&spec, 4).is_err());
    }

    #[test]
    fn cutoff_examples() {
        assert_abs_diff_eq!(effective_cutoff(1_000_000, 2.0).unwrap(), 1000.0, epsilon = 1e-9);
        assert_eq!(effective_cutoff(1, 1.7).unwrap(), 1.0);
        assert_abs_diff_eq!(effective_cutoff(32, 5.0).unwrap(), 2.0, epsilon = 1e-12);
        assert!(effective_cutoff(0, 2.0).is_err());
    }

    #[test]
    fn degenerate_sampler() {
        let p = Categorical::point_mass(3, 0).unwrap();
        let mut s = RngStream::new(1, 0);
        assert_eq!(sample_counts(&p, 10, &mut s).unwrap().counts(), &[10, 0, 0]);
        // Binomial path as well.
        assert_eq!(sample_counts(&p, 10_000, &mut s).unwrap().counts(), &[10_000, 0, 0]);
    }

    #[test]
    fn fair_coin_concentrates() {
        let p = Categorical::uniform(2).unwrap();
        let mut s = RngStream::new(99, 5);
        let c = sample_counts(&p, 1_000_000, &mut s).unwrap();
        let f = c.counts()[0] as f64 / 1e6;
        assert!((0.498..=0.502).contains(&f), "frequency {f}");
    }

    #[test]
    fn both_sampling_paths_match_frequencies() {
        // R runs of T draws; mean frequency within 4 sqrt(p / (T R)).
        let p = zipf(1.5, 20);
        for &t in &[50u64, 5_000] {
            let runs = 200;
            let mut freq = vec![0.0; 20];
            for r in 0..runs {
                let c = sample_counts(&p, t, &mut RngStream::new(3, r)).unwrap();
                assert_eq!(c.total(), t);
                for (f, &n) in freq.iter_mut().zip(c.counts()) {
                    *f += n as f64 / (t as f64 * runs as f64);
                }
            }
            for (i, &f) in freq.iter().enumerate() {
                let bound = 4.0 * (p.get(i) / (t as f64 * runs as f64)).sqrt();
                assert!((f - p.get(i)).abs() <= bound, "T={t} i={i} f={f} p={}", p.get(i));
            }
        }
    }

    #[test]
    fn empirical_and_pooling() {
        let a = SampleCounts::new(vec![3, 0, 1]);
        let b = SampleCounts::new(vec![1, 1, 0]);
        let pooled = a.pooled(&b).unwrap();
        assert_eq!(pooled.counts(), &[4, 1, 1]);
        assert_eq!(pooled.total(), 6);
        assert_probs(&a.empirical().unwrap(), &[0.75, 0.0, 0.25], 0.0);
        assert!(SampleCounts::zeros(3).empirical().is_err());
    }

    #[test]
    fn transforms_validate() {
        assert!(TailTransform::Truncate { k: 0 }.validate().is_err());
        assert!(TailTransform::Narrow { beta_prime: 1.0 }.validate().is_err());
        assert!(TailTransform::Temperature { tau: 0.0 }.validate().is_err());
        assert!(TailTransform::TopP { mass: 0.0 }.validate().is_err());
        let p = zipf(2.0, 5);
        let narrowed = TailTransform::Narrow { beta_prime: 3.0 }.apply(&p).unwrap();
        assert_probs(&narrowed, zipf(3.0, 5).probs(), 1e-15);
    }

    fn weights_strategy() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..10.0, 1..40).prop_filter("some mass", |w| w.iter().sum::<f64>() > 1e-3)
    }

    fn assert_valid(d: &Categorical) {
        assert!(d.probs().iter().all(|&p| p >= 0.0));
        assert!((stable_sum(d.probs().iter().copied()) - 1.0).abs() <= NORMALIZATION_TOL);
    }

    proptest! {
        #[test]
        fn outputs_are_distributions(w in weights_strategy(), tau in 0.05f64..20.0, mass in 0.01f64..=1.0, kfrac in 0.0f64..1.0) {
            let d = Categorical::from_weights(w).unwrap();
            assert_valid(&d);
            let k = 1 + ((d.support_size() - 1) as f64 * kfrac) as usize;
            if d.probs()[..k].iter().any(|&p| p > 0.0) {
                assert_valid(&truncate_tail(&d, k).unwrap());
            }
            assert_valid(&temperature_transform(&d, tau).unwrap());
            assert_valid(&top_p_transform(&d, mass).unwrap());
            assert_valid(&mix(&[&d, &d], &[0.3, 0.7]).unwrap());
        }

        #[test]
        fn truncation_preserves_ratios(w in weights_strategy(), kfrac in 0.0f64..1.0) {
            let d = Categorical::from_weights(w).unwrap();
            let k = 1 + ((d.support_size() - 1) as f64 * kfrac) as usize;
            prop_assume!(d.probs()[..k].iter().any(|&p| p > 0.0));
            let t = truncate_tail(&d, k).unwrap();
            for i in 0..k {
                for j in 0..k {
                    if d.get(j) > 1e-6 && t.get(j) > 0.0 {
                        let lhs = t.get(i) / t.get(j);
                        let rhs = d.get(i) / d.get(j);
                        prop_assert!((lhs - rhs).abs() <= 1e-9 * rhs.max(1.0));
                    }
                }
            }
            prop_assert!(t.probs()[k..].iter().all(|&p| p == 0.0));
        }

        #[test]
        fn heating_zipf_is_zipf(beta in 1.01f64..5.0, n in 1usize..400, tau in 0.1f64..10.0) {
            let hot = temperature_transform(&zipf(beta, n), tau).unwrap();
            let expect = power_law(beta / tau, n).unwrap();
            for (a, b) in hot.probs().iter().zip(expect.probs()) {
                prop_assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
            }
        }

        #[test]
        fn top_p_never_skips_a_likelier_outcome(w in weights_strategy(), mass in 0.01f64..=1.0) {
            let d = Categorical::from_weights(w).unwrap();
            let t = top_p_transform(&d, mass).unwrap();
            for i in 0..d.support_size() {
                for j in 0..d.support_size() {
                    if t.get(i) > 0.0 && t.get(j) == 0.0 {
                        prop_assert!(d.get(j) <= d.get(i));
                    }
                }
            }
        }

        #[test]
        fn top_p_full_mass_is_identity(w in weights_strategy()) {
            let d = Categorical::from_weights(w).unwrap();
            prop_assert_eq!(top_p_transform(&d, 1.0).unwrap(), d);
        }

        #[test]
        fn mix_is_linear(a in weights_strategy(), wt in 0.0f64..=1.0) {
            let a = Categorical::from_weights(a).unwrap();
            let b = Categorical::uniform(a.support_size()).unwrap();
            let m = mix(&[&a, &b], &[wt, 1.0 - wt]).unwrap();
            for i in 0..a.support_size() {
                prop_assert_eq!(m.get(i), wt * a.get(i) + (1.0 - wt) * b.get(i));
            }
        }

        #[test]
        fn sampling_conserves_and_repeats(w in weights_strategy(), t in 1u64..3000, seed in any::<u64>(), idx in any::<u64>()) {
            let d = Categorical::from_weights(w).unwrap();
            let a = sample_counts(&d, t, &mut RngStream::new(seed, idx)).unwrap();
            let b = sample_counts(&d, t, &mut RngStream::new(seed, idx)).unwrap();
            prop_assert_eq!(a.total(), t);
            prop_assert_eq!(&a, &b);
            for (i, &c) in a.counts().iter().enumerate() {
                if d.get(i) == 0.0 { prop_assert_eq!(c, 0); }
            }
        }
    }
}
