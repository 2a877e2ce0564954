//! Closed-form oracles for the Hutter learner and the asymptotic predictors they are
//! checked against.

mod gamma;
mod predict;

pub use gamma::{ln_gamma_difference, ln_upper_incomplete_gamma, upper_incomplete_gamma};
pub use predict::{predict, AsymptotePrediction, Theorem};

use crate::distributions::{stable_sum, Categorical};
use crate::error::{ensure_same_support, invalid, Result};

/// Exact expected test error of the memorizing learner,
/// `E(T) = Σ_i p_test[i] (1 - q_train[i])^T`, precomputed for repeated evaluation.
#[derive(Clone, Debug)]
pub struct HutterOracle {
    /// `(p_test[i], ln(1 - q_train[i]))` for outcomes with `p_test[i] > 0`.
    terms: Vec<(f64, f64)>,
}

impl HutterOracle {
    pub fn new(p_test: &Categorical, q_train: &Categorical) -> Result<Self> {
        ensure_same_support(p_test.support_size(), q_train.support_size())?;
        let terms = p_test
            .probs()
            .iter()
            .zip(q_train.probs())
            .filter(|(&p, _)| p > 0.0)
            .map(|(&p, &q)| (p, (-q).ln_1p()))
            .collect();
        Ok(Self { terms })
    }

    pub fn error(&self, t: u64) -> f64 {
        if t == 0 {
            return stable_sum(self.terms.iter().map(|&(p, _)| p));
        }
        let t = t as f64;
        stable_sum(self.terms.iter().map(|&(p, log_miss)| p * (t * log_miss).exp()))
    }
}

pub fn hutter_exact_error(p_test: &Categorical, q_train: &Categorical, t: u64) -> Result<f64> {
    Ok(HutterOracle::new(p_test, q_train)?.error(t))
}

/// Both sides of the incomplete-gamma approximation of a truncated Zipf sum, in logs.
///
/// `ln_lhs = ln(T^c Σ_{i≤k} i^{-β} e^{-T i^{-β}})` with unnormalized weights `i^{-β}`
/// and `ln_rhs = ln(Γ(c, T k^{-β}) − Γ(c, T))`, `c = 1 − 1/β`. Either side may underflow
/// `f64` for `T ≫ k^β`; their logs stay finite.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GammaSides {
    pub ln_lhs: f64,
    pub ln_rhs: f64,
}

impl GammaSides {
    pub fn lhs(&self) -> f64 {
        self.ln_lhs.exp()
    }

    pub fn rhs(&self) -> f64 {
        self.ln_rhs.exp()
    }

    pub fn ratio(&self) -> f64 {
        (self.ln_lhs - self.ln_rhs).exp()
    }
}

pub fn lemma_gamma_sides(beta: f64, k: u64, t: u64) -> Result<GammaSides> {
    if !(beta.is_finite() && beta > 1.0) {
        return Err(invalid("beta", format!("Zipf exponent must exceed 1, got {beta}")));
    }
    if k < 1 {
        return Err(invalid("k", "cutoff must be at least 1"));
    }
    if t < 1 {
        return Err(invalid("T", "sample size must be at least 1"));
    }
    let c = 1.0 - 1.0 / beta;
    let tf = t as f64;
    let log_terms: Vec<f64> = (1..=k)
        .map(|i| {
            let w = (i as f64).powf(-beta);
            w.ln() - tf * w
        })
        .collect();
    let max = log_terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ln_sum = max + stable_sum(log_terms.iter().map(|&l| (l - max).exp())).ln();
    let ln_lhs = c * tf.ln() + ln_sum;
    let lo = tf * (k as f64).powf(-beta);
    let ln_rhs = if k == 1 {
        f64::NEG_INFINITY
    } else {
        ln_gamma_difference(c, lo, tf)?
    };
    Ok(GammaSides { ln_lhs, ln_rhs })
}

/// `a_T = Σ_{p_i < 1/T} p_i` and `b_T = T^{-1/2} Σ_{p_i ≥ 1/T} √p_i`.
pub fn berend_marginal_terms(dist: &Categorical, t: u64) -> Result<(f64, f64)> {
    if t < 1 {
        return Err(invalid("T", "sample size must be at least 1"));
    }
    let threshold = 1.0 / t as f64;
    let a = stable_sum(dist.probs().iter().copied().filter(|&p| p < threshold));
    let b = stable_sum(dist.probs().iter().filter(|&&p| p >= threshold).map(|p| p.sqrt()));
    Ok((a, b / (t as f64).sqrt()))
}

/// `dE/dπ = −T Σ_{i>k} p_i² (1 − π p_i)^{T−1}`.
///
/// This differentiates the clean-fraction error model in which the head `i ≤ k` is
/// sampled at its clean rate `p_i` and the tail at `π p_i`. The exact mixture
/// `π p + (1−π) truncate(p, k)` also up-weights the head by `1/P_k`, which adds a
/// non-negative head term that vanishes once the head is learned (`T ≫ k^β`).
pub fn mixture_error_derivative(p: &Categorical, k: usize, pi: f64, t: u64) -> Result<f64> {
    if !(0.0..=1.0).contains(&pi) {
        return Err(invalid("pi", format!("clean fraction must lie in [0, 1], got {pi}")));
    }
    if k < 1 || k > p.support_size() {
        return Err(invalid("k", format!("cutoff {k} outside 1..={}", p.support_size())));
    }
    if t < 1 {
        return Err(invalid("T", "sample size must be at least 1"));
    }
    let exponent = (t - 1) as f64;
    let sum = stable_sum(
        p.probs()[k..]
            .iter()
            .map(|&pi_i| pi_i * pi_i * (exponent * (-pi * pi_i).ln_1p()).exp()),
    );
    Ok(-(t as f64) * sum)
}
