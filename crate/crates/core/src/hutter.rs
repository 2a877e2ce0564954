//! The memorizing learner: store every observed context, abstain on the rest.
//!
//! Labels are deterministic, so the error of a trained model is simply the test mass of
//! the contexts it never saw.

use serde::{Deserialize, Serialize};

use crate::analytic::HutterOracle;
use crate::distributions::{
    acquired_tail, mix, narrow_tail, stable_sum, truncate_tail, zipf_pmf, Categorical, PowerLawSpec,
    SampleCounts, Sampler,
};
use crate::error::{ensure_same_support, invalid, Result};
use crate::fitting::ScalingCurve;
use crate::trials::{trial_stream, Runner, TrialStats};

/// Set of contexts observed during training.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HutterModel {
    seen: Vec<bool>,
}

impl HutterModel {
    pub fn train(counts: &SampleCounts) -> Self {
        Self {
            seen: counts.counts().iter().map(|&c| c > 0).collect(),
        }
    }

    pub fn from_seen(seen: Vec<bool>) -> Self {
        Self { seen }
    }

    pub fn is_seen(&self, i: usize) -> bool {
        self.seen.get(i).copied().unwrap_or(false)
    }

    pub fn seen_count(&self) -> usize {
        self.seen.iter().filter(|&&s| s).count()
    }

    pub fn support_size(&self) -> usize {
        self.seen.len()
    }

    /// Test mass of the unseen contexts.
    pub fn error(&self, p_test: &Categorical) -> Result<f64> {
        ensure_same_support(self.seen.len(), p_test.support_size())?;
        Ok(stable_sum(
            p_test.probs().iter().zip(&self.seen).filter(|(_, &s)| !s).map(|(&p, _)| p),
        ))
    }
}

pub fn train(counts: &SampleCounts) -> HutterModel {
    HutterModel::train(counts)
}

pub fn error_of_model(model: &HutterModel, p_test: &Categorical) -> Result<f64> {
    model.error(p_test)
}

/// Error of one simulated training run: draw `t` samples from `sampler`, memorize, test.
fn simulate_once(sampler: &Sampler, p_test: &Categorical, t: u64, rng: &mut crate::rng::RngStream) -> f64 {
    let mut seen = vec![false; p_test.support_size()];
    sampler.accumulate(t, rng, |i, _| seen[i] = true);
    stable_sum(p_test.probs().iter().zip(&seen).filter(|(_, &s)| !s).map(|(&p, _)| p))
}

const SALT_MC: u64 = 0x4855_5454_4552_0001;
const SALT_BUDGET: u64 = 0x4855_5454_4552_0002;

/// Monte Carlo estimate of the expected error over `trials` independent training sets.
pub fn mc_error(
    p_test: &Categorical,
    q_train: &Categorical,
    t: u64,
    trials: usize,
    seed: u64,
    runner: &Runner,
) -> Result<TrialStats> {
    ensure_same_support(p_test.support_size(), q_train.support_size())?;
    if trials < 2 {
        return Err(invalid("trials", "Monte Carlo needs at least 2 trials"));
    }
    let sampler = Sampler::new(q_train)?;
    let stats = runner.grid_stats(1, trials, |_, trial| {
        let mut rng = trial_stream(seed, SALT_MC ^ t, 0, trial);
        Ok(simulate_once(&sampler, p_test, t, &mut rng))
    })?;
    Ok(stats[0])
}

/// How curve points are evaluated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum EvalMode {
    /// Closed-form expectation over training sets.
    #[default]
    Exact,
    MonteCarlo { trials: usize },
}

fn validate_grid(t_grid: &[u64]) -> Result<()> {
    if t_grid.is_empty() {
        return Err(invalid("T grid", "grid is empty"));
    }
    if t_grid[0] == 0 || t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("T grid", "grid must be positive and strictly increasing"));
    }
    Ok(())
}

/// Error of training on `q_train` and testing on `p_test` along `t_grid`.
pub fn error_curve(
    tag: &str,
    p_test: &Categorical,
    q_train: &Categorical,
    t_grid: &[u64],
    mode: EvalMode,
    seed: u64,
    runner: &Runner,
) -> Result<ScalingCurve> {
    validate_grid(t_grid)?;
    ensure_same_support(p_test.support_size(), q_train.support_size())?;
    let stats: Vec<TrialStats> = match mode {
        EvalMode::Exact => {
            let oracle = HutterOracle::new(p_test, q_train)?;
            runner
                .map(t_grid.len(), |j| Ok(oracle.error(t_grid[j])))?
                .into_iter()
                .map(TrialStats::exact)
                .collect()
        }
        EvalMode::MonteCarlo { trials } => {
            if trials < 2 {
                return Err(invalid("trials", "Monte Carlo needs at least 2 trials"));
            }
            let sampler = Sampler::new(q_train)?;
            runner.grid_stats(t_grid.len(), trials, |point, trial| {
                let mut rng = trial_stream(seed, SALT_MC, point, trial);
                Ok(simulate_once(&sampler, p_test, t_grid[point], &mut rng))
            })?
        }
    };
    let mut curve = ScalingCurve::new(tag);
    for (&t, s) in t_grid.iter().zip(&stats) {
        curve.push(t as f64, s.mean, s.stderr)?;
    }
    Ok(curve)
}

/// Training mixture: a fraction `clean_fraction` of samples from `clean`, the rest from
/// `synthetic`.
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureSpec {
    pub clean_fraction: f64,
    pub clean: Categorical,
    pub synthetic: Categorical,
    pub mode: MixtureMode,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixtureMode {
    /// Every sample is clean with probability `clean_fraction`.
    Proportional,
    /// `T_real` clean and `T_AI` synthetic samples, counts pooled.
    FixedBudget { t_ai: u64 },
}

impl MixtureSpec {
    pub fn new(clean_fraction: f64, clean: Categorical, synthetic: Categorical, mode: MixtureMode) -> Result<Self> {
        if !(0.0..=1.0).contains(&clean_fraction) {
            return Err(invalid("pi", format!("clean fraction must lie in [0, 1], got {clean_fraction}")));
        }
        ensure_same_support(clean.support_size(), synthetic.support_size())?;
        Ok(Self {
            clean_fraction,
            clean,
            synthetic,
            mode,
        })
    }

    /// The per-sample training distribution of the proportional mode.
    pub fn training_distribution(&self) -> Result<Categorical> {
        let pi = self.clean_fraction;
        mix(&[&self.clean, &self.synthetic], &[pi, 1.0 - pi])
    }
}

/// Clean-data curve of a Zipf law.
pub fn scaling_curve(spec: &PowerLawSpec, t_grid: &[u64], mode: EvalMode, seed: u64, runner: &Runner) -> Result<ScalingCurve> {
    let p = zipf_pmf(spec)?;
    Ok(error_curve("hutter_scaling", &p, &p, t_grid, mode, seed, runner)?
        .with_param("beta", spec.beta)
        .with_param("support", spec.support_size as f64))
}

/// Training on `π p + (1−π) truncate(p, k)`, testing on `p`.
pub fn grokking_curve(
    p: &Categorical,
    k: usize,
    pi: f64,
    t_grid: &[u64],
    mode: EvalMode,
    seed: u64,
    runner: &Runner,
) -> Result<ScalingCurve> {
    if !(0.0..=1.0).contains(&pi) {
        return Err(invalid("pi", format!("clean fraction must lie in [0, 1], got {pi}")));
    }
    let spec = MixtureSpec::new(pi, p.clone(), truncate_tail(p, k)?, MixtureMode::Proportional)?;
    let q = spec.training_distribution()?;
    Ok(error_curve("hutter_grokking", p, &q, t_grid, mode, seed, runner)?
        .with_param("k", k as f64)
        .with_param("pi", pi))
}

/// Training on `w · truncate(p, k) + (1−w) · acquired_tail(p, N_start)` with `w = ½` by default.
pub fn annealed_curve(
    spec: &PowerLawSpec,
    k: usize,
    n_start: usize,
    head_weight: f64,
    t_grid: &[u64],
    mode: EvalMode,
    seed: u64,
    runner: &Runner,
) -> Result<ScalingCurve> {
    if n_start <= k {
        return Err(invalid("N_start", format!("acquired tail must start beyond the cutoff: N_start={n_start} <= k={k}")));
    }
    if !(head_weight > 0.0 && head_weight < 1.0) {
        return Err(invalid("head_weight", format!("must lie in (0, 1), got {head_weight}")));
    }
    let p = zipf_pmf(spec)?;
    let q = mix(
        &[&truncate_tail(&p, k)?, &acquired_tail(spec, n_start)?],
        &[head_weight, 1.0 - head_weight],
    )?;
    Ok(error_curve("hutter_annealed", &p, &q, t_grid, mode, seed, runner)?
        .with_param("beta", spec.beta)
        .with_param("k", k as f64)
        .with_param("n_start", n_start as f64))
}

/// Training on `T_real` clean samples pooled with a fixed `T_AI` samples from
/// `truncate(p, k)`, along a `T_real` grid.
///
/// Exact mode uses `Σ p_i (1 − p_i)^{T_real} (1 − q_i)^{T_AI}`.
pub fn fixed_budget_curve(
    p: &Categorical,
    k: usize,
    t_ai: u64,
    t_real_grid: &[u64],
    mode: EvalMode,
    seed: u64,
    runner: &Runner,
) -> Result<ScalingCurve> {
    validate_grid(t_real_grid)?;
    let q = truncate_tail(p, k)?;
    let stats: Vec<TrialStats> = match mode {
        EvalMode::Exact => {
            let terms: Vec<(f64, f64, f64)> = p
                .probs()
                .iter()
                .zip(q.probs())
                .filter(|(&pi, _)| pi > 0.0)
                .map(|(&pi, &qi)| (pi, (-pi).ln_1p(), (-qi).ln_1p()))
                .collect();
            let ai = t_ai as f64;
            t_real_grid
                .iter()
                .map(|&t| {
                    let t = t as f64;
                    TrialStats::exact(stable_sum(terms.iter().map(|&(pi, lp, lq)| pi * (t * lp + ai * lq).exp())))
                })
                .collect()
        }
        EvalMode::MonteCarlo { trials } => {
            if trials < 2 {
                return Err(invalid("trials", "Monte Carlo needs at least 2 trials"));
            }
            let clean = Sampler::new(p)?;
            let synthetic = Sampler::new(&q)?;
            runner.grid_stats(t_real_grid.len(), trials, |point, trial| {
                let mut rng = trial_stream(seed, SALT_BUDGET, point, trial);
                let real = clean.counts(t_real_grid[point], &mut rng);
                let ai = synthetic.counts(t_ai, &mut rng);
                HutterModel::train(&real.pooled(&ai)?).error(p)
            })?
        }
    };
    let mut curve = ScalingCurve::new("hutter_fixed_budget")
        .with_param("k", k as f64)
        .with_param("t_ai", t_ai as f64);
    for (&t, s) in t_real_grid.iter().zip(&stats) {
        curve.push(t as f64, s.mean, s.stderr)?;
    }
    Ok(curve)
}

/// Training on the narrowed law `r^{-β'}`, testing on `Zipf(β)`.
pub fn narrow_curve(
    spec: &PowerLawSpec,
    beta_prime: f64,
    t_grid: &[u64],
    mode: EvalMode,
    seed: u64,
    runner: &Runner,
) -> Result<ScalingCurve> {
    let p = zipf_pmf(spec)?;
    let q = narrow_tail(&p, beta_prime)?;
    Ok(error_curve("hutter_narrow", &p, &q, t_grid, mode, seed, runner)?
        .with_param("beta", spec.beta)
        .with_param("beta_prime", beta_prime))
}
