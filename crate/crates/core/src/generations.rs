//! Regeneration chains `p → p_AI(1) → … → p_AI(n)`: each step fits the empirical law of
//! `T₀` samples from the previous step, optionally distorts it, and becomes the next
//! data source. The downstream learner is then trained on every generation and tested
//! against the true law.

use serde::{Deserialize, Serialize};

use crate::analytic::HutterOracle;
use crate::bigram::{self, BigramModel, ConditionalFamily, UnseenPolicy};
use crate::distributions::{apply_transforms, sample_counts, Categorical, TailTransform};
use crate::error::{invalid, Error, Result};
use crate::fitting::ScalingCurve;
use crate::rng::RngStream;
use crate::trials::{trial_stream, Runner, TrialStats};

/// Sample size used to fit each generation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum T0Schedule {
    Fixed(u64),
    /// One entry per generation.
    PerGeneration(Vec<u64>),
    /// `T₀` equals the downstream `T` of each grid point.
    MatchT,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Learner {
    #[default]
    Hutter,
    Bigram,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub generations: usize,
    pub t0: T0Schedule,
    #[serde(default)]
    pub transforms: Vec<TailTransform>,
    #[serde(default)]
    pub learner: Learner,
    pub final_t_grid: Vec<u64>,
    pub trials: usize,
    pub seed: u64,
    /// Bigram chains only: feed each generation's fitted context marginal forward
    /// instead of re-imposing the true one.
    #[serde(default)]
    pub propagate_marginal: bool,
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        match &self.t0 {
            T0Schedule::Fixed(0) => return Err(invalid("T0", "must be positive")),
            T0Schedule::PerGeneration(s) => {
                if s.len() != self.generations {
                    return Err(invalid("T0", format!("schedule has {} entries for {} generations", s.len(), self.generations)));
                }
                if s.contains(&0) {
                    return Err(invalid("T0", "must be positive"));
                }
            }
            _ => {}
        }
        if self.final_t_grid.is_empty()
            || self.final_t_grid[0] == 0
            || self.final_t_grid.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(invalid("T grid", "grid must be non-empty, positive and strictly increasing"));
        }
        if self.trials == 0 {
            return Err(invalid("trials", "need at least one trial"));
        }
        for t in &self.transforms {
            t.validate()?;
        }
        Ok(())
    }

    fn t0(&self, generation: usize, t: u64) -> u64 {
        match &self.t0 {
            T0Schedule::Fixed(v) => *v,
            T0Schedule::PerGeneration(s) => s[generation - 1],
            T0Schedule::MatchT => t,
        }
    }
}

/// Per-generation summaries, averaged over chains.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct GenerationSummary {
    pub generation: usize,
    /// Mean number of outcomes (or `(context, output)` cells) with positive mass.
    pub mean_support: f64,
    pub mean_entropy: f64,
    /// Mean largest outcome index with positive mass (Hutter chains).
    pub mean_max_index: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct GenerationTrace {
    pub generations: Vec<GenerationSummary>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainResult {
    /// `curves[g]` is the downstream error curve after `g` generations.
    pub curves: Vec<ScalingCurve>,
    pub trace: GenerationTrace,
}

/// Empirical law of `t0` draws, then `transforms` in order.
pub fn regenerate(dist: &Categorical, t0: u64, transforms: &[TailTransform], rng: &mut RngStream) -> Result<Categorical> {
    if t0 == 0 {
        return Err(invalid("T0", "must be positive"));
    }
    let empirical = sample_counts(dist, t0, rng)?.empirical()?;
    apply_transforms(&empirical, transforms).map_err(|e| match e {
        Error::InvalidParameter { .. } => e,
        other => Error::MassDestroyed(format!("regenerated law lost all mass under {transforms:?}: {other}")),
    })
}

const SALT_CHAIN: u64 = 0x4348_4149_4e00_0001;

#[derive(Clone, Copy, Default)]
struct Stats {
    support: f64,
    entropy: f64,
    max_index: f64,
}

fn summarize(per_chain: &[Vec<Stats>], generations: usize) -> GenerationTrace {
    let chains = per_chain.len().max(1) as f64;
    GenerationTrace {
        generations: (1..=generations)
            .map(|g| GenerationSummary {
                generation: g,
                mean_support: per_chain.iter().map(|c| c[g - 1].support).sum::<f64>() / chains,
                mean_entropy: per_chain.iter().map(|c| c[g - 1].entropy).sum::<f64>() / chains,
                mean_max_index: per_chain.iter().map(|c| c[g - 1].max_index).sum::<f64>() / chains,
            })
            .collect(),
    }
}

/// `errors[trial][generation - 1][point]` plus per-chain stats, for either chain layout.
type ChainOutput = (Vec<Vec<Vec<f64>>>, Vec<Vec<Stats>>);

/// Runs one chain task per trial (shared `T₀`) or per `(point, trial)` (`T₀ = T`).
fn run_chains<F>(config: &ChainConfig, runner: &Runner, chain: F) -> Result<ChainOutput>
where
    F: Fn(&mut RngStream, &[usize], usize) -> Result<(Vec<Vec<f64>>, Vec<Stats>)> + Sync + Send,
{
    let points = config.final_t_grid.len();
    let trials = config.trials;
    let all_points: Vec<usize> = (0..points).collect();
    if config.t0 == T0Schedule::MatchT {
        let tasks = runner.map(points * trials, |task| {
            let (point, trial) = (task / trials, task % trials);
            let mut rng = trial_stream(config.seed, SALT_CHAIN, point, trial);
            chain(&mut rng, &[point], point)
        })?;
        let mut errors = vec![vec![vec![0.0; points]; config.generations]; trials];
        let mut stats = Vec::with_capacity(tasks.len());
        for (task, (errs, st)) in tasks.into_iter().enumerate() {
            let (point, trial) = (task / trials, task % trials);
            for (g, e) in errs.into_iter().enumerate() {
                errors[trial][g][point] = e[0];
            }
            stats.push(st);
        }
        Ok((errors, stats))
    } else {
        let tasks = runner.map(trials, |trial| {
            let mut rng = trial_stream(config.seed, SALT_CHAIN, usize::MAX, trial);
            chain(&mut rng, &all_points, 0)
        })?;
        Ok(tasks.into_iter().unzip())
    }
}

fn assemble(tag: &str, config: &ChainConfig, gen0: Vec<TrialStats>, errors: &[Vec<Vec<f64>>]) -> Result<Vec<ScalingCurve>> {
    let mut curves = Vec::with_capacity(config.generations + 1);
    for g in 0..=config.generations {
        let mut curve = ScalingCurve::new(tag).with_param("generation", g as f64);
        if let T0Schedule::Fixed(t0) = config.t0 {
            curve = curve.with_param("t0", t0 as f64);
        }
        for (point, &t) in config.final_t_grid.iter().enumerate() {
            let s = if g == 0 {
                gen0[point]
            } else {
                let values: Vec<f64> = errors.iter().map(|trial| trial[g - 1][point]).collect();
                TrialStats::from_samples(&values)?
            };
            curve.push(t as f64, s.mean, s.stderr)?;
        }
        curves.push(curve);
    }
    Ok(curves)
}

/// Hutter learner on each generation; errors are exact expectations given the chain.
pub fn run_chain(config: &ChainConfig, p: &Categorical, runner: &Runner) -> Result<ChainResult> {
    config.validate()?;
    let grid = &config.final_t_grid;
    let clean = HutterOracle::new(p, p)?;
    let gen0: Vec<TrialStats> = grid.iter().map(|&t| TrialStats::exact(clean.error(t))).collect();

    let (errors, stats) = run_chains(config, runner, |rng, points, point_for_t0| {
        let mut current = p.clone();
        let mut errs = Vec::with_capacity(config.generations);
        let mut st = Vec::with_capacity(config.generations);
        for g in 1..=config.generations {
            current = regenerate(&current, config.t0(g, grid[point_for_t0]), &config.transforms, rng)?;
            let oracle = HutterOracle::new(p, &current)?;
            errs.push(points.iter().map(|&j| oracle.error(grid[j])).collect());
            st.push(Stats {
                support: current.positive_support() as f64,
                entropy: current.entropy(),
                max_index: current.max_positive_index().map_or(0.0, |i| i as f64 + 1.0),
            });
        }
        Ok((errs, st))
    })?;

    Ok(ChainResult {
        curves: assemble("chain_hutter", config, gen0, &errors)?,
        trace: summarize(&stats, config.generations),
    })
}

/// The next bigram generation: count ratios of `t0` pairs from `current`, contexts
/// that were not sampled keep their previous conditional, `transforms` applied to every
/// conditional.
pub fn regenerate_bigram(
    current: &ConditionalFamily,
    truth_marginal: &Categorical,
    t0: u64,
    transforms: &[TailTransform],
    propagate_marginal: bool,
    rng: &mut RngStream,
) -> Result<ConditionalFamily> {
    let model = BigramModel::fit(&bigram::sample_pairs(current, t0, rng)?);
    let conditionals = (0..current.contexts())
        .map(|i| {
            let base = match model.conditional(i) {
                Some(q) => q,
                None => current.conditional_pmf(i)?,
            };
            apply_transforms(&base, transforms)
        })
        .collect::<Result<Vec<_>>>()?;
    let marginal = if propagate_marginal {
        model.marginal().cloned().ok_or(Error::Empty("regeneration sample"))?
    } else {
        truth_marginal.clone()
    };
    ConditionalFamily::explicit(marginal, conditionals)
}

/// Bigram learner on each generation, scored by expected TV against `truth`.
pub fn run_chain_bigram(config: &ChainConfig, truth: &ConditionalFamily, runner: &Runner) -> Result<ChainResult> {
    config.validate()?;
    if config.trials < 2 {
        return Err(invalid("trials", "Monte Carlo needs at least 2 trials"));
    }
    let grid = &config.final_t_grid;
    let policy = UnseenPolicy::Two;
    let gen0 = bigram::expected_tv_curve(truth, grid, config.trials, config.seed, policy, runner)?
        .points()
        .iter()
        .map(|p| TrialStats {
            mean: p.y_mean,
            stderr: p.y_stderr,
            trials: config.trials,
        })
        .collect();

    let (errors, stats) = run_chains(config, runner, |rng, points, point_for_t0| {
        let mut current = truth.clone();
        let mut errs = Vec::with_capacity(config.generations);
        let mut st = Vec::with_capacity(config.generations);
        for g in 1..=config.generations {
            current = regenerate_bigram(
                &current,
                truth.marginal(),
                config.t0(g, grid[point_for_t0]),
                &config.transforms,
                config.propagate_marginal,
                rng,
            )?;
            errs.push(
                points
                    .iter()
                    .map(|&j| bigram::simulate_tv(&current, truth, grid[j], policy, rng))
                    .collect::<Result<Vec<_>>>()?,
            );
            let mut cells = 0.0;
            let mut entropy = 0.0;
            for (i, &w) in current.marginal().probs().iter().enumerate() {
                let c = current.entry(i)?;
                cells += c.dist().positive_support() as f64;
                entropy += w * c.dist().entropy();
            }
            st.push(Stats {
                support: cells,
                entropy,
                max_index: 0.0,
            });
        }
        Ok((errs, st))
    })?;

    Ok(ChainResult {
        curves: assemble("chain_bigram", config, gen0, &errors)?,
        trace: summarize(&stats, config.generations),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bigram::{PermutationMode, PowerLawConditionals};
    use crate::distributions::{zipf_pmf, PowerLawSpec};
    use crate::hutter::{scaling_curve, EvalMode};

    fn zipf(beta: f64, n: usize) -> Categorical {
        zipf_pmf(&PowerLawSpec::new(beta, n).unwrap()).unwrap()
    }

    fn config(generations: usize, t0: T0Schedule, grid: Vec<u64>, trials: usize) -> ChainConfig {
        ChainConfig {
            generations,
            t0,
            transforms: Vec::new(),
            learner: Learner::Hutter,
            final_t_grid: grid,
            trials,
            seed: 17,
            propagate_marginal: false,
        }
    }

    #[test]
    fn regenerate_examples() {
        let mut rng = RngStream::new(1, 0);
        let p = zipf(1.5, 10);
        let q = regenerate(&p, 100_000_000, &[], &mut rng).unwrap();
        assert!(bigram::tv(&p, &q).unwrap() < 1e-3);
        let point = Categorical::point_mass(5, 3).unwrap();
        assert_eq!(regenerate(&point, 7, &[], &mut rng).unwrap(), point);
        assert!(regenerate(&p, 0, &[], &mut rng).is_err());

        // The fully learned head ends near T0^{1/β} = 100; isolated singletons reach
        // far beyond it (the largest seen index is of order T0).
        let big = zipf(2.0, 1_000_000);
        let mut inside = 0;
        for s in 0..40 {
            let q = regenerate(&big, 10_000, &[], &mut RngStream::new(s, 1)).unwrap();
            let prefix = q.probs().iter().position(|&x| x == 0.0).unwrap();
            inside += usize::from((25..=400).contains(&prefix));
            assert!(q.max_positive_index().unwrap() > 400);
        }
        assert!(inside >= 38, "{inside}/40");
    }

    #[test]
    fn regenerate_never_grows_support() {
        let mut rng = RngStream::new(2, 0);
        let mut q = zipf(1.2, 300);
        for _ in 0..6 {
            let next = regenerate(&q, 200, &[TailTransform::Temperature { tau: 0.9 }], &mut rng).unwrap();
            assert!(next.probs().iter().zip(q.probs()).all(|(a, b)| *a == 0.0 || *b > 0.0));
            q = next;
        }
    }

    #[test]
    fn generation_zero_is_the_clean_curve() {
        let spec = PowerLawSpec::new(1.5, 10_000).unwrap();
        let p = zipf_pmf(&spec).unwrap();
        let grid = vec![10, 100, 1000];
        let runner = Runner::default();
        let r = run_chain(&config(0, T0Schedule::Fixed(100), grid.clone(), 3), &p, &runner).unwrap();
        let clean = scaling_curve(&spec, &grid, EvalMode::Exact, 0, &runner).unwrap();
        assert_eq!(r.curves.len(), 1);
        for (a, b) in r.curves[0].points().iter().zip(clean.points()) {
            assert_eq!(a.y_mean.to_bits(), b.y_mean.to_bits());
        }
    }

    #[test]
    fn degradation_is_monotone_and_deterministic() {
        let p = zipf(1.5, 20_000);
        let cfg = config(4, T0Schedule::MatchT, vec![100, 1000, 10_000], 20);
        let a = run_chain(&cfg, &p, &Runner::new(1).unwrap()).unwrap();
        let b = run_chain(&cfg, &p, &Runner::new(4).unwrap()).unwrap();
        assert_eq!(a, b);
        for j in 0..3 {
            for g in 1..=4 {
                let prev = a.curves[g - 1].points()[j];
                let cur = a.curves[g].points()[j];
                assert!(cur.y_mean + 3.0 * cur.y_stderr >= prev.y_mean, "g={g} point {j}");
            }
        }
        assert_eq!(a.trace.generations.len(), 4);
        assert!(a.trace.generations[3].mean_support <= a.trace.generations[0].mean_support);
    }

    #[test]
    fn large_t0_chains_stay_clean() {
        let p = zipf(1.5, 20_000);
        let grid = vec![100, 300, 1000];
        let cfg = config(3, T0Schedule::Fixed(100_000), grid, 10);
        let r = run_chain(&cfg, &p, &Runner::default()).unwrap();
        for g in 1..=3 {
            for (a, b) in r.curves[g].points().iter().zip(r.curves[0].points()) {
                assert!((a.y_mean - b.y_mean) <= 3.0 * a.y_stderr + 0.02 * b.y_mean, "g={g}: {a:?} vs {b:?}");
            }
        }
    }

    #[test]
    fn schedule_validation() {
        let mut cfg = config(2, T0Schedule::PerGeneration(vec![10]), vec![10], 2);
        assert!(cfg.validate().is_err());
        cfg.t0 = T0Schedule::PerGeneration(vec![10, 20]);
        assert!(cfg.validate().is_ok());
        cfg.final_t_grid = vec![];
        assert!(cfg.validate().is_err());
    }

    fn small_family() -> ConditionalFamily {
        ConditionalFamily::power_law(
            zipf(1.5, 10),
            10,
            PowerLawConditionals {
                beta: 1.5,
                permutation: PermutationMode::SeededRandom { seed: 3 },
                head_cut: None,
                cut_kind: Default::default(),
            },
        )
        .unwrap()
    }

    #[test]
    fn bigram_generation_zero_matches_clean_curve() {
        let f = small_family();
        let runner = Runner::default();
        let mut cfg = config(1, T0Schedule::Fixed(50), vec![10, 100], 5);
        cfg.learner = Learner::Bigram;
        let r = run_chain_bigram(&cfg, &f, &runner).unwrap();
        let clean = bigram::expected_tv_curve(&f, &[10, 100], 5, 17, UnseenPolicy::Two, &runner).unwrap();
        assert_eq!(r.curves[0].points(), clean.points());
    }

    #[test]
    fn top_p_generations_degrade_faster() {
        let f = small_family();
        let runner = Runner::default();
        let mut cfg = config(3, T0Schedule::Fixed(200), vec![1000, 10_000], 30);
        cfg.learner = Learner::Bigram;
        let plain = run_chain_bigram(&cfg, &f, &runner).unwrap();
        cfg.transforms = vec![TailTransform::TopP { mass: 0.9 }];
        let top_p = run_chain_bigram(&cfg, &f, &runner).unwrap();
        for g in 1..=3 {
            for (a, b) in top_p.curves[g].points().iter().zip(plain.curves[g].points()) {
                assert!(a.y_mean > b.y_mean - 3.0 * (a.y_stderr + b.y_stderr), "g={g}");
            }
        }
        let last = top_p.curves[3].points()[1].y_mean;
        assert!(last > plain.curves[3].points()[1].y_mean);
    }
}
