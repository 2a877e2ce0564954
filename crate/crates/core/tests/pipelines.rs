//! Cross-module checks: simulators against oracles, chains against single-step curves.

use tailcut_core::analytic::{hutter_exact_error, predict, Theorem};
use tailcut_core::bigram::{self, ConditionalFamily, HeadCutKind, PermutationMode, PowerLawConditionals, UnseenPolicy};
use tailcut_core::distributions::{truncate_tail, zipf_pmf, PowerLawSpec, TailTransform};
use tailcut_core::fitting::{crossover_detect, geometric_grid, loglog_fit, CrossoverShape};
use tailcut_core::generations::{run_chain, run_chain_bigram, ChainConfig, Learner, T0Schedule};
use tailcut_core::hutter::{self, EvalMode};
use tailcut_core::{Categorical, Runner};

fn zipf(beta: f64, n: usize) -> Categorical {
    zipf_pmf(&PowerLawSpec::new(beta, n).unwrap()).unwrap()
}

fn family(beta: f64, contexts: usize, vocab: usize, head_cut: Option<usize>) -> ConditionalFamily {
    ConditionalFamily::power_law(
        zipf(beta, contexts),
        vocab,
        PowerLawConditionals {
            beta,
            permutation: PermutationMode::SeededRandom { seed: 5 },
            head_cut,
            cut_kind: HeadCutKind::Rank,
        },
    )
    .unwrap()
}

#[test]
fn monte_carlo_curve_tracks_exact_curve() {
    let spec = PowerLawSpec::new(2.0, 5_000).unwrap();
    let grid = [10, 100, 1_000, 10_000];
    let runner = Runner::new(2).unwrap();
    let mc = hutter::scaling_curve(&spec, &grid, EvalMode::MonteCarlo { trials: 400 }, 3, &runner).unwrap();
    let exact = hutter::scaling_curve(&spec, &grid, EvalMode::Exact, 3, &runner).unwrap();
    for (m, e) in mc.points().iter().zip(exact.points()) {
        assert!((m.y_mean - e.y_mean).abs() <= 4.0 * m.y_stderr + 1e-12, "{m:?} vs {e:?}");
    }
}

#[test]
fn tail_cut_plateau_is_the_missing_mass() {
    let p = zipf(2.0, 100_000);
    let q = truncate_tail(&p, 50).unwrap();
    let e = hutter_exact_error(&p, &q, 1_000_000_000).unwrap();
    assert!((e - p.tail_mass(50)).abs() < 1e-12);
    let pred = predict(&Theorem::Simple { beta: 2.0, k: 50.0 }).unwrap();
    let ratio = e / pred.plateau_level.unwrap();
    assert!((0.3..3.0).contains(&ratio), "{ratio}");
}

#[test]
fn grokking_crossover_scales_inversely_with_clean_fraction() {
    let p = zipf(2.0, 200_000);
    let grid = geometric_grid(1e1, 1e8, 5).unwrap();
    let runner = Runner::sequential();
    let cross = |pi: f64| {
        let curve = hutter::grokking_curve(&p, 5, pi, &grid, EvalMode::Exact, 0, &runner).unwrap();
        let fit = crossover_detect(&curve, None).unwrap();
        assert_eq!(fit.shape, CrossoverShape::PlateauThenDecay);
        fit.crossover_x
    };
    let ratio = cross(1e-3) / cross(1e-2);
    assert!((5.0..20.0).contains(&ratio), "{ratio}");
}

#[test]
fn chain_generation_zero_is_the_clean_curve() {
    let p = zipf(1.5, 20_000);
    let grid = vec![100, 1_000, 10_000];
    let runner = Runner::new(2).unwrap();
    let cfg = ChainConfig {
        generations: 2,
        t0: T0Schedule::Fixed(1_000),
        transforms: vec![TailTransform::TopP { mass: 0.95 }],
        learner: Learner::Hutter,
        final_t_grid: grid.clone(),
        trials: 8,
        seed: 4,
        propagate_marginal: false,
    };
    let chain = run_chain(&cfg, &p, &runner).unwrap();
    let clean = hutter::scaling_curve(&PowerLawSpec::new(1.5, 20_000).unwrap(), &grid, EvalMode::Exact, 4, &runner).unwrap();
    let gen0: Vec<f64> = chain.curves[0].points().iter().map(|q| q.y_mean).collect();
    let base: Vec<f64> = clean.points().iter().map(|q| q.y_mean).collect();
    assert_eq!(gen0, base);
    // Regenerating with a nucleus cut can only lose mass: errors grow with generations
    // at the largest T, where the clean error is smallest.
    let last = |g: usize| chain.curves[g].points().last().unwrap().y_mean;
    assert!(last(1) > last(0));
    assert!(last(2) >= last(1) * 0.999);
}

#[test]
fn bigram_chain_generation_zero_matches_single_step() {
    let truth = family(1.5, 20, 50, None);
    let grid = vec![100, 1_000];
    let runner = Runner::new(2).unwrap();
    let cfg = ChainConfig {
        generations: 1,
        t0: T0Schedule::MatchT,
        transforms: Vec::new(),
        learner: Learner::Bigram,
        final_t_grid: grid.clone(),
        trials: 5,
        seed: 8,
        propagate_marginal: false,
    };
    let chain = run_chain_bigram(&cfg, &truth, &runner).unwrap();
    let single = bigram::expected_tv_curve(&truth, &grid, 5, 8, UnseenPolicy::Two, &runner).unwrap();
    assert_eq!(chain.curves[0].points(), single.points());
}

#[test]
fn bigram_monte_carlo_matches_enumeration() {
    let f = family(2.5, 2, 3, None);
    let runner = Runner::sequential();
    for t in 1..=4 {
        let exact = bigram::expected_tv_bruteforce(&f, t).unwrap();
        let mc = bigram::expected_tv_mc(&f, t, 3_000, 77 + t, UnseenPolicy::Two, &runner).unwrap();
        assert!(mc.agrees_with(exact, 4.0), "T={t}: {mc:?} vs {exact}");
    }
}

#[test]
fn bigram_head_cut_error_plateaus() {
    let truth = family(1.4, 30, 2_000, None);
    let cut = family(1.4, 30, 2_000, Some(5));
    let runner = Runner::new(2).unwrap();
    let grid = [10_000u64, 100_000, 1_000_000];
    let curve = bigram::tv_curve("cut", &cut, &truth, &grid, 4, 1, UnseenPolicy::Two, &runner).unwrap();
    let ys: Vec<f64> = curve.points().iter().map(|p| p.y_mean).collect();
    assert!((ys[2] / ys[1] - 1.0).abs() < 0.05, "{ys:?}");
    let clean = bigram::tv_curve("clean", &truth, &truth, &grid, 4, 1, UnseenPolicy::Two, &runner).unwrap();
    assert!(clean.points()[2].y_mean < ys[2]);
}

#[test]
fn narrowed_training_fits_predicted_slope() {
    let spec = PowerLawSpec::new(2.0, 300_000).unwrap();
    let curve = hutter::narrow_curve(&spec, 1.25, &geometric_grid(1e2, 1e6, 4).unwrap(), EvalMode::Exact, 0, &Runner::sequential()).unwrap();
    let fit = loglog_fit(&curve, None).unwrap();
    let want = predict(&Theorem::Narrow { beta: 2.0, beta_prime: 1.25 }).unwrap().exponent_t;
    assert!((fit.exponent + want).abs() < 0.08, "{} vs {want}", fit.exponent);
}
