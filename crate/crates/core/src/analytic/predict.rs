use serde::Serialize;

use crate::error::{invalid, Result};
use crate::memory::RuleKind;

/// A scaling-law statement with its parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Theorem {
    /// Training on a `k`-tail-cut Zipf law.
    Simple { beta: f64, k: f64 },
    /// Cutoff induced by a generator fitted on `t0` samples.
    FiniteT0 { beta: f64, t0: f64 },
    /// Training on Zipf(β') data, testing on Zipf(β).
    Narrow { beta: f64, beta_prime: f64 },
    /// Error after `n` regeneration steps of `t0` samples each, evaluated at `t`.
    NFold { beta: f64, n: u32, t: f64, t0: f64 },
    /// Clean fraction `pi` mixed with a `k`-tail-cut generator.
    Grokk { beta: f64, k: f64, pi: f64 },
    /// Clean fraction `pi` mixed with a Zipf(β') generator.
    GrokkNarrow { beta: f64, beta_prime: f64, pi: f64 },
    /// Head `1..=k` plus a purchased tail starting at rank `n_start`.
    Annealed { beta: f64, k: f64, n_start: f64 },
    /// Count-ratio bigram estimator, optionally with head cut `k`.
    Bigram { beta: f64, k: Option<f64> },
    /// Capacity-limited associative memory.
    Triplet { beta: f64, rule: RuleKind },
    /// Total variation of the empirical marginal.
    MarginalTv { beta: f64 },
}

impl Theorem {
    pub fn tag(&self) -> &'static str {
        match self {
            Theorem::Simple { .. } => "simple",
            Theorem::FiniteT0 { .. } => "finite_t0",
            Theorem::Narrow { .. } => "narrow",
            Theorem::NFold { .. } => "n_fold",
            Theorem::Grokk { .. } => "grokk",
            Theorem::GrokkNarrow { .. } => "grokk_narrow",
            Theorem::Annealed { .. } => "annealed",
            Theorem::Bigram { .. } => "bigram",
            Theorem::Triplet { .. } => "triplet",
            Theorem::MarginalTv { .. } => "marginal_tv",
        }
    }

    /// `(name, value)` pairs, in a stable order, for output rows.
    pub fn params(&self) -> Vec<(&'static str, f64)> {
        match *self {
            Theorem::Simple { beta, k } => vec![("beta", beta), ("k", k)],
            Theorem::FiniteT0 { beta, t0 } => vec![("beta", beta), ("t0", t0)],
            Theorem::Narrow { beta, beta_prime } => vec![("beta", beta), ("beta_prime", beta_prime)],
            Theorem::NFold { beta, n, t, t0 } => vec![("beta", beta), ("n", n as f64), ("T", t), ("t0", t0)],
            Theorem::Grokk { beta, k, pi } => vec![("beta", beta), ("k", k), ("pi", pi)],
            Theorem::GrokkNarrow { beta, beta_prime, pi } => {
                vec![("beta", beta), ("beta_prime", beta_prime), ("pi", pi)]
            }
            Theorem::Annealed { beta, k, n_start } => vec![("beta", beta), ("k", k), ("n_start", n_start)],
            Theorem::Bigram { beta, k } => match k {
                Some(k) => vec![("beta", beta), ("k", k)],
                None => vec![("beta", beta)],
            },
            Theorem::Triplet { beta, rule } => vec![
                ("beta", beta),
                ("rule", if rule == RuleKind::Counting { 0.0 } else { 1.0 }),
            ],
            Theorem::MarginalTv { beta } => vec![("beta", beta)],
        }
    }
}

/// Predicted asymptotes. `≍` statements carry no constants, so every level here is
/// the formula with unit constants.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AsymptotePrediction {
    pub theorem: &'static str,
    /// Power-law exponent in the sample size (error ∝ `T^{-exponent_t}`).
    pub exponent_t: f64,
    pub plateau_level: Option<f64>,
    pub crossover_t: Option<f64>,
    /// Exponent before the crossover, when it differs from `exponent_t`.
    pub early_exponent: Option<f64>,
    /// Multiplicative price of clean data in the late stage.
    pub amplitude: Option<f64>,
    /// Predicted error level at the requested point.
    pub error_level: Option<f64>,
    pub exponent_d: Option<f64>,
    pub exponent_k: Option<f64>,
    pub description: String,
}

impl AsymptotePrediction {
    fn new(theorem: &'static str, exponent_t: f64, description: impl Into<String>) -> Self {
        Self {
            theorem,
            exponent_t,
            plateau_level: None,
            crossover_t: None,
            early_exponent: None,
            amplitude: None,
            error_level: None,
            exponent_d: None,
            exponent_k: None,
            description: description.into(),
        }
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if beta.is_finite() && beta > 1.0 {
        Ok(())
    } else {
        Err(invalid("beta", format!("Zipf exponent must exceed 1, got {beta}")))
    }
}

fn check_positive(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 1.0 {
        Ok(())
    } else {
        Err(invalid(name, format!("must be >= 1, got {v}")))
    }
}

fn check_fraction(pi: f64, open_top: bool) -> Result<()> {
    let ok = pi > 0.0 && if open_top { pi < 1.0 } else { pi <= 1.0 };
    if ok {
        Ok(())
    } else {
        Err(invalid("pi", format!("clean fraction out of range, got {pi}")))
    }
}

/// `min(1 − 1/β, 1/2)`, undefined at β = 2 where the two regimes meet.
fn tv_exponent(beta: f64) -> Result<f64> {
    check_beta(beta)?;
    if beta == 2.0 {
        return Err(invalid(
            "beta",
            "β = 2 is excluded: the rate min(1 − 1/β, 1/2) is stated for β ∈ (1, ∞) \\ {2}",
        ));
    }
    Ok((1.0 - 1.0 / beta).min(0.5))
}

pub fn predict(theorem: &Theorem) -> Result<AsymptotePrediction> {
    let tag = theorem.tag();
    match *theorem {
        Theorem::Simple { beta, k } => {
            check_beta(beta)?;
            check_positive("k", k)?;
            let c = 1.0 - 1.0 / beta;
            let mut p = AsymptotePrediction::new(tag, c, "T^-c + k^-(beta-1)");
            p.plateau_level = Some(k.powf(-(beta - 1.0)));
            p.crossover_t = Some(k.powf(beta));
            Ok(p)
        }
        Theorem::FiniteT0 { beta, t0 } => {
            check_beta(beta)?;
            check_positive("t0", t0)?;
            let c = 1.0 - 1.0 / beta;
            let mut p = AsymptotePrediction::new(tag, c, "T^-c + T0^-c");
            p.plateau_level = Some(t0.powf(-c));
            p.crossover_t = Some(t0);
            Ok(p)
        }
        Theorem::Narrow { beta, beta_prime } => {
            check_beta(beta)?;
            check_beta(beta_prime)?;
            Ok(AsymptotePrediction::new(tag, (beta - 1.0) / beta_prime, "T^-(beta-1)/beta'"))
        }
        Theorem::NFold { beta, n, t, t0 } => {
            check_beta(beta)?;
            check_positive("T", t)?;
            check_positive("t0", t0)?;
            let c = 1.0 - 1.0 / beta;
            let mut p = AsymptotePrediction::new(tag, c, "T^-c (n (T/T0)^c + 1)");
            p.error_level = Some(t.powf(-c) * (n as f64 * (t / t0).powf(c) + 1.0));
            if n > 0 {
                p.crossover_t = Some(t0 * (n as f64).powf(-1.0 / c));
            }
            Ok(p)
        }
        Theorem::Grokk { beta, k, pi } => {
            check_beta(beta)?;
            check_positive("k", k)?;
            check_fraction(pi, false)?;
            let c = 1.0 - 1.0 / beta;
            let mut p = AsymptotePrediction::new(tag, c, "plateau k^-(beta-1) until k^beta/pi, then (pi T)^-c");
            p.plateau_level = Some(k.powf(-(beta - 1.0)));
            p.crossover_t = Some(k.powf(beta) / pi);
            p.amplitude = Some(pi.powf(-c));
            Ok(p)
        }
        Theorem::GrokkNarrow { beta, beta_prime, pi } => {
            check_beta(beta)?;
            check_beta(beta_prime)?;
            check_fraction(pi, true)?;
            if beta_prime == beta {
                return Err(invalid("beta_prime", "must differ from beta"));
            }
            let s = beta / beta_prime;
            let a = s / (1.0 - s);
            let c = (beta - 1.0) / beta;
            let mut p = AsymptotePrediction::new(tag, c, "((1-pi) T)^-c' until T_bar, then (pi T)^-c");
            p.crossover_t = Some((pi / (1.0 - pi)).powf(-a));
            p.early_exponent = Some((beta - 1.0) / beta_prime);
            p.amplitude = Some(pi.powf(-c));
            Ok(p)
        }
        Theorem::Annealed { beta, k, n_start } => {
            check_beta(beta)?;
            check_positive("k", k)?;
            if !(n_start >= k + 1.0) {
                return Err(invalid("n_start", format!("tail must start beyond k: {n_start} < {}", k + 1.0)));
            }
            let alpha = beta - 1.0;
            let c = 1.0 - 1.0 / beta;
            let gap = ((n_start / k).powf(alpha) - 1.0) * n_start.powf(-alpha);
            let mut p = AsymptotePrediction::new(
                tag,
                c,
                format!("T^-c + ((N/k)^alpha - 1) N^-alpha, N/k = {:.6}", n_start / k),
            );
            p.plateau_level = Some(gap);
            // The gap meets T^-c at T = gap^{-1/c}.
            p.crossover_t = Some(gap.powf(-1.0 / c));
            Ok(p)
        }
        Theorem::Bigram { beta, k } => {
            let c = tv_exponent(beta)?;
            let mut p = AsymptotePrediction::new(tag, c, "T^-c + k^-(beta c), c = min(1-1/beta, 1/2)");
            if let Some(k) = k {
                check_positive("k", k)?;
                p.plateau_level = Some(k.powf(-beta * c));
                p.crossover_t = Some(k.powf(beta));
            }
            Ok(p)
        }
        Theorem::Triplet { beta, rule } => {
            check_beta(beta)?;
            let c = 1.0 - 1.0 / beta;
            let mut p = AsymptotePrediction::new(tag, c, "T^-(1-1/beta) + d^-c_q + k^-(beta-1)");
            p.exponent_d = Some(match rule {
                RuleKind::Counting => c / 2.0,
                RuleKind::Thresholded => beta - 1.0,
            });
            p.exponent_k = Some(beta - 1.0);
            Ok(p)
        }
        Theorem::MarginalTv { beta } => {
            let c = tv_exponent(beta)?;
            Ok(AsymptotePrediction::new(tag, c, "E TV(p_hat_T, p) ~ T^-c"))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grokking_plateau_and_crossover() {
        let p = predict(&Theorem::Grokk { beta: 2.0, k: 10.0, pi: 0.01 }).unwrap();
        assert!((p.plateau_level.unwrap() - 0.1).abs() < 1e-15);
        assert!((p.crossover_t.unwrap() - 1e4).abs() < 1e-9);
        assert!((p.exponent_t - 0.5).abs() < 1e-15);
        assert!((p.amplitude.unwrap() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn narrow_grokking_crossover() {
        let p = predict(&Theorem::GrokkNarrow { beta: 1.5, beta_prime: 3.0, pi: 0.1 }).unwrap();
        assert!((p.crossover_t.unwrap() - 9.0).abs() < 1e-12);
        assert!((p.early_exponent.unwrap() - 0.5 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn zero_generations_is_clean() {
        for &(beta, t) in &[(1.5, 1e3), (2.0, 1e5), (3.0, 17.0)] {
            let p = predict(&Theorem::NFold { beta, n: 0, t, t0: t }).unwrap();
            assert_eq!(p.error_level.unwrap(), t.powf(-(1.0 - 1.0 / beta)));
            assert!(p.crossover_t.is_none());
        }
        let p = predict(&Theorem::NFold { beta: 1.5, n: 4, t: 1e3, t0: 1e3 }).unwrap();
        assert!((p.error_level.unwrap() - 5.0 * 1e3f64.powf(-1.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn simple_and_finite_t0() {
        let p = predict(&Theorem::Simple { beta: 1.5, k: 100.0 }).unwrap();
        assert!((p.plateau_level.unwrap() - 0.1).abs() < 1e-15);
        assert!((p.crossover_t.unwrap() - 1000.0).abs() < 1e-9);
        let p = predict(&Theorem::FiniteT0 { beta: 2.0, t0: 1e4 }).unwrap();
        assert!((p.plateau_level.unwrap() - 0.01).abs() < 1e-15);
        let p = predict(&Theorem::Narrow { beta: 2.0, beta_prime: 1.5 }).unwrap();
        assert!((p.exponent_t - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn tv_rates_and_beta_two_exclusion() {
        let p = predict(&Theorem::Bigram { beta: 1.4, k: Some(10.0) }).unwrap();
        assert!((p.exponent_t - 2.0 / 7.0).abs() < 1e-15);
        assert!((p.plateau_level.unwrap() - 10f64.powf(-0.4)).abs() < 1e-12);
        assert_eq!(predict(&Theorem::MarginalTv { beta: 3.0 }).unwrap().exponent_t, 0.5);
        for t in [Theorem::Bigram { beta: 2.0, k: None }, Theorem::MarginalTv { beta: 2.0 }] {
            let err = predict(&t).unwrap_err().to_string();
            assert!(err.contains("β = 2 is excluded"), "{err}");
        }
    }

    #[test]
    fn triplet_exponents() {
        let c = predict(&Theorem::Triplet { beta: 2.0, rule: RuleKind::Counting }).unwrap();
        assert_eq!((c.exponent_t, c.exponent_d, c.exponent_k), (0.5, Some(0.25), Some(1.0)));
        let t = predict(&Theorem::Triplet { beta: 2.0, rule: RuleKind::Thresholded }).unwrap();
        assert_eq!(t.exponent_d, Some(1.0));
    }

    #[test]
    fn annealed_regimes() {
        let tight = predict(&Theorem::Annealed { beta: 2.0, k: 1000.0, n_start: 1001.0 }).unwrap();
        let wide = predict(&Theorem::Annealed { beta: 2.0, k: 1000.0, n_start: 10_000.0 }).unwrap();
        assert!(tight.plateau_level.unwrap() < 1e-6);
        assert!((wide.plateau_level.unwrap() - 9e-4).abs() < 1e-15);
        assert!(predict(&Theorem::Annealed { beta: 2.0, k: 10.0, n_start: 10.0 }).is_err());
    }

    #[test]
    fn predictions_are_pure() {
        let t = Theorem::Grokk { beta: 1.7, k: 33.0, pi: 0.003 };
        assert_eq!(predict(&t).unwrap(), predict(&t).unwrap());
    }
}
