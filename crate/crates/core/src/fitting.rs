//! Exponents, plateaus and crossovers from `(size, error)` measurements.

use serde::Serialize;

use crate::error::{invalid, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CurvePoint {
    pub x: f64,
    pub y_mean: f64,
    pub y_stderr: f64,
}

/// A measured error curve with the experiment tag and parameters that produced it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingCurve {
    pub tag: String,
    pub params: Vec<(String, f64)>,
    points: Vec<CurvePoint>,
}

impl ScalingCurve {
    pub fn new(tag: impl Into<String>) -> Self {
        Self {
            tag: tag.into(),
            params: Vec::new(),
            points: Vec::new(),
        }
    }

    pub fn with_param(mut self, name: impl Into<String>, value: f64) -> Self {
        self.params.push((name.into(), value));
        self
    }

    pub fn from_points(tag: impl Into<String>, points: Vec<CurvePoint>) -> Result<Self> {
        let mut curve = Self::new(tag);
        for p in points {
            curve.push(p.x, p.y_mean, p.y_stderr)?;
        }
        Ok(curve)
    }

    /// Appends a point; `x` must exceed the previous one.
    pub fn push(&mut self, x: f64, y_mean: f64, y_stderr: f64) -> Result<()> {
        if !(x.is_finite() && x > 0.0) {
            return Err(invalid("x", format!("abscissa must be positive, got {x}")));
        }
        if let Some(last) = self.points.last() {
            if x <= last.x {
                return Err(invalid("x", format!("abscissae must increase: {x} after {}", last.x)));
            }
        }
        self.points.push(CurvePoint { x, y_mean, y_stderr });
        Ok(())
    }

    pub fn points(&self) -> &[CurvePoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn param(&self, name: &str) -> Option<f64> {
        self.params.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    /// Value at `x`, if `x` is one of the abscissae.
    pub fn y_at(&self, x: f64) -> Option<f64> {
        self.points
            .iter()
            .find(|p| (p.x - x).abs() <= 1e-9 * x.abs())
            .map(|p| p.y_mean)
    }

    pub fn x_range(&self) -> Option<(f64, f64)> {
        Some((self.points.first()?.x, self.points.last()?.x))
    }

    fn in_window(&self, window: Option<(f64, f64)>) -> Vec<CurvePoint> {
        match window {
            None => self.points.clone(),
            Some((lo, hi)) => self
                .points
                .iter()
                .filter(|p| p.x >= lo * (1.0 - 1e-12) && p.x <= hi * (1.0 + 1e-12))
                .copied()
                .collect(),
        }
    }
}

/// `log y ≈ log_amplitude + exponent · log x` (natural logs).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PowerFit {
    pub exponent: f64,
    pub log_amplitude: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
    pub n_points: usize,
}

/// Weighted least squares line; returns `(slope, intercept, r²)`.
fn weighted_line(xs: &[f64], ys: &[f64], ws: &[f64]) -> (f64, f64, f64) {
    let sw: f64 = ws.iter().sum();
    let mx = xs.iter().zip(ws).map(|(x, w)| w * x).sum::<f64>() / sw;
    let my = ys.iter().zip(ws).map(|(y, w)| w * y).sum::<f64>() / sw;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for ((x, y), w) in xs.iter().zip(ys).zip(ws) {
        sxx += w * (x - mx) * (x - mx);
        sxy += w * (x - mx) * (y - my);
        syy += w * (y - my) * (y - my);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let sse: f64 = xs
        .iter()
        .zip(ys)
        .zip(ws)
        .map(|((x, y), w)| {
            let r = y - intercept - slope * x;
            w * r * r
        })
        .sum();
    let r2 = if syy > 0.0 { (1.0 - sse / syy).clamp(0.0, 1.0) } else { 1.0 };
    (slope, intercept, r2)
}

fn line(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    weighted_line(xs, ys, &vec![1.0; xs.len()])
}

fn log_points(points: &[CurvePoint]) -> Result<(Vec<f64>, Vec<f64>)> {
    if let Some(p) = points.iter().find(|p| !(p.y_mean > 0.0 && p.y_mean.is_finite())) {
        return Err(invalid("y_mean", format!("log-domain fit needs positive values, got {} at x={}", p.y_mean, p.x)));
    }
    Ok((
        points.iter().map(|p| p.x.ln()).collect(),
        points.iter().map(|p| p.y_mean.ln()).collect(),
    ))
}

fn fit_points(points: &[CurvePoint], weighted: bool) -> Result<PowerFit> {
    if points.len() < 3 {
        return Err(Error::InsufficientPoints {
            needed: 3,
            got: points.len(),
        });
    }
    let (lx, ly) = log_points(points)?;
    let ws: Vec<f64> = if weighted {
        let rel: Vec<f64> = points.iter().map(|p| (p.y_stderr / p.y_mean).powi(2)).collect();
        let floor = rel.iter().copied().filter(|v| *v > 0.0).fold(f64::INFINITY, f64::min);
        if floor.is_finite() {
            rel.iter().map(|&v| 1.0 / v.max(floor)).collect()
        } else {
            vec![1.0; points.len()]
        }
    } else {
        vec![1.0; points.len()]
    };
    let (slope, intercept, r2) = weighted_line(&lx, &ly, &ws);
    Ok(PowerFit {
        exponent: slope,
        log_amplitude: intercept,
        r_squared: r2,
        window: (points[0].x, points[points.len() - 1].x),
        n_points: points.len(),
    })
}

/// Ordinary least squares on `(ln x, ln y)` over the points inside `window`.
pub fn loglog_fit(curve: &ScalingCurve, window: Option<(f64, f64)>) -> Result<PowerFit> {
    fit_points(&curve.in_window(window), false)
}

/// As [`loglog_fit`] with weights `1 / (stderr / mean)²`; zero-stderr points get the
/// largest finite weight present.
pub fn loglog_fit_weighted(curve: &ScalingCurve, window: Option<(f64, f64)>) -> Result<PowerFit> {
    fit_points(&curve.in_window(window), true)
}

/// The curve's range minus its first and last half-decade.
pub fn default_window(curve: &ScalingCurve) -> Option<(f64, f64)> {
    let (lo, hi) = curve.x_range()?;
    let half_decade = 10f64.sqrt();
    let (wlo, whi) = (lo * half_decade, hi / half_decade);
    (wlo < whi).then_some((wlo, whi))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PlateauEstimate {
    pub level: f64,
    /// Log-log slope over the tail points; near zero when the curve is flat.
    pub tail_slope: Option<f64>,
    pub n_points: usize,
}

/// Median of `y` over the largest-`x` `tail_fraction` of the points.
pub fn plateau_level(curve: &ScalingCurve, tail_fraction: f64) -> Result<PlateauEstimate> {
    if !(tail_fraction > 0.0 && tail_fraction <= 0.5) {
        return Err(invalid("tail_fraction", format!("must lie in (0, 0.5], got {tail_fraction}")));
    }
    if curve.is_empty() {
        return Err(Error::Empty("curve"));
    }
    let n = ((curve.len() as f64 * tail_fraction).ceil() as usize).clamp(1, curve.len());
    let tail = &curve.points()[curve.len() - n..];
    let mut ys: Vec<f64> = tail.iter().map(|p| p.y_mean).collect();
    ys.sort_by(f64::total_cmp);
    let level = if n % 2 == 1 {
        ys[n / 2]
    } else {
        0.5 * (ys[n / 2 - 1] + ys[n / 2])
    };
    let tail_slope = if n >= 2 && tail.iter().all(|p| p.y_mean > 0.0) {
        let (lx, ly) = log_points(tail)?;
        Some(line(&lx, &ly).0)
    } else {
        None
    };
    Ok(PlateauEstimate {
        level,
        tail_slope,
        n_points: n,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossoverShape {
    /// Flat, then a power-law decay (grokking).
    PlateauThenDecay,
    /// Power-law decay that saturates (tail cut).
    DecayThenPlateau,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CrossoverFit {
    pub shape: CrossoverShape,
    pub plateau_level: f64,
    /// Where the fitted power law meets the plateau.
    pub crossover_x: f64,
    /// Slope after the crossover (≈ 0 for `DecayThenPlateau`).
    pub late_exponent: f64,
    /// Slope of the power-law segment.
    pub decay_exponent: f64,
}

const DECAY_SLOPE: f64 = -0.1;
const FLAT_SLOPE: f64 = -0.05;

/// Two-segment fit: a flat segment at the plateau and a power law, split where the
/// squared log-residuals are smallest. The crossover is the intersection of the two.
pub fn crossover_detect(curve: &ScalingCurve, plateau_hint: Option<f64>) -> Result<CrossoverFit> {
    let m = curve.len();
    if m < 5 {
        return Err(Error::InsufficientPoints { needed: 5, got: m });
    }
    let (lx, ly) = log_points(curve.points())?;
    let w = (m / 5).max(3);
    let slopes: Vec<f64> = (0..=m - w).map(|s| line(&lx[s..s + w], &ly[s..s + w]).0).collect();
    let tail_slope = *slopes.last().unwrap();
    let before_tail = &slopes[..slopes.len() - 1];
    let shape = if tail_slope < DECAY_SLOPE && before_tail.iter().any(|&s| s > FLAT_SLOPE) {
        CrossoverShape::PlateauThenDecay
    } else if tail_slope > FLAT_SLOPE && before_tail.iter().any(|&s| s < DECAY_SLOPE) {
        CrossoverShape::DecayThenPlateau
    } else {
        return Err(Error::NoCrossover(format!(
            "tail slope {tail_slope:.3}, window slopes in [{:.3}, {:.3}]",
            slopes.iter().copied().fold(f64::INFINITY, f64::min),
            slopes.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        )));
    };
    let hint = plateau_hint.filter(|h| *h > 0.0).map(f64::ln);
    let mut best: Option<(f64, f64, f64, f64)> = None;
    for split in 2..=m - 2 {
        let (flat, decay) = match shape {
            CrossoverShape::PlateauThenDecay => (0..split, split..m),
            CrossoverShape::DecayThenPlateau => (split..m, 0..split),
        };
        let level = hint.unwrap_or_else(|| ly[flat.clone()].iter().sum::<f64>() / flat.len() as f64);
        let (slope, intercept, _) = line(&lx[decay.clone()], &ly[decay.clone()]);
        if slope >= 0.0 {
            continue;
        }
        let sse: f64 = flat.clone().map(|j| (ly[j] - level).powi(2)).sum::<f64>()
            + decay.map(|j| (ly[j] - intercept - slope * lx[j]).powi(2)).sum::<f64>();
        if best.is_none_or(|b| sse < b.0) {
            best = Some((sse, level, slope, intercept));
        }
    }
    let (_, level, slope, intercept) =
        best.ok_or_else(|| Error::NoCrossover("no split with a decaying segment".into()))?;
    let log_cross = ((level - intercept) / slope).clamp(lx[0], lx[m - 1]);
    let flat_exponent = match shape {
        CrossoverShape::PlateauThenDecay => slope,
        CrossoverShape::DecayThenPlateau => tail_slope,
    };
    Ok(CrossoverFit {
        shape,
        plateau_level: level.exp(),
        crossover_x: log_cross.exp(),
        late_exponent: flat_exponent,
        decay_exponent: slope,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LinearityFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// The per-generation statistic `mean(y · x^c)` over the window.
    pub n_points: usize,
}

/// Regress `mean_window(y · x^c)` on the generation index `n`.
///
/// `curves` pairs each generation index with its curve.
pub fn linearity_in_n(
    curves: &[(f64, &ScalingCurve)],
    window: Option<(f64, f64)>,
    c: f64,
) -> Result<(LinearityFit, Vec<f64>)> {
    if curves.len() < 3 {
        return Err(Error::InsufficientPoints {
            needed: 3,
            got: curves.len(),
        });
    }
    let mut stats = Vec::with_capacity(curves.len());
    for (_, curve) in curves {
        let pts = curve.in_window(window);
        if pts.is_empty() {
            return Err(Error::Empty("window of a generation curve"));
        }
        stats.push(pts.iter().map(|p| p.y_mean * p.x.powf(c)).sum::<f64>() / pts.len() as f64);
    }
    let ns: Vec<f64> = curves.iter().map(|(n, _)| *n).collect();
    let (slope, intercept, r_squared) = line(&ns, &stats);
    Ok((
        LinearityFit {
            slope,
            intercept,
            r_squared,
            n_points: ns.len(),
        },
        stats,
    ))
}

/// `n` points per decade from `lo` to `hi` inclusive, rounded to integers and deduplicated.
pub fn geometric_grid(lo: f64, hi: f64, per_decade: usize) -> Result<Vec<u64>> {
    if !(lo >= 1.0 && hi >= lo) {
        return Err(invalid("grid", format!("need 1 <= lo <= hi, got [{lo}, {hi}]")));
    }
    if per_decade == 0 {
        return Err(invalid("per_decade", "must be positive"));
    }
    let decades = (hi / lo).log10();
    let steps = (decades * per_decade as f64).round() as usize;
    let mut grid: Vec<u64> = (0..=steps)
        .map(|s| {
            let frac = if steps == 0 { 0.0 } else { s as f64 / steps as f64 };
            (lo * (hi / lo).powf(frac)).round() as u64
        })
        .collect();
    grid.dedup();
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn curve_of(f: impl Fn(f64) -> f64, xs: &[f64]) -> ScalingCurve {
        let mut c = ScalingCurve::new("synthetic");
        for &x in xs {
            c.push(x, f(x), 0.0).unwrap();
        }
        c
    }

    fn log_grid(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
        geometric_grid(lo, hi, per_decade).unwrap().into_iter().map(|v| v as f64).collect()
    }

    #[test]
    fn exact_power_laws() {
        let c = curve_of(|x| x.powf(-0.5), &[10.0, 100.0, 1000.0]);
        let fit = loglog_fit(&c, None).unwrap();
        assert!((fit.exponent + 0.5).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);

        let c = curve_of(|_| 0.3, &[1.0, 2.0, 5.0, 9.0]);
        let fit = loglog_fit(&c, None).unwrap();
        assert_eq!(fit.exponent, 0.0);

        let xs: Vec<f64> = (0..=20).map(|j| 10f64.powf(j as f64 / 4.0)).collect();
        let c = curve_of(|x| 3.0 * x.powf(-1.0 / 3.0), &xs);
        let fit = loglog_fit(&c, None).unwrap();
        assert!((fit.exponent + 1.0 / 3.0).abs() < 1e-12);
        assert!((fit.log_amplitude - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn fit_errors() {
        let c = curve_of(|x| 1.0 / x, &[1.0, 2.0]);
        assert!(matches!(loglog_fit(&c, None), Err(Error::InsufficientPoints { .. })));
        let c = curve_of(|_| 0.0, &[1.0, 2.0, 3.0]);
        assert!(loglog_fit(&c, None).is_err());
        let mut c = ScalingCurve::new("x");
        c.push(2.0, 1.0, 0.0).unwrap();
        assert!(c.push(2.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn weighted_fit_handles_zero_stderr() {
        let mut c = ScalingCurve::new("w");
        for (j, x) in [10.0, 100.0, 1000.0, 10000.0].iter().enumerate() {
            c.push(*x, x.powf(-0.5), if j == 0 { 0.0 } else { 0.01 * x.powf(-0.5) }).unwrap();
        }
        let fit = loglog_fit_weighted(&c, None).unwrap();
        assert!((fit.exponent + 0.5).abs() < 1e-12);
        assert!(fit.r_squared.is_finite());
    }

    #[test]
    fn plateau_examples() {
        let c = curve_of(|_| 0.1, &log_grid(1.0, 1e4, 4));
        assert!((plateau_level(&c, 0.25).unwrap().level - 0.1).abs() < 1e-15);

        let xs = log_grid(10.0, 1e8, 4);
        let c = curve_of(|x| x.powf(-0.5).max(0.01), &xs);
        let est = plateau_level(&c, 0.3).unwrap();
        assert!((est.level - 0.01).abs() < 1e-12);
        assert!(est.tail_slope.unwrap().abs() < 1e-12);

        let c = curve_of(|x| 1.0 / x, &log_grid(1.0, 1e4, 2));
        let est = plateau_level(&c, 0.5).unwrap();
        assert!(est.tail_slope.unwrap() < -0.9);
        assert!(plateau_level(&c, 0.0).is_err());
        assert!(plateau_level(&c, 0.6).is_err());
    }

    #[test]
    fn crossover_of_grokking_shape() {
        let xs = log_grid(1e2, 1e8, 5);
        let c = curve_of(|x| (0.01 * x).powf(-0.5).min(0.1), &xs);
        let fit = crossover_detect(&c, None).unwrap();
        assert_eq!(fit.shape, CrossoverShape::PlateauThenDecay);
        let step = 10f64.powf(0.2);
        assert!(fit.crossover_x > 1e4 / step && fit.crossover_x < 1e4 * step, "{}", fit.crossover_x);
        assert!((fit.late_exponent + 0.5).abs() < 1e-9);
        assert!((fit.plateau_level - 0.1).abs() < 1e-9);
    }

    #[test]
    fn crossover_of_saturating_shape() {
        let xs = log_grid(1e1, 1e7, 5);
        let c = curve_of(|x| x.powf(-1.0 / 3.0).max(0.05), &xs);
        let fit = crossover_detect(&c, None).unwrap();
        assert_eq!(fit.shape, CrossoverShape::DecayThenPlateau);
        assert!((fit.crossover_x / 8000.0 - 1.0).abs() < 1e-6, "{}", fit.crossover_x);
        assert!((fit.decay_exponent + 1.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn no_crossover_for_pure_shapes() {
        let xs = log_grid(1.0, 1e6, 4);
        assert!(matches!(crossover_detect(&curve_of(|x| x.powf(-0.4), &xs), None), Err(Error::NoCrossover(_))));
        assert!(matches!(crossover_detect(&curve_of(|_| 0.2, &xs), None), Err(Error::NoCrossover(_))));
    }

    #[test]
    fn crossover_tracks_mixture_fraction() {
        let xs = log_grid(1e1, 1e9, 10);
        let step = 10f64.powf(0.1);
        for &pi in &[1e-3, 2e-3, 4e-3, 8e-3, 1.6e-2] {
            let a = crossover_detect(&curve_of(|x| (pi * x).powf(-0.5).min(0.1), &xs), None).unwrap();
            let b = crossover_detect(&curve_of(|x| (2.0 * pi * x).powf(-0.5).min(0.1), &xs), None).unwrap();
            let ratio = a.crossover_x / b.crossover_x;
            assert!(ratio > 2.0 / step && ratio < 2.0 * step, "pi={pi}: ratio {ratio}");
        }
    }

    #[test]
    fn linearity_examples() {
        let xs = log_grid(1e2, 1e5, 3);
        let c = 1.0 / 3.0;
        let curves: Vec<ScalingCurve> = (0..6).map(|g| curve_of(|x| (g as f64 + 1.0) * x.powf(-c), &xs)).collect();
        let pairs: Vec<(f64, &ScalingCurve)> = curves.iter().enumerate().map(|(g, cv)| (g as f64, cv)).collect();
        let (fit, _) = linearity_in_n(&pairs, None, c).unwrap();
        assert!((fit.slope - 1.0).abs() < 1e-9);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);

        let same: Vec<(f64, &ScalingCurve)> = (0..4).map(|g| (g as f64, &curves[0])).collect();
        assert!(linearity_in_n(&same, None, c).unwrap().0.slope.abs() < 1e-12);
        assert!(linearity_in_n(&pairs[..2], None, c).is_err());
    }

    #[test]
    fn linearity_with_multiplicative_noise() {
        use rand::Rng;
        use rand_distr::StandardNormal;
        let mut rng = crate::rng::RngStream::new(11, 0);
        let xs = log_grid(1e2, 1e5, 3);
        let c = 0.5;
        // 20 trials averaged per point, each with 5% multiplicative noise.
        let curves: Vec<ScalingCurve> = (1..=5)
            .map(|g| {
                let mut cv = ScalingCurve::new("noisy");
                for &x in &xs {
                    let mean = (0..20)
                        .map(|_| (g as f64 + 1.0) * x.powf(-c) * (1.0 + 0.05 * rng.sample::<f64, _>(StandardNormal)))
                        .sum::<f64>()
                        / 20.0;
                    cv.push(x, mean, 0.0).unwrap();
                }
                cv
            })
            .collect();
        let pairs: Vec<(f64, &ScalingCurve)> = curves.iter().enumerate().map(|(g, cv)| (g as f64 + 1.0, cv)).collect();
        let (fit, _) = linearity_in_n(&pairs, None, c).unwrap();
        assert!(fit.r_squared >= 0.9, "{fit:?}");
    }

    #[test]
    fn grids() {
        assert_eq!(geometric_grid(100.0, 1e4, 2).unwrap(), vec![100, 316, 1000, 3162, 10000]);
        assert_eq!(geometric_grid(5.0, 5.0, 3).unwrap(), vec![5]);
        assert!(geometric_grid(0.0, 10.0, 3).is_err());
        assert!(geometric_grid(10.0, 1.0, 3).is_err());
    }

    proptest! {
        #[test]
        fn fit_is_scale_equivariant(slope in -2.0f64..0.5, amp in 0.01f64..100.0, ys in 0.1f64..10.0, xsc in 0.1f64..10.0, noise in prop::collection::vec(-0.2f64..0.2, 8)) {
            let xs: Vec<f64> = (0..8).map(|j| 10f64.powf(1.0 + j as f64 * 0.5)).collect();
            let make = |xscale: f64, yscale: f64| {
                let mut c = ScalingCurve::new("p");
                for (x, e) in xs.iter().zip(&noise) {
                    c.push(x * xscale, yscale * amp * x.powf(slope) * e.exp(), 0.0).unwrap();
                }
                c
            };
            let base = loglog_fit(&make(1.0, 1.0), None).unwrap();
            let ysc = loglog_fit(&make(1.0, ys), None).unwrap();
            let xsc_fit = loglog_fit(&make(xsc, 1.0), None).unwrap();
            prop_assert!((base.exponent - ysc.exponent).abs() < 1e-9);
            prop_assert!((ysc.log_amplitude - base.log_amplitude - ys.ln()).abs() < 1e-9);
            prop_assert!((base.exponent - xsc_fit.exponent).abs() < 1e-9);
            prop_assert!((base.r_squared - xsc_fit.r_squared).abs() < 1e-9);
            prop_assert!(base.exponent.is_finite() && base.r_squared.is_finite());
        }
    }
}
