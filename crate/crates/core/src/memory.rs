//! Capacity-limited associative memory `M = Σ_i q_i e_i u_{f(i)}ᵀ` with argmax readout.
//!
//! The `d × d` matrix is kept in factored form: `W = Σ_i q_i e_i 1_{f(i)}ᵀ` (`d × m`) and
//! the output Gram matrix `G = UᵀU` (`m × m`), so that `M = W Uᵀ` and the scores of
//! context `i` are `e_iᵀ W G`. Assembly is `O(N d)` and scoring all contexts is one
//! `N × d × m` product.

use std::sync::Arc;

use ndarray::{s, Array1, Array2, ArrayView1, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::distributions::{stable_sum, truncate_tail, zipf_pmf, Categorical, PowerLawSpec, SampleCounts, Sampler};
use crate::error::{ensure_same_support, invalid, Result};
use crate::fitting::ScalingCurve;
use crate::rng::RngStream;
use crate::trials::{trial_stream, Runner, TrialStats};

/// The two named update rules.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    /// `q_i = n_i / T`.
    Counting,
    /// `q_i = 1[n_i ≥ 1] / #seen`.
    Thresholded,
}

/// Weighting of the stored pairs. `Custom` maps `(n_i, T)` to an unnormalized weight.
#[derive(Clone, Copy, Debug)]
pub enum UpdateRule {
    Counting,
    Thresholded,
    Custom(fn(u64, u64) -> f64),
}

impl From<RuleKind> for UpdateRule {
    fn from(kind: RuleKind) -> Self {
        match kind {
            RuleKind::Counting => Self::Counting,
            RuleKind::Thresholded => Self::Thresholded,
        }
    }
}

impl UpdateRule {
    /// Normalized weights `q`; all zeros when nothing was seen.
    pub fn weights(&self, counts: &SampleCounts) -> Vec<f64> {
        let total = counts.total();
        let raw: Vec<f64> = counts
            .counts()
            .iter()
            .map(|&n| match self {
                Self::Counting => n as f64,
                Self::Thresholded => {
                    if n > 0 {
                        1.0
                    } else {
                        0.0
                    }
                }
                Self::Custom(f) => f(n, total),
            })
            .collect();
        let sum = stable_sum(raw.iter().copied());
        if sum > 0.0 {
            raw.iter().map(|w| w / sum).collect()
        } else {
            vec![0.0; raw.len()]
        }
    }
}

/// Ground-truth labels `f*(i) ∈ 0..m`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroundTruth {
    classes: usize,
    labels: Vec<usize>,
}

impl GroundTruth {
    /// `f*(i) = i mod m` (0-based).
    pub fn modulo(n: usize, m: usize) -> Result<Self> {
        if m == 0 {
            return Err(invalid("m", "need at least one class"));
        }
        Ok(Self {
            classes: m,
            labels: (0..n).map(|i| i % m).collect(),
        })
    }

    pub fn from_table(m: usize, labels: Vec<usize>) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&l| l >= m) {
            return Err(invalid("labels", format!("label {bad} outside 0..{m}")));
        }
        Ok(Self { classes: m, labels })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn contexts(&self) -> usize {
        self.labels.len()
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingMode {
    /// Normalized isotropic Gaussian vectors.
    RandomSphere,
    /// Standard basis vectors; needs `d ≥ max(N, m)`.
    Orthonormal,
}

/// Input vectors `e_i` (rows of an `N × d` array) and output vectors `u_y` (`m × d`).
#[derive(Clone, Debug)]
pub struct EmbeddingSet {
    inputs: Array2<f64>,
    outputs: Array2<f64>,
    mode: EmbeddingMode,
}

fn random_unit_rows(rows: usize, d: usize, rng: &mut RngStream) -> Array2<f64> {
    let mut a = Array2::from_shape_simple_fn((rows, d), || rng.sample::<f64, _>(StandardNormal));
    for mut row in a.rows_mut() {
        let norm = row.dot(&row).sqrt();
        if norm > 0.0 {
            row /= norm;
        } else {
            row[0] = 1.0;
        }
    }
    a
}

pub fn make_embeddings(n: usize, m: usize, d: usize, mode: EmbeddingMode, seed: u64) -> Result<EmbeddingSet> {
    make_embeddings_from(n, m, d, mode, &mut RngStream::keyed(seed, &[0x454d_4245_4444]))
}

/// As [`make_embeddings`], drawing from an existing stream.
pub fn make_embeddings_from(n: usize, m: usize, d: usize, mode: EmbeddingMode, rng: &mut RngStream) -> Result<EmbeddingSet> {
    if d == 0 {
        return Err(invalid("d", "embedding dimension must be positive"));
    }
    if n == 0 || m == 0 {
        return Err(invalid("N", "need at least one context and one class"));
    }
    let (inputs, outputs) = match mode {
        EmbeddingMode::Orthonormal => {
            if d < n.max(m) {
                return Err(invalid("d", format!("orthonormal embeddings need d >= max(N, m) = {}, got {d}", n.max(m))));
            }
            (Array2::eye(d).slice(s![..n, ..]).to_owned(), Array2::eye(d).slice(s![..m, ..]).to_owned())
        }
        EmbeddingMode::RandomSphere => (random_unit_rows(n, d, rng), random_unit_rows(m, d, rng)),
    };
    Ok(EmbeddingSet { inputs, outputs, mode })
}

impl EmbeddingSet {
    pub fn dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn contexts(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn classes(&self) -> usize {
        self.outputs.nrows()
    }

    pub fn mode(&self) -> EmbeddingMode {
        self.mode
    }

    pub fn input(&self, i: usize) -> ArrayView1<'_, f64> {
        self.inputs.row(i)
    }

    pub fn output(&self, y: usize) -> ArrayView1<'_, f64> {
        self.outputs.row(y)
    }
}

/// A trained memory.
#[derive(Clone, Debug)]
pub struct MemoryModel {
    /// `d × m` class-aggregated keys.
    w: Array2<f64>,
    /// `m × m` Gram matrix of the output vectors.
    gram: Array2<f64>,
    weights: Vec<f64>,
    embeddings: Arc<EmbeddingSet>,
    truth: Arc<GroundTruth>,
}

pub fn train_memory(
    counts: &SampleCounts,
    truth: Arc<GroundTruth>,
    embeddings: Arc<EmbeddingSet>,
    rule: UpdateRule,
) -> Result<MemoryModel> {
    ensure_same_support(counts.support_size(), embeddings.contexts())?;
    ensure_same_support(truth.contexts(), embeddings.contexts())?;
    ensure_same_support(truth.classes(), embeddings.classes())?;
    let weights = rule.weights(counts);
    let d = embeddings.dim();
    let m = truth.classes();
    let mut w = Array2::<f64>::zeros((d, m));
    for (i, &q) in weights.iter().enumerate() {
        if q > 0.0 {
            w.column_mut(truth.label(i)).scaled_add(q, &embeddings.input(i));
        }
    }
    let gram = embeddings.outputs.dot(&embeddings.outputs.t());
    Ok(MemoryModel {
        w,
        gram,
        weights,
        embeddings,
        truth,
    })
}

fn argmax_lowest(scores: ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (y, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = y;
        }
    }
    best
}

impl MemoryModel {
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn truth(&self) -> &GroundTruth {
        &self.truth
    }

    /// The dense `d × d` matrix `Σ_i q_i e_i u_{f(i)}ᵀ`.
    pub fn matrix(&self) -> Array2<f64> {
        self.w.dot(&self.embeddings.outputs)
    }

    /// The same memory with `M` multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.w *= factor;
        out
    }

    /// Bilinear scores `e_iᵀ M u_y` for all labels.
    pub fn scores(&self, i: usize) -> Array1<f64> {
        self.embeddings.input(i).dot(&self.w).dot(&self.gram)
    }

    /// `argmax_y e_iᵀ M u_y`, ties to the lowest label.
    pub fn predict(&self, i: usize) -> usize {
        argmax_lowest(self.scores(i).view())
    }

    pub fn predict_all(&self) -> Vec<usize> {
        let scores = self.embeddings.inputs.dot(&self.w).dot(&self.gram);
        scores.axis_iter(Axis(0)).map(argmax_lowest).collect()
    }

    /// `Σ_i p_i 1[f(i) ≠ f*(i)]`.
    pub fn population_error(&self, p: &Categorical) -> Result<f64> {
        ensure_same_support(p.support_size(), self.truth.contexts())?;
        let predictions = self.predict_all();
        Ok(stable_sum(
            p.probs()
                .iter()
                .zip(&predictions)
                .enumerate()
                .filter(|(i, (_, &y))| y != self.truth.label(*i))
                .map(|(_, (&pi, _))| pi),
        ))
    }
}

pub fn population_error(model: &MemoryModel, p: &Categorical) -> Result<f64> {
    model.population_error(p)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    T,
    D,
    K,
}

/// Fixed values of the triplet `(T, d, k)`; the swept one is ignored.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TripletConfig {
    pub beta: f64,
    pub contexts: usize,
    pub classes: usize,
    pub t: u64,
    pub d: usize,
    pub k: usize,
    pub rule: RuleKind,
    pub embedding: EmbeddingMode,
}

impl TripletConfig {
    pub fn validate(&self) -> Result<()> {
        PowerLawSpec::new(self.beta, self.contexts)?;
        if self.classes == 0 {
            return Err(invalid("m", "need at least one class"));
        }
        if self.k == 0 || self.k > self.contexts {
            return Err(invalid("k", format!("cutoff {} outside 1..={}", self.k, self.contexts)));
        }
        if self.d == 0 {
            return Err(invalid("d", "embedding dimension must be positive"));
        }
        if self.t == 0 {
            return Err(invalid("T", "sample size must be positive"));
        }
        if self.embedding == EmbeddingMode::Orthonormal && self.d < self.contexts.max(self.classes) {
            return Err(invalid("d", "orthonormal embeddings need d >= max(N, m)"));
        }
        Ok(())
    }
}

const SALT_TRIPLET: u64 = 0x5452_4950_4c45_5400;

/// Error curve of the memory along one of the `(T, d, k)` axes.
///
/// The cutoff truncates the training distribution only; testing is always on the full
/// Zipf law. For the `T` and `k` axes each trial draws one embedding set and reuses it
/// across the grid; for the `d` axis every `(d, trial)` gets its own.
pub fn triplet_sweep(
    config: &TripletConfig,
    axis: SweepAxis,
    grid: &[u64],
    trials: usize,
    seed: u64,
    runner: &Runner,
) -> Result<ScalingCurve> {
    config.validate()?;
    if grid.is_empty() || grid[0] == 0 || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("grid", "grid must be non-empty, positive and strictly increasing"));
    }
    if trials == 0 {
        return Err(invalid("trials", "need at least one trial"));
    }
    let spec = PowerLawSpec::new(config.beta, config.contexts)?;
    let p = zipf_pmf(&spec)?;
    let truth = Arc::new(GroundTruth::modulo(config.contexts, config.classes)?);
    let rule = UpdateRule::from(config.rule);
    for &g in grid {
        let mut probe = *config;
        match axis {
            SweepAxis::T => probe.t = g,
            SweepAxis::D => probe.d = g as usize,
            SweepAxis::K => probe.k = g as usize,
        }
        probe.validate()?;
    }

    let per_trial: Vec<Vec<f64>> = match axis {
        SweepAxis::D => {
            let train = Sampler::new(&truncate_tail(&p, config.k)?)?;
            let flat = runner.grid(grid.len(), trials, |point, trial| {
                let mut rng = trial_stream(seed, SALT_TRIPLET ^ 0xd, point, trial);
                let emb = make_embeddings_from(config.contexts, config.classes, grid[point] as usize, config.embedding, &mut rng)?;
                let counts = train.counts(config.t, &mut rng);
                train_memory(&counts, truth.clone(), Arc::new(emb), rule)?.population_error(&p)
            })?;
            // Transpose to trial-major for the shared reduction below.
            (0..trials).map(|t| flat.iter().map(|row| row[t]).collect()).collect()
        }
        SweepAxis::T | SweepAxis::K => runner.map(trials, |trial| {
            let mut rng = trial_stream(seed, SALT_TRIPLET ^ axis as u64, 0, trial);
            let emb = Arc::new(make_embeddings_from(config.contexts, config.classes, config.d, config.embedding, &mut rng)?);
            let fixed_train = Sampler::new(&truncate_tail(&p, config.k)?)?;
            grid.iter()
                .map(|&g| {
                    let counts = match axis {
                        SweepAxis::T => fixed_train.counts(g, &mut rng),
                        _ => Sampler::new(&truncate_tail(&p, g as usize)?)?.counts(config.t, &mut rng),
                    };
                    train_memory(&counts, truth.clone(), emb.clone(), rule)?.population_error(&p)
                })
                .collect()
        })?,
    };

    let tag = match axis {
        SweepAxis::T => "memory_t_sweep",
        SweepAxis::D => "memory_d_sweep",
        SweepAxis::K => "memory_k_sweep",
    };
    let mut curve = ScalingCurve::new(tag)
        .with_param("beta", config.beta)
        .with_param("N", config.contexts as f64)
        .with_param("m", config.classes as f64)
        .with_param("T", config.t as f64)
        .with_param("d", config.d as f64)
        .with_param("k", config.k as f64)
        .with_param("rule", if config.rule == RuleKind::Counting { 0.0 } else { 1.0 });
    for (j, &g) in grid.iter().enumerate() {
        let values: Vec<f64> = per_trial.iter().map(|t| t[j]).collect();
        let s = TrialStats::from_samples(&values)?;
        curve.push(g as f64, s.mean, s.stderr)?;
    }
    Ok(curve)
}
