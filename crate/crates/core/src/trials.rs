//! Deterministic parallel execution of `(curve point, trial)` tasks.
//!
//! Every task owns a random stream keyed by `(master seed, experiment salt, point, trial)`
//! and writes to its own result slot, so outputs never depend on the worker count.

use std::sync::Arc;

use rayon::prelude::*;
use rayon::{ThreadPool, ThreadPoolBuilder};
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::rng::RngStream;

/// Mean and standard error of the mean over independent trials.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TrialStats {
    pub mean: f64,
    pub stderr: f64,
    pub trials: usize,
}

impl TrialStats {
    /// A deterministic value (no sampling noise).
    pub fn exact(value: f64) -> Self {
        Self {
            mean: value,
            stderr: 0.0,
            trials: 0,
        }
    }

    pub fn from_samples(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("trial results"));
        }
        if values.iter().all(|v| v.to_bits() == values[0].to_bits()) {
            return Ok(Self {
                mean: values[0],
                stderr: 0.0,
                trials: values.len(),
            });
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let stderr = if values.len() < 2 {
            0.0
        } else {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        };
        Ok(Self {
            mean,
            stderr,
            trials: values.len(),
        })
    }

    /// `|mean − target| ≤ sigmas · stderr`, with a tiny absolute slack for exact cases.
    pub fn agrees_with(&self, target: f64, sigmas: f64) -> bool {
        (self.mean - target).abs() <= sigmas * self.stderr + 1e-12
    }
}

/// Stream for one task.
pub fn trial_stream(seed: u64, salt: u64, point: usize, trial: usize) -> RngStream {
    RngStream::keyed(seed, &[salt, point as u64, trial as u64])
}

/// A worker pool. `workers = 0` means one worker per available core.
#[derive(Clone)]
pub struct Runner {
    pool: Arc<ThreadPool>,
    workers: usize,
}

impl std::fmt::Debug for Runner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Runner").field("workers", &self.workers).finish()
    }
}

impl Runner {
    pub fn new(workers: usize) -> Result<Self> {
        let pool = ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| invalid("workers", format!("cannot build worker pool: {e}")))?;
        let workers = pool.current_num_threads();
        Ok(Self {
            pool: Arc::new(pool),
            workers,
        })
    }

    pub fn sequential() -> Self {
        Self::new(1).expect("a single-thread pool always builds")
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    /// `f(0..n)` in parallel, results in index order.
    pub fn map<T, F>(&self, n: usize, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(usize) -> Result<T> + Sync + Send,
    {
        self.pool.install(|| (0..n).into_par_iter().map(&f).collect())
    }

    /// Runs `f(point, trial)` over the full grid; `out[point][trial]`.
    pub fn grid<F>(&self, points: usize, trials: usize, f: F) -> Result<Vec<Vec<f64>>>
    where
        F: Fn(usize, usize) -> Result<f64> + Sync + Send,
    {
        let flat = self.map(points * trials, |task| f(task / trials, task % trials))?;
        Ok(flat.chunks(trials.max(1)).map(<[f64]>::to_vec).collect())
    }

    /// As [`Runner::grid`], reduced to per-point statistics.
    pub fn grid_stats<F>(&self, points: usize, trials: usize, f: F) -> Result<Vec<TrialStats>>
    where
        F: Fn(usize, usize) -> Result<f64> + Sync + Send,
    {
        if trials == 0 {
            return Err(invalid("trials", "need at least one trial"));
        }
        self.grid(points, trials, f)?
            .iter()
            .map(|v| TrialStats::from_samples(v))
            .collect()
    }
}

impl Default for Runner {
    fn default() -> Self {
        Self::new(0).expect("default pool")
    }
}
