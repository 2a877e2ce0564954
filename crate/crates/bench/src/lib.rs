//! Shared fixtures for the benchmarks.

use tailcut_core::distributions::{zipf_pmf, PowerLawSpec};
use tailcut_core::Categorical;

pub fn zipf(beta: f64, n: usize) -> Categorical {
    zipf_pmf(&PowerLawSpec::new(beta, n).expect("valid spec")).expect("normalizable")
}
