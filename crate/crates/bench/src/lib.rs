//! Shared fixtures for the criterion benchmarks.

use lineclust_core::{builtin, generate, Dataset};

/// Deterministic dataset for one of the built-in scenarios.
pub fn fixture(name: &str, seed: u64) -> Dataset {
    let spec = builtin(name).expect("known scenario").with_seed(seed);
    generate(&spec).expect("generation succeeds")
}
