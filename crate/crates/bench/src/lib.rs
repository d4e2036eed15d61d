//! Shared fixtures for the benchmarks.

use segconf::{generate, GeneratorConfig, GridDims, SamplePair};

/// Synthetic dataset on a cubic grid with default lesion and background
/// distributions.
pub fn dataset(side: usize, n: usize, seed: u64) -> Vec<SamplePair> {
    generate(&GeneratorConfig {
        dims: GridDims::new(side, side, side).expect("positive side"),
        n_samples: n,
        radius_range: [2.0, (side as f64 / 2.0 - 1.0).min(10.0)],
        seed,
        ..GeneratorConfig::default()
    })
    .expect("valid generator config")
}
