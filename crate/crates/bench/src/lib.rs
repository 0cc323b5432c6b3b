//! Shared fixtures for the benchmarks.

use cssl_core::dataio::{synth_har, SynthConfig, Window};
use cssl_core::rng::stream;
use cssl_core::Tensor;

/// A `[n, 3, len]` batch of standard normal values.
pub fn batch(n: usize, len: usize, seed: u64) -> Tensor {
    Tensor::randn(&[n, 3, len], 1.0, &mut stream(seed, 0))
}

/// Labelled synthetic windows of classes 0 and 1.
pub fn two_class_task(windows_per_class: usize, seed: u64) -> Vec<Window> {
    let cfg = SynthConfig {
        n_classes: 2,
        n_subjects: 4,
        windows_per_class,
        ..SynthConfig::default()
    };
    synth_har(&cfg, seed).expect("synthetic data")
}
