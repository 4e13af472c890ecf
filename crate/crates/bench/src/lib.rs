//! Shared inputs for the benchmarks.

use emdtrack_core::synth::{generate_synthetic, SyntheticSceneSpec, SyntheticSequence};

/// The default synthetic square sequence, truncated to `frames`.
pub fn square_sequence(frames: usize) -> SyntheticSequence {
    let spec = SyntheticSceneSpec { frames, ..Default::default() };
    generate_synthetic(&spec, 7).expect("default scene fits the canvas")
}
