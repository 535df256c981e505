//! Shared inputs for the benchmarks.

use ppsde_core::{BrownianLattice, ModelParams, Preset};

/// Parameters and one Brownian path at step `2^-level` on `[0, 1]`.
pub fn fixture(preset: Preset, level: u32, seed: u64) -> (ModelParams, Vec<f64>) {
    let lattice = BrownianLattice::generate(seed, 0, 1.0, level).expect("level within range");
    (preset.params(), lattice.increments().to_vec())
}
