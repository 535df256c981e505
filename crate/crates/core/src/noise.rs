//! Brownian increments on a dyadic grid.
//!
//! A [`BrownianLattice`] holds `2^fine_level` increments of step
//! `h = T 2^-fine_level`. Coarser grids are obtained by summing consecutive
//! blocks, so every level sees the same Brownian path.
//!
//! Draws come from a ChaCha8 stream: the seed selects the key, the path index
//! selects the stream and the step index selects the word position. Any
//! increment can be regenerated on its own, so results do not depend on how
//! paths are distributed across threads. Uniforms are mapped to Gaussians by
//! the inverse normal CDF, which consumes exactly one uniform per draw.

use std::io::{self, Read, Write};

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use statrs::function::erf::erfc_inv;
use thiserror::Error;

pub const MAX_FINE_LEVEL: u32 = 24;

/// Reference level used in the convergence experiments (`h = 2^-14 T`).
pub const DEFAULT_FINE_LEVEL: u32 = 14;

#[derive(Debug, Error)]
pub enum NoiseError {
    #[error("fine level {0} exceeds the maximum of {MAX_FINE_LEVEL}")]
    LevelTooDeep(u32),
    #[error("requested level {requested} is finer than the lattice level {available}")]
    LevelMismatch { requested: u32, available: u32 },
    #[error("horizon must be finite and positive, got {0}")]
    NonPositiveHorizon(f64),
    #[error("lattice i/o: {0}")]
    Io(#[from] io::Error),
}

/// Map the top 53 bits of `bits` into the open interval (0, 1).
#[inline]
fn open_unit(bits: u64) -> f64 {
    ((bits >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal quantile.
#[inline]
pub fn standard_normal_quantile(u: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * u)
}

/// Stateless source of standard normal draws keyed by `(seed, path, step)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CounterNormals {
    seed: u64,
}

impl CounterNormals {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    fn stream(&self, path_index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(path_index);
        rng
    }

    /// Draw number `step` of path `path_index`.
    pub fn draw(&self, path_index: u64, step: u64) -> f64 {
        let mut rng = self.stream(path_index);
        // one u64 spans two 32-bit words
        rng.set_word_pos(2 * step as u128);
        standard_normal_quantile(open_unit(rng.next_u64()))
    }

    /// Fills `out` with draws `0..out.len()` of `path_index`, scaled by `scale`.
    pub fn fill(&self, path_index: u64, scale: f64, out: &mut [f64]) {
        let mut rng = self.stream(path_index);
        for slot in out.iter_mut() {
            *slot = scale * standard_normal_quantile(open_unit(rng.next_u64()));
        }
    }
}

/// Fine-grid Brownian increments for one path.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianLattice {
    seed: u64,
    path_index: u64,
    horizon: f64,
    fine_level: u32,
    increments: Vec<f64>,
}

impl BrownianLattice {
    pub fn generate(
        seed: u64,
        path_index: u64,
        horizon: f64,
        fine_level: u32,
    ) -> Result<Self, NoiseError> {
        if fine_level > MAX_FINE_LEVEL {
            return Err(NoiseError::LevelTooDeep(fine_level));
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(NoiseError::NonPositiveHorizon(horizon));
        }
        let mut increments = vec![0.0; 1usize << fine_level];
        let h = step_size(horizon, fine_level);
        CounterNormals::new(seed).fill(path_index, h.sqrt(), &mut increments);
        Ok(Self {
            seed,
            path_index,
            horizon,
            fine_level,
            increments,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path_index(&self) -> u64 {
        self.path_index
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn fine_level(&self) -> u32 {
        self.fine_level
    }

    /// Variance of each fine increment, `T 2^-fine_level`.
    pub fn step(&self) -> f64 {
        step_size(self.horizon, self.fine_level)
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    /// `W_T`, summed left to right over the fine increments.
    pub fn terminal_value(&self) -> f64 {
        self.increments.iter().sum()
    }

    /// Increments on the grid with `2^level` steps.
    pub fn coarsen(&self, level: u32) -> Result<Vec<f64>, NoiseError> {
        let mut out = Vec::new();
        self.coarsen_into(level, &mut out)?;
        Ok(out)
    }

    /// Like [`coarsen`](Self::coarsen) but reuses `out`.
    pub fn coarsen_into(&self, level: u32, out: &mut Vec<f64>) -> Result<(), NoiseError> {
        if level > self.fine_level {
            return Err(NoiseError::LevelMismatch {
                requested: level,
                available: self.fine_level,
            });
        }
        let block = 1usize << (self.fine_level - level);
        out.clear();
        out.extend(
            self.increments
                .chunks_exact(block)
                .map(|chunk| chunk.iter().sum::<f64>()),
        );
        Ok(())
    }

    /// Writes the little-endian dump: `seed, path_index, T, fine_level` as
    /// 64-bit fields, then the increments as 64-bit floats.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), NoiseError> {
        w.write_all(&self.seed.to_le_bytes())?;
        w.write_all(&self.path_index.to_le_bytes())?;
        w.write_all(&self.horizon.to_le_bytes())?;
        w.write_all(&u64::from(self.fine_level).to_le_bytes())?;
        for x in &self.increments {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, NoiseError> {
        let mut word = [0u8; 8];
        let mut next = |r: &mut R| -> io::Result<[u8; 8]> {
            r.read_exact(&mut word)?;
            Ok(word)
        };
        let seed = u64::from_le_bytes(next(&mut r)?);
        let path_index = u64::from_le_bytes(next(&mut r)?);
        let horizon = f64::from_le_bytes(next(&mut r)?);
        let level = u64::from_le_bytes(next(&mut r)?);
        if level > u64::from(MAX_FINE_LEVEL) {
            return Err(NoiseError::LevelTooDeep(
                level.min(u64::from(u32::MAX)) as u32
            ));
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(NoiseError::NonPositiveHorizon(horizon));
        }
        let fine_level = level as u32;
        let mut increments = Vec::with_capacity(1usize << fine_level);
        for _ in 0..(1usize << fine_level) {
            increments.push(f64::from_le_bytes(next(&mut r)?));
        }
        Ok(Self {
            seed,
            path_index,
            horizon,
            fine_level,
            increments,
        })
    }
}

/// `T 2^-level`, exact for any representable `T`.
pub fn step_size(horizon: f64, level: u32) -> f64 {
    horizon * 2f64.powi(-(level as i32))
}
