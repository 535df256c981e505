//! Multilevel Monte Carlo for `E[P(X_T)]`.
//!
//! Level `l` uses step `T 2^-l`. The first level estimates `E[P_lmin]`; every
//! other level estimates `E[P_l - P_(l-1)]` from one lattice at level `l`,
//! driving the fine scheme directly and the coarse scheme through its
//! pairwise-summed increments. Sample sizes follow the usual variance-optimal
//! allocation and levels are added until a weak-order-one extrapolation of
//! the bias falls below `target / sqrt(2)`.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use super::{for_each_path, McError};
use crate::model::{validate, ModelParams};
use crate::noise::{step_size, BrownianLattice};
use crate::schemes::{NewtonSettings, SchemeError, SchemeKind, Stepper};
use crate::taming::TamingConfig;

/// Payoff string that is not `identity`, `call:K` or `digital:K`.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("unknown payoff `{0}` (expected identity, call:K or digital:K)")]
pub struct UnknownPayoff(pub String);

/// Path functional evaluated at the terminal time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Payoff {
    /// `X_T`.
    Identity,
    /// `(X_T - K)^+`.
    Call { strike: f64 },
    /// `1{X_T > K}`.
    Digital { strike: f64 },
}

impl Payoff {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Payoff::Identity => x,
            Payoff::Call { strike } => (x - strike).max(0.0),
            Payoff::Digital { strike } => {
                if x > strike {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

impl FromStr for Payoff {
    type Err = UnknownPayoff;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || UnknownPayoff(s.to_string());
        let lower = s.trim().to_ascii_lowercase();
        if lower == "identity" {
            return Ok(Payoff::Identity);
        }
        let (kind, strike) = lower.split_once(':').ok_or_else(err)?;
        let strike: f64 = strike.trim().parse().map_err(|_| err())?;
        if !strike.is_finite() {
            return Err(err());
        }
        match kind.trim() {
            "call" => Ok(Payoff::Call { strike }),
            "digital" => Ok(Payoff::Digital { strike }),
            _ => Err(err()),
        }
    }
}

impl fmt::Display for Payoff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Payoff::Identity => write!(f, "identity"),
            Payoff::Call { strike } => write!(f, "call:{strike}"),
            Payoff::Digital { strike } => write!(f, "digital:{strike}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlmcConfig {
    pub params: ModelParams,
    pub horizon: f64,
    pub scheme: SchemeKind,
    pub payoff: Payoff,
    pub target_rmse: f64,
    pub seed: u64,
    pub alpha: f64,
    pub workers: usize,
    /// Coarsest level.
    pub min_level: u32,
    /// Finest level of the first pass.
    pub initial_max_level: u32,
    /// Adding a level beyond this fails with `BudgetExceeded`.
    pub max_level: u32,
    pub initial_samples: usize,
    /// Cap on the number of samples summed over all levels.
    pub max_total_samples: usize,
}

impl MlmcConfig {
    pub fn new(
        params: ModelParams,
        scheme: SchemeKind,
        payoff: Payoff,
        target_rmse: f64,
        seed: u64,
    ) -> Self {
        Self {
            params,
            horizon: 1.0,
            scheme,
            payoff,
            target_rmse,
            seed,
            alpha: 0.5,
            workers: 0,
            min_level: 2,
            initial_max_level: 4,
            max_level: 16,
            initial_samples: 1000,
            max_total_samples: 20_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelStats {
    pub level: u32,
    pub samples: usize,
    /// Mean of `P_l` (first level) or `P_l - P_(l-1)`.
    pub mean: f64,
    /// Sample variance of the same quantity.
    pub variance: f64,
    /// Steps per sample (fine plus coarse).
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MlmcResult {
    pub payoff: Payoff,
    pub scheme: SchemeKind,
    pub levels: Vec<LevelStats>,
    pub estimate: f64,
    /// Extrapolated squared bias (zero for fixed-schedule runs).
    pub bias_sq: f64,
    /// `sum_l V_l / N_l`.
    pub variance: f64,
    pub target_rmse: f64,
}

impl MlmcResult {
    pub fn std_error(&self) -> f64 {
        self.variance.sqrt()
    }

    pub fn rmse(&self) -> f64 {
        (self.bias_sq + self.variance).sqrt()
    }

    /// True when the correction variances decrease monotonically.
    /// `None` with fewer than three correction levels.
    pub fn variance_decreasing(&self) -> Option<bool> {
        let corrections = &self.levels[1.min(self.levels.len())..];
        if corrections.len() < 3 {
            return None;
        }
        Some(
            corrections
                .windows(2)
                .all(|w| w[1].variance < w[0].variance),
        )
    }
}

/// Running sums for one level, accumulated in sample order.
#[derive(Debug, Clone, Default)]
struct Accumulator {
    n: usize,
    sum: f64,
    sum_sq: f64,
}

impl Accumulator {
    fn push(&mut self, v: f64) {
        self.n += 1;
        self.sum += v;
        self.sum_sq += v * v;
    }

    fn mean(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.sum / self.n as f64
        }
    }

    fn variance(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        ((self.sum_sq - self.sum * self.sum / n) / (n - 1.0)).max(0.0)
    }
}

struct Sampler<'a> {
    cfg: &'a MlmcConfig,
    params: ModelParams,
    taming: TamingConfig,
}

/// Lattice path index for sample `i` of `level`; levels draw from disjoint streams.
fn path_key(level: u32, sample: u64) -> u64 {
    (u64::from(level) << 40) | sample
}

impl<'a> Sampler<'a> {
    fn new(cfg: &'a MlmcConfig) -> Result<Self, McError> {
        if !(cfg.target_rmse > 0.0) || !cfg.target_rmse.is_finite() {
            return Err(McError::InvalidTarget(cfg.target_rmse));
        }
        if cfg.scheme == SchemeKind::Em {
            return Err(McError::UnsupportedScheme(SchemeKind::Em));
        }
        let params = validate(cfg.params)?;
        let taming = TamingConfig::new(cfg.alpha, cfg.horizon).map_err(SchemeError::from)?;
        Ok(Self {
            cfg,
            params,
            taming,
        })
    }

    fn stepper(&self, level: u32) -> Result<Stepper, McError> {
        Ok(Stepper::with_step(
            &self.params,
            self.cfg.scheme,
            step_size(self.cfg.horizon, level),
            &self.taming,
            NewtonSettings::default(),
        )?)
    }

    fn terminal(
        &self,
        stepper: &Stepper,
        increments: &[f64],
        states: &mut Vec<f64>,
        path: u64,
    ) -> Result<f64, McError> {
        let summary = stepper.integrate_into(self.params.x0, increments, states);
        if let Some(stop) = summary.stopped {
            return Err(McError::PathFailed {
                path,
                step: stop.step,
                status: stop.status,
            });
        }
        Ok(self.cfg.payoff.eval(*states.last().expect("at least x0")))
    }

    /// Adds samples `acc.n .. acc.n + extra` of `level` to `acc`.
    fn sample(&self, level: u32, extra: usize, acc: &mut Accumulator) -> Result<(), McError> {
        let fine = self.stepper(level)?;
        let coarse = if level > self.cfg.min_level {
            Some(self.stepper(level - 1)?)
        } else {
            None
        };
        let work = |i: u64| -> Result<f64, McError> {
            let key = path_key(level, i);
            let lattice = BrownianLattice::generate(self.cfg.seed, key, self.cfg.horizon, level)?;
            let mut states = Vec::new();
            let p_fine = self.terminal(&fine, lattice.increments(), &mut states, key)?;
            match &coarse {
                None => Ok(p_fine),
                Some(c) => {
                    let increments = lattice.coarsen(level - 1)?;
                    Ok(p_fine - self.terminal(c, &increments, &mut states, key)?)
                }
            }
        };
        for_each_path(self.cfg.workers, acc.n as u64, extra, work, |_, v| {
            acc.push(v)
        })
    }
}

fn level_cost(level: u32, min_level: u32) -> f64 {
    let fine = (1u64 << level) as f64;
    if level > min_level {
        fine * 1.5
    } else {
        fine
    }
}

/// Adaptive MLMC estimate of `E[payoff(X_T)]` to root-mean-square error `target_rmse`.
pub fn mlmc_estimate(cfg: &MlmcConfig) -> Result<MlmcResult, McError> {
    let sampler = Sampler::new(cfg)?;
    if cfg.initial_max_level < cfg.min_level + 2 || cfg.max_level < cfg.initial_max_level {
        return Err(McError::InvalidInput(format!(
            "levels must satisfy min + 2 <= initial max <= max, got {} / {} / {}",
            cfg.min_level, cfg.initial_max_level, cfg.max_level
        )));
    }
    let eps = cfg.target_rmse;
    let mut levels: Vec<u32> = (cfg.min_level..=cfg.initial_max_level).collect();
    let mut accs: Vec<Accumulator> = vec![Accumulator::default(); levels.len()];
    let mut pending: Vec<usize> = vec![cfg.initial_samples; levels.len()];
    // variance guesses for levels that have no samples yet
    let mut guessed: Vec<Option<f64>> = vec![None; levels.len()];

    loop {
        let total: usize = accs.iter().map(|a| a.n).sum::<usize>() + pending.iter().sum::<usize>();
        if total > cfg.max_total_samples {
            return Err(McError::BudgetExceeded {
                target: eps,
                reason: format!("{total} samples needed, cap is {}", cfg.max_total_samples),
            });
        }
        for (i, &level) in levels.iter().enumerate() {
            if pending[i] > 0 {
                sampler.sample(level, pending[i], &mut accs[i])?;
                pending[i] = 0;
                guessed[i] = None;
            }
        }

        let variances: Vec<f64> = accs
            .iter()
            .zip(&guessed)
            .map(|(a, g)| g.unwrap_or_else(|| a.variance()))
            .collect();
        let costs: Vec<f64> = levels
            .iter()
            .map(|&l| level_cost(l, cfg.min_level))
            .collect();
        let weight: f64 = variances
            .iter()
            .zip(&costs)
            .map(|(v, c)| (v * c).sqrt())
            .sum();
        let mut any_pending = false;
        for i in 0..levels.len() {
            let optimal = (2.0 / (eps * eps) * (variances[i] / costs[i]).sqrt() * weight).ceil();
            let optimal = if optimal.is_finite() {
                optimal as usize
            } else {
                usize::MAX
            };
            let need = optimal.max(2).saturating_sub(accs[i].n);
            // ignore top-ups below 1% of the current count
            if need > accs[i].n / 100 {
                pending[i] = need;
                any_pending = true;
            }
        }
        if any_pending {
            continue;
        }

        let n = levels.len();
        let bias = accs[n - 1].mean().abs().max(accs[n - 2].mean().abs() / 2.0);
        if bias <= eps / std::f64::consts::SQRT_2 {
            return Ok(finish(cfg, &levels, &accs, bias * bias));
        }
        let next = levels[n - 1] + 1;
        if next > cfg.max_level {
            return Err(McError::BudgetExceeded {
                target: eps,
                reason: format!(
                    "bias estimate {bias:.3e} still too large at level {}",
                    cfg.max_level
                ),
            });
        }
        levels.push(next);
        accs.push(Accumulator::default());
        guessed.push(Some(variances[n - 1] / 2.0));
        pending.push(0);
        // re-run the allocation with the extrapolated variance of the new level
        let costs: Vec<f64> = levels
            .iter()
            .map(|&l| level_cost(l, cfg.min_level))
            .collect();
        let variances: Vec<f64> = accs
            .iter()
            .zip(&guessed)
            .map(|(a, g)| g.unwrap_or_else(|| a.variance()))
            .collect();
        let weight: f64 = variances
            .iter()
            .zip(&costs)
            .map(|(v, c)| (v * c).sqrt())
            .sum();
        for i in 0..levels.len() {
            let optimal = (2.0 / (eps * eps) * (variances[i] / costs[i]).sqrt() * weight).ceil();
            let optimal = if optimal.is_finite() {
                optimal as usize
            } else {
                usize::MAX
            };
            pending[i] = optimal.max(2).saturating_sub(accs[i].n);
        }
    }
}

fn finish(cfg: &MlmcConfig, levels: &[u32], accs: &[Accumulator], bias_sq: f64) -> MlmcResult {
    let stats: Vec<LevelStats> = levels
        .iter()
        .zip(accs)
        .map(|(&level, a)| LevelStats {
            level,
            samples: a.n,
            mean: a.mean(),
            variance: a.variance(),
            cost: level_cost(level, cfg.min_level),
        })
        .collect();
    let estimate = stats.iter().map(|s| s.mean).sum();
    let variance = stats
        .iter()
        .map(|s| {
            if s.samples == 0 {
                0.0
            } else {
                s.variance / s.samples as f64
            }
        })
        .sum();
    MlmcResult {
        payoff: cfg.payoff,
        scheme: cfg.scheme,
        levels: stats,
        estimate,
        bias_sq,
        variance,
        target_rmse: cfg.target_rmse,
    }
}

/// MLMC on a fixed schedule: levels `cfg.min_level ..= max_level` with the given
/// per-level sample counts.
///
/// With `shared_paths`, sample `i` of every level is driven by the same
/// lattice at `max_level`, so with equal counts the level means telescope to
/// the single-level mean at `max_level`.
pub fn mlmc_fixed(
    cfg: &MlmcConfig,
    max_level: u32,
    samples: &[usize],
    shared_paths: bool,
) -> Result<MlmcResult, McError> {
    let sampler = Sampler::new(cfg)?;
    if max_level < cfg.min_level {
        return Err(McError::InvalidInput(format!(
            "max level {max_level} is below the min level {}",
            cfg.min_level
        )));
    }
    let levels: Vec<u32> = (cfg.min_level..=max_level).collect();
    if samples.len() != levels.len() {
        return Err(McError::InvalidInput(format!(
            "{} sample counts for {} levels",
            samples.len(),
            levels.len()
        )));
    }
    let mut accs = vec![Accumulator::default(); levels.len()];
    if !shared_paths {
        for (i, &level) in levels.iter().enumerate() {
            sampler.sample(level, samples[i], &mut accs[i])?;
        }
        return Ok(finish(cfg, &levels, &accs, 0.0));
    }

    let steppers = levels
        .iter()
        .map(|&l| sampler.stepper(l))
        .collect::<Result<Vec<_>, _>>()?;
    let most = samples.iter().copied().max().unwrap_or(0);
    let work = |i: u64| -> Result<Vec<f64>, McError> {
        let lattice = BrownianLattice::generate(cfg.seed, i, cfg.horizon, max_level)?;
        let mut states = Vec::new();
        let mut increments = Vec::new();
        let mut payoffs = Vec::with_capacity(levels.len());
        for (stepper, &level) in steppers.iter().zip(&levels) {
            lattice.coarsen_into(level, &mut increments)?;
            payoffs.push(sampler.terminal(stepper, &increments, &mut states, i)?);
        }
        Ok(payoffs)
    };
    for_each_path(cfg.workers, 0, most, work, |i, payoffs| {
        for (l, acc) in accs.iter_mut().enumerate() {
            if (i as usize) < samples[l] {
                let v = if l == 0 {
                    payoffs[0]
                } else {
                    payoffs[l] - payoffs[l - 1]
                };
                acc.push(v);
            }
        }
    })?;
    Ok(finish(cfg, &levels, &accs, 0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SingleLevelEstimate {
    pub level: u32,
    pub samples: usize,
    pub mean: f64,
    pub std_error: f64,
}

/// Plain Monte Carlo at one level: paths `0..samples` keyed by `(seed, i)`.
pub fn single_level_estimate(
    cfg: &MlmcConfig,
    level: u32,
    samples: usize,
) -> Result<SingleLevelEstimate, McError> {
    let sampler = Sampler::new(cfg)?;
    let stepper = sampler.stepper(level)?;
    let mut acc = Accumulator::default();
    let work = |i: u64| -> Result<f64, McError> {
        let lattice = BrownianLattice::generate(cfg.seed, i, cfg.horizon, level)?;
        let mut states = Vec::new();
        sampler.terminal(&stepper, lattice.increments(), &mut states, i)
    };
    for_each_path(cfg.workers, 0, samples, work, |_, v| acc.push(v))?;
    Ok(SingleLevelEstimate {
        level,
        samples: acc.n,
        mean: acc.mean(),
        std_error: (acc.variance() / acc.n.max(1) as f64).sqrt(),
    })
}
