//! Monte Carlo studies: strong-error convergence, empirical moments and a
//! multilevel estimator.
//!
//! Every study draws path `m` from the lattice keyed by `(seed, m)` and
//! reduces per-path results in path-index order, so reports do not depend on
//! the number of worker threads (timings aside).

mod fit;
mod mlmc;
mod moments;
mod strong;

pub use fit::{fit_rate, FitError, RateFit};
pub use mlmc::{
    mlmc_estimate, mlmc_fixed, single_level_estimate, LevelStats, MlmcConfig, MlmcResult, Payoff,
    SingleLevelEstimate, UnknownPayoff,
};
pub use moments::{moment_study, MomentReport, MomentRow, MomentStudy};
pub use strong::{strong_error_study, ConvergenceReport, SchemeErrors, StrongErrorStudy};

use thiserror::Error;

use crate::model::ModelError;
use crate::noise::NoiseError;
use crate::schemes::{SchemeError, SchemeKind, StepStatus};

#[derive(Debug, Error)]
pub enum McError {
    #[error("reference level {reference} must be finer than every test level (finest test level {finest_test})")]
    RefNotFiner { reference: u32, finest_test: u32 },
    #[error("need at least {min} paths, got {got}")]
    TooFewPaths { min: usize, got: usize },
    #[error("no levels requested")]
    NoLevels,
    #[error("{0} cannot serve as the reference scheme")]
    InvalidReference(SchemeKind),
    #[error("{0} is not supported here")]
    UnsupportedScheme(SchemeKind),
    #[error("reference path {path} failed with {status:?} at step {step}")]
    ReferenceFailed {
        path: u64,
        step: usize,
        status: StepStatus,
    },
    #[error("sample path {path} failed with {status:?} at step {step}")]
    PathFailed {
        path: u64,
        step: usize,
        status: StepStatus,
    },
    #[error("target rmse must be finite and positive, got {0}")]
    InvalidTarget(f64),
    #[error("sample budget exhausted before reaching rmse {target}: {reason}")]
    BudgetExceeded { target: f64, reason: String },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("thread pool: {0}")]
    ThreadPool(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    Fit(#[from] FitError),
}

/// Paths handed to the pool at once; results inside a chunk keep their order.
const CHUNK: usize = 256;

/// Runs `work` for path indices `start..start + count` on `workers` threads
/// (`0` means the rayon default) and feeds the results to `reduce` in index order.
pub(crate) fn for_each_path<T, W, R>(
    workers: usize,
    start: u64,
    count: usize,
    work: W,
    mut reduce: R,
) -> Result<(), McError>
where
    T: Send,
    W: Fn(u64) -> Result<T, McError> + Sync,
    R: FnMut(u64, T),
{
    use rayon::prelude::*;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| McError::ThreadPool(e.to_string()))?;
    let mut offset = 0usize;
    while offset < count {
        let len = CHUNK.min(count - offset);
        let first = start + offset as u64;
        let results: Vec<Result<T, McError>> = pool.install(|| {
            (0..len as u64)
                .into_par_iter()
                .map(|i| work(first + i))
                .collect()
        });
        for (i, r) in results.into_iter().enumerate() {
            reduce(first + i as u64, r?);
        }
        offset += len;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reduction_order_is_fixed() {
        for workers in [1, 3, 8] {
            let mut seen = Vec::new();
            for_each_path(workers, 10, 600, |m| Ok(m * 2), |m, v| seen.push((m, v))).unwrap();
            assert_eq!(seen.len(), 600);
            assert!(seen
                .iter()
                .enumerate()
                .all(|(i, &(m, v))| m == 10 + i as u64 && v == 2 * m));
        }
    }

    #[test]
    fn errors_propagate() {
        let r = for_each_path(
            2,
            0,
            10,
            |m| {
                if m == 7 {
                    Err(McError::InvalidInput("boom".into()))
                } else {
                    Ok(m)
                }
            },
            |_, _| {},
        );
        assert!(matches!(r, Err(McError::InvalidInput(_))));
    }
}
