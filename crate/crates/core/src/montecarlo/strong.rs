use std::time::Instant;

use serde::Serialize;

use super::{fit_rate, for_each_path, McError, RateFit};
use crate::model::{validate, ModelParams};
use crate::noise::{step_size, BrownianLattice};
use crate::schemes::{NewtonSettings, SchemeKind, StepStatus, Stepper};
use crate::taming::TamingConfig;

/// Inputs of a strong-error convergence study.
#[derive(Debug, Clone, PartialEq)]
pub struct StrongErrorStudy {
    /// Label carried into the report, usually the preset name.
    pub model: String,
    pub params: ModelParams,
    pub horizon: f64,
    pub schemes: Vec<SchemeKind>,
    pub reference: SchemeKind,
    /// Reference step `T 2^-ref_level`.
    pub ref_level: u32,
    /// Test steps `T 2^-level`.
    pub test_levels: Vec<u32>,
    pub paths: usize,
    pub seed: u64,
    pub alpha: f64,
    /// Worker threads, `0` for the rayon default.
    pub workers: usize,
}

impl StrongErrorStudy {
    /// The experimental protocol: BEM reference at `2^-14`, test steps
    /// `2^-4 .. 2^-9`, `10^4` paths, `T = 1`.
    pub fn full(model: &str, params: ModelParams, seed: u64) -> Self {
        Self {
            model: model.to_string(),
            params,
            horizon: 1.0,
            schemes: vec![SchemeKind::Bem, SchemeKind::Tem],
            reference: SchemeKind::Bem,
            ref_level: 14,
            test_levels: (4..=9).collect(),
            paths: 10_000,
            seed,
            alpha: 0.5,
            workers: 0,
        }
    }

    /// Scaled-down protocol: `1000` paths, reference `2^-12`, steps `2^-4 .. 2^-8`.
    pub fn desk(model: &str, params: ModelParams, seed: u64) -> Self {
        Self {
            ref_level: 12,
            test_levels: (4..=8).collect(),
            paths: 1000,
            ..Self::full(model, params, seed)
        }
    }
}

/// Per-scheme results, one entry per test level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchemeErrors {
    pub scheme: SchemeKind,
    pub errors: Vec<f64>,
    /// Integration wall time per level, summed over paths.
    pub seconds: Vec<f64>,
    /// Paths that left `(0, inf)` per level.
    pub violations: Vec<usize>,
    /// Paths stopped for any reason (positivity, overflow, solver) per level.
    pub censored: Vec<usize>,
    pub newton_iters: u64,
    pub fit: Option<RateFit>,
}

impl SchemeErrors {
    pub fn total_seconds(&self) -> f64 {
        self.seconds.iter().sum()
    }

    pub fn total_violations(&self) -> usize {
        self.violations.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub model: String,
    pub reference: SchemeKind,
    pub ref_level: u32,
    pub levels: Vec<u32>,
    pub steps: Vec<f64>,
    pub paths: usize,
    pub seed: u64,
    pub schemes: Vec<SchemeErrors>,
}

impl ConvergenceReport {
    pub fn scheme(&self, kind: SchemeKind) -> Option<&SchemeErrors> {
        self.schemes.iter().find(|s| s.scheme == kind)
    }
}

struct PathResult {
    /// Squared errors at the coarse grid points, `None` when the path stopped early.
    sq_errors: Vec<Option<Vec<f64>>>,
    seconds: Vec<f64>,
    statuses: Vec<StepStatus>,
    newton_iters: Vec<u64>,
}

/// Runs the coupled strong-error study.
///
/// For every path, one lattice at the reference level drives the reference
/// scheme and, after coarsening, every test scheme at every test level.
/// `e_h = sqrt(max_n mean_m |X_ref(t_n) - Y_n|^2)` over the coarse grid points.
pub fn strong_error_study(study: &StrongErrorStudy) -> Result<ConvergenceReport, McError> {
    run(study, false)
}

/// `allow_same_level` lets a test level equal the reference level, which is
/// only meaningful for coupling checks.
pub(crate) fn run(
    study: &StrongErrorStudy,
    allow_same_level: bool,
) -> Result<ConvergenceReport, McError> {
    let params = validate(study.params)?;
    if study.paths < 2 {
        return Err(McError::TooFewPaths {
            min: 2,
            got: study.paths,
        });
    }
    let finest_test = *study.test_levels.iter().max().ok_or(McError::NoLevels)?;
    if study.ref_level < finest_test || (study.ref_level == finest_test && !allow_same_level) {
        return Err(McError::RefNotFiner {
            reference: study.ref_level,
            finest_test,
        });
    }
    if study.reference == SchemeKind::Em {
        return Err(McError::InvalidReference(SchemeKind::Em));
    }
    if study.schemes.is_empty() {
        return Err(McError::InvalidInput("no schemes requested".into()));
    }
    let taming =
        TamingConfig::new(study.alpha, study.horizon).map_err(crate::schemes::SchemeError::from)?;
    let newton = NewtonSettings::default();
    let reference = Stepper::with_step(
        &params,
        study.reference,
        step_size(study.horizon, study.ref_level),
        &taming,
        newton,
    )?;
    // steppers[s][l]
    let steppers = study
        .schemes
        .iter()
        .map(|&kind| {
            study
                .test_levels
                .iter()
                .map(|&level| {
                    Stepper::with_step(
                        &params,
                        kind,
                        step_size(study.horizon, level),
                        &taming,
                        newton,
                    )
                })
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;

    let n_levels = study.test_levels.len();
    let n_cells = study.schemes.len() * n_levels;
    let mut sums: Vec<Vec<f64>> = (0..n_cells)
        .map(|c| vec![0.0; (1usize << study.test_levels[c % n_levels]) + 1])
        .collect();
    let mut counts = vec![0usize; n_cells];
    let mut seconds = vec![0.0; n_cells];
    let mut violations = vec![0usize; n_cells];
    let mut censored = vec![0usize; n_cells];
    let mut iters = vec![0u64; study.schemes.len()];

    let work = |m: u64| -> Result<PathResult, McError> {
        let lattice = BrownianLattice::generate(study.seed, m, study.horizon, study.ref_level)?;
        let mut ref_states = Vec::new();
        let summary = reference.integrate_into(params.x0, lattice.increments(), &mut ref_states);
        if let Some(stop) = summary.stopped {
            return Err(McError::ReferenceFailed {
                path: m,
                step: stop.step,
                status: stop.status,
            });
        }
        let mut out = PathResult {
            sq_errors: Vec::with_capacity(n_cells),
            seconds: Vec::with_capacity(n_cells),
            statuses: Vec::with_capacity(n_cells),
            newton_iters: Vec::with_capacity(n_cells),
        };
        let mut increments = Vec::new();
        let mut states = Vec::new();
        for row in &steppers {
            for (stepper, &level) in row.iter().zip(&study.test_levels) {
                lattice.coarsen_into(level, &mut increments)?;
                let start = Instant::now();
                let summary = stepper.integrate_into(params.x0, &increments, &mut states);
                out.seconds.push(start.elapsed().as_secs_f64());
                out.newton_iters.push(summary.newton_iters);
                match summary.stopped {
                    Some(stop) => {
                        out.statuses.push(stop.status);
                        out.sq_errors.push(None);
                    }
                    None => {
                        let stride = 1usize << (study.ref_level - level);
                        let sq = states
                            .iter()
                            .enumerate()
                            .map(|(n, y)| (ref_states[n * stride] - y).powi(2))
                            .collect();
                        out.statuses.push(StepStatus::Ok);
                        out.sq_errors.push(Some(sq));
                    }
                }
            }
        }
        Ok(out)
    };

    for_each_path(study.workers, 0, study.paths, work, |_, r: PathResult| {
        for c in 0..n_cells {
            seconds[c] += r.seconds[c];
            iters[c / n_levels] += r.newton_iters[c];
            match &r.sq_errors[c] {
                Some(sq) => {
                    counts[c] += 1;
                    for (acc, v) in sums[c].iter_mut().zip(sq) {
                        *acc += v;
                    }
                }
                None => {
                    censored[c] += 1;
                    if r.statuses[c] == StepStatus::PositivityLost {
                        violations[c] += 1;
                    }
                }
            }
        }
    })?;

    let steps: Vec<f64> = study
        .test_levels
        .iter()
        .map(|&l| step_size(study.horizon, l))
        .collect();
    let schemes = study
        .schemes
        .iter()
        .enumerate()
        .map(|(s, &scheme)| {
            let cells = s * n_levels..(s + 1) * n_levels;
            let errors: Vec<f64> = cells
                .clone()
                .map(|c| {
                    if counts[c] == 0 {
                        f64::NAN
                    } else {
                        let worst = sums[c].iter().cloned().fold(0.0, f64::max);
                        (worst / counts[c] as f64).sqrt()
                    }
                })
                .collect();
            let fit = if n_levels >= 3 {
                let points: Vec<(f64, f64)> =
                    steps.iter().cloned().zip(errors.iter().cloned()).collect();
                fit_rate(&points).ok()
            } else {
                None
            };
            SchemeErrors {
                scheme,
                errors,
                seconds: seconds[cells.clone()].to_vec(),
                violations: violations[cells.clone()].to_vec(),
                censored: censored[cells].to_vec(),
                newton_iters: iters[s],
                fit,
            }
        })
        .collect();

    Ok(ConvergenceReport {
        model: study.model.clone(),
        reference: study.reference,
        ref_level: study.ref_level,
        levels: study.test_levels.clone(),
        steps,
        paths: study.paths,
        seed: study.seed,
        schemes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Preset;

    fn small(schemes: Vec<SchemeKind>, reference: SchemeKind) -> StrongErrorStudy {
        StrongErrorStudy {
            schemes,
            reference,
            ref_level: 8,
            test_levels: vec![3, 4, 5],
            paths: 64,
            ..StrongErrorStudy::desk("eg1", Preset::Eg1.params(), 3)
        }
    }

    #[test]
    fn self_coupling_gives_zero_error() {
        let mut study = small(vec![SchemeKind::Tem, SchemeKind::Bem], SchemeKind::Tem);
        study.ref_level = 6;
        study.test_levels = vec![6];
        assert!(matches!(
            strong_error_study(&study),
            Err(McError::RefNotFiner { .. })
        ));
        let report = run(&study, true).unwrap();
        assert_eq!(report.scheme(SchemeKind::Tem).unwrap().errors, vec![0.0]);
        assert!(report.scheme(SchemeKind::Bem).unwrap().errors[0] > 0.0);
    }

    #[test]
    fn reports_every_cell() {
        let study = small(vec![SchemeKind::Bem, SchemeKind::Tem], SchemeKind::Bem);
        let report = strong_error_study(&study).unwrap();
        assert_eq!(report.schemes.len(), 2);
        for s in &report.schemes {
            assert_eq!(s.errors.len(), 3);
            assert!(s.errors.iter().all(|e| e.is_finite() && *e > 0.0));
            assert!(s.fit.is_some());
            assert_eq!(s.total_violations(), 0);
        }
        assert_eq!(report.steps, vec![0.125, 0.0625, 0.03125]);
    }

    #[test]
    fn two_levels_skip_the_fit() {
        let mut study = small(vec![SchemeKind::Tem], SchemeKind::Bem);
        study.test_levels = vec![4, 5];
        let report = strong_error_study(&study).unwrap();
        assert!(report.schemes[0].fit.is_none());
    }

    #[test]
    fn input_guards() {
        let mut study = small(vec![SchemeKind::Tem], SchemeKind::Em);
        assert!(matches!(
            strong_error_study(&study),
            Err(McError::InvalidReference(SchemeKind::Em))
        ));
        study.reference = SchemeKind::Bem;
        study.paths = 1;
        assert!(matches!(
            strong_error_study(&study),
            Err(McError::TooFewPaths { .. })
        ));
        study.paths = 10;
        study.test_levels.clear();
        assert!(matches!(strong_error_study(&study), Err(McError::NoLevels)));

        let mut study = small(vec![SchemeKind::Bem], SchemeKind::Bem);
        study.params = Preset::Eg3.params();
        study.test_levels = vec![2, 3];
        assert!(matches!(
            strong_error_study(&study),
            Err(McError::Scheme(
                crate::schemes::SchemeError::StepTooLarge { .. }
            ))
        ));
    }

    #[test]
    fn em_violations_are_counted() {
        let mut study = small(vec![SchemeKind::Em, SchemeKind::Tem], SchemeKind::Bem);
        study.test_levels = vec![1, 2, 3];
        study.paths = 512;
        let report = strong_error_study(&study).unwrap();
        let em = report.scheme(SchemeKind::Em).unwrap();
        assert!(em.total_violations() > 0, "{em:?}");
        assert_eq!(
            report.scheme(SchemeKind::Tem).unwrap().total_violations(),
            0
        );
    }
}
