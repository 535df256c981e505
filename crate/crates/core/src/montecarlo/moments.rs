use serde::Serialize;

use super::{for_each_path, McError};
use crate::model::{classify_regime, validate, ModelParams, RegimeKind};
use crate::noise::{step_size, BrownianLattice};
use crate::schemes::{NewtonSettings, SchemeError, SchemeKind, Stepper};
use crate::taming::TamingConfig;

/// Stability threshold: the largest sup-moment over the scanned step sizes
/// must stay below this multiple of the smallest.
pub const MOMENT_SPREAD_LIMIT: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct MomentStudy {
    pub model: String,
    pub params: ModelParams,
    pub horizon: f64,
    pub scheme: SchemeKind,
    pub p_list: Vec<f64>,
    /// Step sizes `T 2^-level`; all levels share one lattice at the finest of them.
    pub levels: Vec<u32>,
    pub paths: usize,
    pub seed: u64,
    pub alpha: f64,
    /// Track `E|Y_n|^-p` instead of `E|Y_n|^p`.
    pub inverse: bool,
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentRow {
    pub p: f64,
    pub level: u32,
    pub h: f64,
    /// Sample mean of `|Y_n|^p` (or `|Y_n|^-p`) over uncensored paths, `n = 0..=N`.
    pub per_step: Vec<f64>,
    pub sup: f64,
    pub samples: usize,
    pub censored: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentReport {
    pub model: String,
    pub scheme: SchemeKind,
    pub inverse: bool,
    pub rows: Vec<MomentRow>,
    /// Fewer than two paths; sample means are reported but say little.
    pub insufficient_samples: bool,
    pub warnings: Vec<String>,
    pub pass: bool,
}

impl MomentReport {
    pub fn rows_for(&self, p: f64) -> impl Iterator<Item = &MomentRow> {
        self.rows.iter().filter(move |r| r.p == p)
    }

    /// `max sup / min sup` across step sizes for moment order `p`.
    pub fn spread(&self, p: f64) -> f64 {
        let (lo, hi) = self
            .rows_for(p)
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), r| {
                (lo.min(r.sup), hi.max(r.sup))
            });
        hi / lo
    }

    pub fn total_censored(&self) -> usize {
        self.rows.iter().map(|r| r.censored).sum()
    }
}

/// Empirical `sup_n E|Y_n|^p` for each `p` and step size.
///
/// `pass` requires finite sups, at least two paths and, for each `p`, a
/// spread below [`MOMENT_SPREAD_LIMIT`] across the scanned step sizes.
pub fn moment_study(study: &MomentStudy) -> Result<MomentReport, McError> {
    let params = validate(study.params)?;
    let finest = *study.levels.iter().max().ok_or(McError::NoLevels)?;
    if study.p_list.is_empty() {
        return Err(McError::InvalidInput("no moment orders requested".into()));
    }
    if study.paths == 0 {
        return Err(McError::TooFewPaths { min: 1, got: 0 });
    }
    let taming = TamingConfig::new(study.alpha, study.horizon).map_err(SchemeError::from)?;

    let mut warnings = Vec::new();
    let regime = classify_regime(&params, study.alpha);
    for &p in &study.p_list {
        if p < 2.0 {
            warnings.push(format!("moment order p = {p} is below 2"));
        }
        if regime.kind == RegimeKind::Critical {
            let p_max = 2.0 * regime.ratio + 1.0;
            if p > p_max {
                warnings.push(format!(
                    "moment order p = {p} exceeds 2 c2/c3^2 + 1 = {p_max} for this critical model"
                ));
            }
        }
    }
    if study.paths < 2 {
        warnings.push(format!(
            "only {} path(s): insufficient samples",
            study.paths
        ));
    }

    let steppers = study
        .levels
        .iter()
        .map(|&l| {
            Stepper::with_step(
                &params,
                study.scheme,
                step_size(study.horizon, l),
                &taming,
                NewtonSettings::default(),
            )
        })
        .collect::<Result<Vec<_>, _>>()?;

    let n_p = study.p_list.len();
    // sums[level][p][n]
    let mut sums: Vec<Vec<Vec<f64>>> = study
        .levels
        .iter()
        .map(|&l| vec![vec![0.0; (1usize << l) + 1]; n_p])
        .collect();
    let mut samples = vec![0usize; study.levels.len()];
    let mut censored = vec![0usize; study.levels.len()];
    let sign = if study.inverse { -1.0 } else { 1.0 };

    let work = |m: u64| -> Result<Vec<Option<Vec<f64>>>, McError> {
        let lattice = BrownianLattice::generate(study.seed, m, study.horizon, finest)?;
        let mut increments = Vec::new();
        let mut states = Vec::new();
        let mut out = Vec::with_capacity(study.levels.len());
        for (stepper, &level) in steppers.iter().zip(&study.levels) {
            lattice.coarsen_into(level, &mut increments)?;
            let summary = stepper.integrate_into(params.x0, &increments, &mut states);
            if summary.stopped.is_some() {
                out.push(None);
            } else {
                out.push(Some(states.clone()));
            }
        }
        Ok(out)
    };

    for_each_path(study.workers, 0, study.paths, work, |_, per_level| {
        for (l, states) in per_level.into_iter().enumerate() {
            match states {
                None => censored[l] += 1,
                Some(states) => {
                    samples[l] += 1;
                    for (acc, &p) in sums[l].iter_mut().zip(&study.p_list) {
                        for (slot, y) in acc.iter_mut().zip(&states) {
                            *slot += y.abs().powf(sign * p);
                        }
                    }
                }
            }
        }
    })?;

    let mut rows = Vec::new();
    for (pi, &p) in study.p_list.iter().enumerate() {
        for (l, &level) in study.levels.iter().enumerate() {
            let count = samples[l];
            let per_step: Vec<f64> = sums[l][pi]
                .iter()
                .map(|s| {
                    if count == 0 {
                        f64::NAN
                    } else {
                        s / count as f64
                    }
                })
                .collect();
            let sup = per_step.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            rows.push(MomentRow {
                p,
                level,
                h: step_size(study.horizon, level),
                per_step,
                sup: if count == 0 { f64::NAN } else { sup },
                samples: count,
                censored: censored[l],
            });
        }
    }

    let insufficient_samples = study.paths < 2;
    let mut report = MomentReport {
        model: study.model.clone(),
        scheme: study.scheme,
        inverse: study.inverse,
        rows,
        insufficient_samples,
        warnings,
        pass: false,
    };
    report.pass = !insufficient_samples
        && report.rows.iter().all(|r| r.sup.is_finite())
        && study
            .p_list
            .iter()
            .all(|&p| report.spread(p) < MOMENT_SPREAD_LIMIT);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Preset;

    fn study(scheme: SchemeKind, paths: usize) -> MomentStudy {
        MomentStudy {
            model: "eg1".into(),
            params: Preset::Eg1.params(),
            horizon: 1.0,
            scheme,
            p_list: vec![2.0],
            levels: vec![4, 6, 8],
            paths,
            seed: 17,
            alpha: 0.5,
            inverse: false,
            workers: 0,
        }
    }

    #[test]
    fn tem_second_moment_is_stable() {
        let report = moment_study(&study(SchemeKind::Tem, 500)).unwrap();
        assert!(report.pass, "{:?}", report.warnings);
        assert_eq!(report.rows.len(), 3);
        for row in &report.rows {
            assert_eq!(row.per_step[0], 1.0);
            assert!(row.sup >= 1.0);
            assert_eq!(row.censored, 0);
        }
        assert!(report.spread(2.0) < 2.0);
    }

    #[test]
    fn inverse_moments() {
        let mut s = study(SchemeKind::Tem, 200);
        s.inverse = true;
        s.p_list = vec![2.0, 4.0];
        let report = moment_study(&s).unwrap();
        assert_eq!(report.rows.len(), 6);
        assert!(report.rows.iter().all(|r| r.sup.is_finite()));
    }

    #[test]
    fn single_path_is_flagged() {
        let report = moment_study(&study(SchemeKind::Tem, 1)).unwrap();
        assert!(report.insufficient_samples);
        assert!(!report.pass);
        assert!(report.rows.iter().all(|r| r.sup.is_finite()));
    }

    #[test]
    fn em_censoring_is_surfaced() {
        let mut s = study(SchemeKind::Em, 2000);
        s.levels = vec![2, 3, 4];
        let report = moment_study(&s).unwrap();
        assert!(report.total_censored() > 0);
    }

    #[test]
    fn critical_order_warning() {
        let mut s = study(SchemeKind::Tem, 4);
        s.params = Preset::Eg3.params();
        s.p_list = vec![9.0];
        let report = moment_study(&s).unwrap();
        assert!(report.warnings.iter().any(|w| w.contains("exceeds")));
    }
}
