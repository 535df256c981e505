//! CSV serialization of study results.
//!
//! All files carry a header row, use `,` as separator and `\n` as record
//! terminator. Floats are written with 17 significant digits so they
//! round-trip exactly.
//!
//! | file                 | columns |
//! |----------------------|---------|
//! | convergence          | `scheme,h,e_h,seconds,violations` |
//! | paths                | `path,t,y,scheme,status` |
//! | assumptions          | see [`ASSUMPTION_HEADER`] |
//! | moments              | `scheme,p,h,sup_moment,samples,censored,inverse` |
//! | mlmc levels          | `level,samples,mean,variance,cost` |
//! | mlmc summary         | `payoff,scheme,estimate,std_error,bias_sq,rmse,target_rmse,levels` |

use std::io::Write;

use crate::montecarlo::{ConvergenceReport, MlmcResult, MomentReport};
use crate::schemes::Trajectory;
use crate::taming::AssumptionReport;

pub const CONVERGENCE_HEADER: [&str; 5] = ["scheme", "h", "e_h", "seconds", "violations"];
pub const PATHS_HEADER: [&str; 5] = ["path", "t", "y", "scheme", "status"];
pub const ASSUMPTION_HEADER: [&str; 19] = [
    "h",
    "alpha",
    "x_min",
    "x_max",
    "grid_points",
    "gamma_requested",
    "gamma_used",
    "gamma_required",
    "m1",
    "m2",
    "bound_f_margin",
    "bound_g_margin",
    "coupling_sup",
    "coupling_bound",
    "modification_f_margin",
    "modification_g_margin",
    "modification_skipped",
    "gamma_sufficient",
    "pass",
];
pub const MOMENTS_HEADER: [&str; 7] = [
    "scheme",
    "p",
    "h",
    "sup_moment",
    "samples",
    "censored",
    "inverse",
];
pub const MLMC_LEVELS_HEADER: [&str; 5] = ["level", "samples", "mean", "variance", "cost"];
pub const MLMC_SUMMARY_HEADER: [&str; 8] = [
    "payoff",
    "scheme",
    "estimate",
    "std_error",
    "bias_sq",
    "rmse",
    "target_rmse",
    "levels",
];

/// 17 significant digits in scientific notation.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

pub fn write_convergence<W: Write>(report: &ConvergenceReport, w: W) -> csv::Result<()> {
    let mut out = writer(w);
    out.write_record(CONVERGENCE_HEADER)?;
    for s in &report.schemes {
        for (i, h) in report.steps.iter().enumerate() {
            out.write_record([
                s.scheme.name().to_string(),
                fmt_float(*h),
                fmt_float(s.errors[i]),
                fmt_float(s.seconds[i]),
                s.violations[i].to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Writes sample paths; `paths[k]` is written with path index `k`.
pub fn write_paths<W: Write>(paths: &[Trajectory], w: W) -> csv::Result<()> {
    let mut out = writer(w);
    out.write_record(PATHS_HEADER)?;
    for (k, traj) in paths.iter().enumerate() {
        let last = traj.states.len().saturating_sub(1);
        for (n, y) in traj.states.iter().enumerate() {
            let status = if n == last {
                traj.final_status().name()
            } else {
                "ok"
            };
            out.write_record([
                k.to_string(),
                fmt_float(n as f64 * traj.h),
                fmt_float(*y),
                traj.kind.name().to_string(),
                status.to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_assumptions<W: Write>(reports: &[AssumptionReport], w: W) -> csv::Result<()> {
    let mut out = writer(w);
    out.write_record(ASSUMPTION_HEADER)?;
    for r in reports {
        out.write_record([
            fmt_float(r.h),
            fmt_float(r.alpha),
            fmt_float(r.grid.x_min),
            fmt_float(r.grid.x_max),
            r.grid.points.to_string(),
            fmt_float(r.gamma_requested),
            fmt_float(r.gamma_used),
            fmt_float(r.gamma_required),
            fmt_float(r.m1),
            fmt_float(r.m2),
            fmt_float(r.bound_f_margin),
            fmt_float(r.bound_g_margin),
            fmt_float(r.coupling_sup),
            fmt_float(r.coupling_bound),
            fmt_float(r.modification_f_margin),
            fmt_float(r.modification_g_margin),
            r.modification_skipped.to_string(),
            r.gamma_sufficient().to_string(),
            r.pass.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_moments<W: Write>(report: &MomentReport, w: W) -> csv::Result<()> {
    let mut out = writer(w);
    out.write_record(MOMENTS_HEADER)?;
    for r in &report.rows {
        out.write_record([
            report.scheme.name().to_string(),
            fmt_float(r.p),
            fmt_float(r.h),
            fmt_float(r.sup),
            r.samples.to_string(),
            r.censored.to_string(),
            report.inverse.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_mlmc_levels<W: Write>(result: &MlmcResult, w: W) -> csv::Result<()> {
    let mut out = writer(w);
    out.write_record(MLMC_LEVELS_HEADER)?;
    for l in &result.levels {
        out.write_record([
            l.level.to_string(),
            l.samples.to_string(),
            fmt_float(l.mean),
            fmt_float(l.variance),
            fmt_float(l.cost),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_mlmc_summary<W: Write>(result: &MlmcResult, w: W) -> csv::Result<()> {
    let mut out = writer(w);
    out.write_record(MLMC_SUMMARY_HEADER)?;
    out.write_record([
        result.payoff.to_string(),
        result.scheme.name().to_string(),
        fmt_float(result.estimate),
        fmt_float(result.std_error()),
        fmt_float(result.bias_sq),
        fmt_float(result.rmse()),
        fmt_float(result.target_rmse),
        result.levels.len().to_string(),
    ])?;
    out.flush()?;
    Ok(())
}
