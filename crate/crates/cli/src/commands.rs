use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use ppsde_core::noise::step_size;
use ppsde_core::output::{
    write_assumptions, write_convergence, write_mlmc_levels, write_mlmc_summary, write_moments,
    write_paths,
};
use ppsde_core::taming::required_gamma;
use ppsde_core::{
    check_assumptions, classify_regime, integrate, mlmc_estimate, moment_study, strong_error_study,
    BrownianLattice, GridSpec, MlmcConfig, MomentStudy, Payoff, RegimeKind, SchemeConfig,
    SchemeKind, StrongErrorStudy, TamingConfig,
};

use crate::config::{
    check_bem_levels, check_levels, parse_levels, parse_schemes, RunConfig, RunSection,
};
use crate::error::CliError;

fn create(dir: &Path, name: &str) -> Result<(BufWriter<File>, PathBuf), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    let file = File::create(&path)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", path.display())))?;
    Ok((BufWriter::new(file), path))
}

fn levels_or(
    flag: Option<&str>,
    run: &RunSection,
    default: Vec<u32>,
) -> Result<Vec<u32>, CliError> {
    match (flag, &run.levels) {
        (Some(spec), _) => parse_levels(spec),
        (None, Some(levels)) => {
            check_levels(levels)?;
            Ok(levels.clone())
        }
        (None, None) => Ok(default),
    }
}

fn scheme_or(
    flag: Option<&str>,
    run: &RunSection,
    default: SchemeKind,
) -> Result<SchemeKind, CliError> {
    let names = match (flag, &run.schemes) {
        (Some(name), _) => vec![name.to_string()],
        (None, Some(names)) => names.clone(),
        (None, None) => return Ok(default),
    };
    let schemes = parse_schemes(&names)?;
    if schemes.len() != 1 {
        return Err(CliError::Config(format!(
            "this command takes one scheme, got {}",
            names.join(",")
        )));
    }
    Ok(schemes[0])
}

pub struct SimulateArgs<'a> {
    pub scheme: Option<&'a str>,
    pub paths: Option<usize>,
    pub level: u32,
}

pub fn simulate(
    cfg: &RunConfig,
    run: &RunSection,
    args: &SimulateArgs<'_>,
) -> Result<(), CliError> {
    let scheme = scheme_or(args.scheme, run, SchemeKind::Tem)?;
    let k = args.paths.or(run.paths).unwrap_or(50);
    check_levels(&[args.level])?;
    if scheme == SchemeKind::Bem {
        check_bem_levels(cfg, &[args.level])?;
    }
    let scheme_cfg =
        SchemeConfig::new(scheme, cfg.horizon, 1usize << args.level).with_alpha(cfg.alpha);
    let mut paths = Vec::with_capacity(k);
    let mut truncated = 0;
    for m in 0..k as u64 {
        let lattice = BrownianLattice::generate(cfg.seed, m, cfg.horizon, args.level)?;
        let path = integrate(&cfg.params, &scheme_cfg, lattice.increments())?;
        if !path.completed() {
            truncated += 1;
        }
        paths.push(path);
    }
    let (w, file) = create(&cfg.out, "paths.csv")?;
    write_paths(&paths, w)?;
    if truncated > 0 {
        eprintln!(
            "warning: {truncated} of {k} {} paths stopped early",
            scheme.name()
        );
    }
    println!("wrote {}", file.display());
    Ok(())
}

pub struct ConvergenceArgs<'a> {
    pub schemes: &'a [String],
    pub reference: &'a str,
    pub paths: Option<usize>,
    pub levels: Option<&'a str>,
    pub ref_level: Option<u32>,
    pub desk: bool,
}

pub fn convergence(
    cfg: &RunConfig,
    run: &RunSection,
    args: &ConvergenceArgs<'_>,
) -> Result<(), CliError> {
    let base = if args.desk {
        StrongErrorStudy::desk(&cfg.model, cfg.params, cfg.seed)
    } else {
        StrongErrorStudy::full(&cfg.model, cfg.params, cfg.seed)
    };
    let schemes = match (args.schemes.is_empty(), &run.schemes) {
        (false, _) => parse_schemes(args.schemes)?,
        (true, Some(names)) => parse_schemes(names)?,
        (true, None) => base.schemes.clone(),
    };
    let reference: SchemeKind = args
        .reference
        .parse()
        .map_err(|e| CliError::Config(format!("{e}")))?;
    let study = StrongErrorStudy {
        schemes,
        reference,
        ref_level: args.ref_level.or(run.ref_level).unwrap_or(base.ref_level),
        test_levels: levels_or(args.levels, run, base.test_levels.clone())?,
        paths: args.paths.or(run.paths).unwrap_or(base.paths),
        horizon: cfg.horizon,
        alpha: cfg.alpha,
        workers: cfg.workers,
        ..base
    };
    check_levels(&[study.ref_level])?;
    if study.schemes.contains(&SchemeKind::Bem) {
        check_bem_levels(cfg, &study.test_levels)?;
    }
    if study.reference == SchemeKind::Bem {
        check_bem_levels(cfg, &[study.ref_level])?;
    }

    let report = strong_error_study(&study)?;
    let (w, file) = create(&cfg.out, "convergence.csv")?;
    write_convergence(&report, w)?;
    for s in &report.schemes {
        match s.fit {
            Some(fit) => println!("scheme={} q={} resid={}", s.scheme.name(), fit.q, fit.resid),
            None => eprintln!(
                "warning: scheme={}: no rate fit from {} level(s), at least 3 are needed",
                s.scheme.name(),
                report.levels.len()
            ),
        }
        let violations = s.total_violations();
        if violations > 0 {
            eprintln!(
                "warning: scheme={}: {violations} path(s) lost positivity",
                s.scheme.name()
            );
        }
    }
    println!("wrote {}", file.display());
    Ok(())
}

pub struct CheckArgs<'a> {
    pub levels: Option<&'a str>,
    pub gamma: Option<f64>,
    pub grid: GridSpec,
}

/// Returns whether every step size passed.
pub fn check(cfg: &RunConfig, run: &RunSection, args: &CheckArgs<'_>) -> Result<bool, CliError> {
    let taming = TamingConfig::new(cfg.alpha, cfg.horizon)?;
    let levels = levels_or(args.levels, run, (4..=9).collect())?;
    if !(args.grid.x_min > 0.0 && args.grid.x_min < args.grid.x_max && args.grid.points >= 2) {
        return Err(CliError::Config(
            "grid needs 0 < x_min < x_max and at least 2 points".into(),
        ));
    }
    let regime = classify_regime(&cfg.params, cfg.alpha);
    let gamma = args.gamma.unwrap_or(match regime.kind {
        RegimeKind::Critical => regime.ratio,
        RegimeKind::NonCritical => required_gamma(&cfg.params, cfg.alpha),
    });
    if !(gamma > 0.0) {
        return Err(CliError::Config(format!(
            "gamma must be positive, got {gamma}"
        )));
    }

    let reports = levels
        .iter()
        .map(|&l| {
            check_assumptions(
                &cfg.params,
                &taming,
                step_size(cfg.horizon, l),
                &args.grid,
                gamma,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    let (w, file) = create(&cfg.out, "assumptions.csv")?;
    write_assumptions(&reports, w)?;

    if regime.kind == RegimeKind::Critical && !regime.tamed_threshold_ok {
        eprintln!(
            "warning: c2/c3^2 = {} is below the critical-case threshold for alpha = {}",
            regime.ratio, cfg.alpha
        );
    }
    for r in &reports {
        if !r.gamma_sufficient() {
            eprintln!(
                "warning: h={}: gamma = {} is below the {} needed for the modification error",
                r.h, r.gamma_used, r.gamma_required
            );
        }
    }
    let pass = reports.iter().all(|r| r.pass);
    println!(
        "assumptions {} for {} step size(s), gamma={gamma}",
        if pass { "pass" } else { "FAIL" },
        reports.len()
    );
    println!("wrote {}", file.display());
    Ok(pass)
}

pub struct MomentArgs<'a> {
    pub scheme: Option<&'a str>,
    pub p: &'a [f64],
    pub levels: Option<&'a str>,
    pub paths: Option<usize>,
    pub inverse: bool,
}

/// Returns whether the moments stayed stable.
pub fn moments(cfg: &RunConfig, run: &RunSection, args: &MomentArgs<'_>) -> Result<bool, CliError> {
    let scheme = scheme_or(args.scheme, run, SchemeKind::Tem)?;
    let levels = levels_or(args.levels, run, vec![4, 6, 8])?;
    if scheme == SchemeKind::Bem {
        check_bem_levels(cfg, &levels)?;
    }
    let study = MomentStudy {
        model: cfg.model.clone(),
        params: cfg.params,
        horizon: cfg.horizon,
        scheme,
        p_list: if args.p.is_empty() {
            vec![2.0]
        } else {
            args.p.to_vec()
        },
        levels,
        paths: args.paths.or(run.paths).unwrap_or(2000),
        seed: cfg.seed,
        alpha: cfg.alpha,
        inverse: args.inverse,
        workers: cfg.workers,
    };
    let report = moment_study(&study)?;
    let (w, file) = create(&cfg.out, "moments.csv")?;
    write_moments(&report, w)?;
    for warning in &report.warnings {
        eprintln!("warning: {warning}");
    }
    for &p in &study.p_list {
        println!("p={p} spread={}", report.spread(p));
    }
    println!(
        "moments {}",
        if report.pass { "stable" } else { "UNSTABLE" }
    );
    println!("wrote {}", file.display());
    Ok(report.pass)
}

pub struct MlmcArgs<'a> {
    pub scheme: Option<&'a str>,
    pub payoff: &'a str,
    pub target_rmse: f64,
    pub max_level: u32,
}

pub fn mlmc(cfg: &RunConfig, run: &RunSection, args: &MlmcArgs<'_>) -> Result<(), CliError> {
    let scheme = scheme_or(args.scheme, run, SchemeKind::Tem)?;
    let payoff: Payoff = args
        .payoff
        .parse()
        .map_err(|e| CliError::Config(format!("{e}")))?;
    check_levels(&[args.max_level])?;
    let defaults = MlmcConfig::new(cfg.params, scheme, payoff, args.target_rmse, cfg.seed);
    if args.max_level < defaults.initial_max_level {
        return Err(CliError::Config(format!(
            "max level must be at least {}",
            defaults.initial_max_level
        )));
    }
    if scheme == SchemeKind::Bem {
        check_bem_levels(cfg, &[defaults.min_level])?;
    }
    let mlmc_cfg = MlmcConfig {
        horizon: cfg.horizon,
        alpha: cfg.alpha,
        workers: cfg.workers,
        max_level: args.max_level,
        ..defaults
    };
    let result = mlmc_estimate(&mlmc_cfg)?;
    let (w, levels_file) = create(&cfg.out, "mlmc_levels.csv")?;
    write_mlmc_levels(&result, w)?;
    let (w, summary_file) = create(&cfg.out, "mlmc_summary.csv")?;
    write_mlmc_summary(&result, w)?;
    println!(
        "estimate={} std_error={} rmse={} levels={}",
        result.estimate,
        result.std_error(),
        result.rmse(),
        result.levels.len()
    );
    println!("wrote {}", levels_file.display());
    println!("wrote {}", summary_file.display());
    Ok(())
}
