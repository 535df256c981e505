//! Run configuration: built-in presets, an optional TOML file and command-line
//! flags, resolved in that order of increasing precedence.
//!
//! ```toml
//! [model]          # or `preset = "eg2"` under [run], not both
//! c_m1 = 1.5
//! c0 = 2.0
//! c1 = 1.0
//! c2 = 4.0
//! c3 = 0.5
//! kappa = 3.0
//! rho = 2.0
//! x0 = 1.0
//!
//! [run]
//! seed = 42
//! paths = 1000
//! schemes = ["TEM", "BEM"]
//! levels = [4, 5, 6, 7, 8]
//! ref_level = 12
//! alpha = 0.5
//! horizon = 1.0
//! workers = 0
//! out = "results"
//! ```

use std::path::{Path, PathBuf};

use ppsde_core::noise::{step_size, MAX_FINE_LEVEL};
use ppsde_core::{validate, ModelParams, Preset, SchemeKind};
use serde::Deserialize;

use crate::error::CliError;

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub model: Option<ModelParams>,
    #[serde(default)]
    pub run: RunSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub preset: Option<String>,
    pub seed: Option<u64>,
    pub paths: Option<usize>,
    pub schemes: Option<Vec<String>>,
    pub levels: Option<Vec<u32>>,
    pub ref_level: Option<u32>,
    pub alpha: Option<f64>,
    pub horizon: Option<f64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

/// Settings shared by every subcommand after merging file and flags.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: String,
    pub params: ModelParams,
    pub seed: u64,
    pub alpha: f64,
    pub horizon: f64,
    pub workers: usize,
    pub out: PathBuf,
}

pub struct CommonFlags<'a> {
    pub preset: Option<&'a str>,
    pub config: Option<&'a Path>,
    pub seed: Option<u64>,
    pub alpha: Option<f64>,
    pub horizon: Option<f64>,
    pub workers: Option<usize>,
    pub out: Option<&'a Path>,
}

pub fn resolve(flags: &CommonFlags<'_>) -> Result<(RunConfig, RunSection), CliError> {
    let file = match flags.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let run = file.run;

    let (model, params) = match (flags.preset, run.preset.as_deref(), file.model) {
        (Some(name), _, _) => named(name)?,
        (None, Some(_), Some(_)) => {
            return Err(CliError::Config(
                "config sets both [model] and run.preset".into(),
            ))
        }
        (None, Some(name), None) => named(name)?,
        (None, None, Some(params)) => ("custom".to_string(), params),
        (None, None, None) => named("eg1")?,
    };
    let params = validate(params).map_err(|e| CliError::Config(e.to_string()))?;

    let alpha = flags.alpha.or(run.alpha).unwrap_or(0.5);
    if !(alpha >= 0.5) || !alpha.is_finite() {
        return Err(CliError::Config(format!(
            "alpha must be at least 1/2, got {alpha}"
        )));
    }
    let horizon = flags.horizon.or(run.horizon).unwrap_or(1.0);
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(CliError::Config(format!(
            "horizon must be positive, got {horizon}"
        )));
    }
    let cfg = RunConfig {
        model,
        params,
        seed: flags.seed.or(run.seed).unwrap_or(DEFAULT_SEED),
        alpha,
        horizon,
        workers: flags.workers.or(run.workers).unwrap_or(0),
        out: flags
            .out
            .map(Path::to_path_buf)
            .or_else(|| run.out.clone())
            .unwrap_or_else(|| PathBuf::from(".")),
    };
    Ok((cfg, run))
}

fn named(name: &str) -> Result<(String, ModelParams), CliError> {
    let preset: Preset = name.parse().map_err(|e| CliError::Config(format!("{e}")))?;
    Ok((preset.name().to_string(), preset.params()))
}

pub fn parse_schemes(names: &[String]) -> Result<Vec<SchemeKind>, CliError> {
    let mut out = Vec::new();
    for name in names {
        let kind: SchemeKind = name.parse().map_err(|e| CliError::Config(format!("{e}")))?;
        if !out.contains(&kind) {
            out.push(kind);
        }
    }
    if out.is_empty() {
        return Err(CliError::Config("no scheme requested".into()));
    }
    Ok(out)
}

/// Accepts `4,5,6` as well as the inclusive range `4..9`.
pub fn parse_levels(spec: &str) -> Result<Vec<u32>, CliError> {
    let bad = || CliError::Config(format!("invalid level list `{spec}` (use 4,5,6 or 4..9)"));
    let mut levels = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((lo, hi)) = part.split_once("..") {
            let lo: u32 = lo.trim().parse().map_err(|_| bad())?;
            let hi: u32 = hi.trim().parse().map_err(|_| bad())?;
            if lo > hi {
                return Err(bad());
            }
            levels.extend(lo..=hi);
        } else {
            levels.push(part.parse().map_err(|_| bad())?);
        }
    }
    if levels.is_empty() {
        return Err(bad());
    }
    check_levels(&levels)?;
    Ok(levels)
}

pub fn check_levels(levels: &[u32]) -> Result<(), CliError> {
    match levels.iter().find(|&&l| l > MAX_FINE_LEVEL) {
        Some(l) => Err(CliError::Config(format!(
            "level {l} exceeds the maximum {MAX_FINE_LEVEL}"
        ))),
        None => Ok(()),
    }
}

/// Backward Euler is only well posed for `h c1 < 1`.
pub fn check_bem_levels(cfg: &RunConfig, levels: &[u32]) -> Result<(), CliError> {
    let limit = 1.0 / cfg.params.c1;
    for &level in levels {
        let h = step_size(cfg.horizon, level);
        if !(h < limit) {
            return Err(CliError::Config(format!(
                "BEM needs h < 1/c1 = {limit}, but level {level} has h = {h}"
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flags() -> CommonFlags<'static> {
        CommonFlags {
            preset: None,
            config: None,
            seed: None,
            alpha: None,
            horizon: None,
            workers: None,
            out: None,
        }
    }

    #[test]
    fn levels_grammar() {
        assert_eq!(parse_levels("4..9").unwrap(), vec![4, 5, 6, 7, 8, 9]);
        assert_eq!(parse_levels("4, 6,8").unwrap(), vec![4, 6, 8]);
        assert_eq!(parse_levels("2..3,7").unwrap(), vec![2, 3, 7]);
        for bad in ["", "9..4", "a", "4..x", "30"] {
            assert!(parse_levels(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn defaults_to_eg1() {
        let (cfg, _) = resolve(&flags()).unwrap();
        assert_eq!(cfg.model, "eg1");
        assert_eq!(cfg.params, Preset::Eg1.params());
        assert_eq!(cfg.seed, DEFAULT_SEED);
        assert_eq!(cfg.alpha, 0.5);
    }

    #[test]
    fn file_and_flag_precedence() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(
            &path,
            "[model]\nc_m1 = 1.5\nc0 = 2\nc1 = 1\nc2 = 4\nc3 = 0.5\nkappa = 3\nrho = 2\nx0 = 0.8\n\n[run]\nseed = 7\nalpha = 1.0\n",
        )
        .unwrap();
        let mut f = flags();
        f.config = Some(&path);
        let (cfg, _) = resolve(&f).unwrap();
        assert_eq!(cfg.model, "custom");
        assert_eq!(cfg.params.x0, 0.8);
        assert_eq!((cfg.seed, cfg.alpha), (7, 1.0));

        f.seed = Some(9);
        f.preset = Some("eg3");
        let (cfg, _) = resolve(&f).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.params, Preset::Eg3.params());
    }

    #[test]
    fn rejects_bad_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.toml");
        for text in [
            "[model]\nc_m1 = 1.5\n",
            "[run]\nseeds = 3\n",
            "[run]\npreset = \"eg9\"\n",
            "[model]\nc_m1 = 1.5\nc0 = 2\nc1 = 1\nc2 = 4\nc3 = 0.5\nkappa = 3\nrho = 2\nx0 = 1\n[run]\npreset = \"eg1\"\n",
            "[model]\nc_m1 = 1.5\nc0 = 2\nc1 = 1\nc2 = 4\nc3 = 0.5\nkappa = 3\nrho = 3\nx0 = 1\n",
        ] {
            std::fs::write(&path, text).unwrap();
            let mut f = flags();
            f.config = Some(&path);
            assert!(matches!(resolve(&f), Err(CliError::Config(_))), "{text}");
        }
    }

    #[test]
    fn alpha_below_half_is_rejected() {
        let mut f = flags();
        f.alpha = Some(0.25);
        assert!(matches!(resolve(&f), Err(CliError::Config(_))));
    }

    #[test]
    fn bem_step_restriction() {
        let (mut cfg, _) = resolve(&flags()).unwrap();
        cfg.params.c1 = 20.0;
        assert!(check_bem_levels(&cfg, &[5, 6]).is_ok());
        assert!(check_bem_levels(&cfg, &[4, 5]).is_err());
    }
}
