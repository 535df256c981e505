//! The generalized Aït-Sahalia interest-rate model
//!
//! ```text
//! dX_t = (c_m1 X^-1 - c0 + c1 X - c2 X^kappa) dt + c3 X^rho dW_t,   X_0 = x0 > 0
//! ```
//!
//! with all five coefficients positive, `kappa, rho > 1` and `kappa + 1 >= 2 rho`.
//! The case `kappa + 1 = 2 rho` is called critical; it needs extra conditions on
//! `c2 / c3^2` before moment bounds and the order-1/2 rate are available.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest exponent accepted by [`validate`]. Larger values are untested.
pub const MAX_EXPONENT: f64 = 64.0;

/// `|e * ln x|` above this is treated as overflow by [`guarded_pow`].
pub const LOG_OVERFLOW_GUARD: f64 = 700.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("coefficient `{field}` must be finite and strictly positive, got {value}")]
    NonPositiveCoefficient { field: &'static str, value: f64 },
    #[error("exponent `{field}` must lie in (1, {max}], got {value}")]
    ExponentOutOfRange {
        field: &'static str,
        value: f64,
        max: f64,
    },
    #[error("inadmissible regime: kappa + 1 = {lhs} < 2 rho = {rhs}")]
    InadmissibleRegime { lhs: f64, rhs: f64 },
    #[error("state must be strictly positive, got {0}")]
    NonPositiveState(f64),
    #[error("x^{exponent} is not representable at x = {x}")]
    Overflow { x: f64, exponent: f64 },
}

/// Coefficients, exponents and initial value of the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub c_m1: f64,
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub kappa: f64,
    pub rho: f64,
    pub x0: f64,
}

impl ModelParams {
    /// Drift `c_m1/x - c0 + c1 x - c2 x^kappa`.
    pub fn drift(&self, x: f64) -> Result<f64, ModelError> {
        drift(self, x)
    }

    /// Diffusion `c3 x^rho`.
    pub fn diffusion(&self, x: f64) -> Result<f64, ModelError> {
        diffusion(self, x)
    }

    pub fn is_critical(&self) -> bool {
        self.kappa + 1.0 == 2.0 * self.rho
    }

    /// `c2 / c3^2`, the ratio that governs the critical case.
    pub fn ratio(&self) -> f64 {
        self.c2 / (self.c3 * self.c3)
    }
}

/// The three built-in parameter sets used in the numerical experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    /// `kappa = 5, rho = 1.5`: non-critical.
    Eg1,
    /// `kappa = 3, rho = 2`: critical with `c2/c3^2 = 16`.
    Eg2,
    /// `kappa = 2, rho = 1.5`: critical with `c2/c3^2 = 2 kappa - 1/2` exactly.
    Eg3,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Eg1, Preset::Eg2, Preset::Eg3];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Eg1 => "eg1",
            Preset::Eg2 => "eg2",
            Preset::Eg3 => "eg3",
        }
    }

    pub fn params(self) -> ModelParams {
        match self {
            Preset::Eg1 => ModelParams {
                c_m1: 1.5,
                c0: 2.0,
                c1: 1.0,
                c2: 2.0,
                c3: 1.0,
                kappa: 5.0,
                rho: 1.5,
                x0: 1.0,
            },
            Preset::Eg2 => ModelParams {
                c_m1: 1.5,
                c0: 2.0,
                c1: 1.0,
                c2: 4.0,
                c3: 0.5,
                kappa: 3.0,
                rho: 2.0,
                x0: 1.0,
            },
            Preset::Eg3 => ModelParams {
                c_m1: 2.0,
                c0: 3.0,
                c1: 4.0,
                c2: 7.0,
                c3: std::f64::consts::SQRT_2,
                kappa: 2.0,
                rho: 1.5,
                x0: 1.0,
            },
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown preset `{0}` (valid presets: eg1, eg2, eg3)")]
pub struct UnknownPreset(pub String);

impl FromStr for Preset {
    type Err = UnknownPreset;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "eg1" => Ok(Preset::Eg1),
            "eg2" => Ok(Preset::Eg2),
            "eg3" => Ok(Preset::Eg3),
            _ => Err(UnknownPreset(s.to_string())),
        }
    }
}

/// Checks the admissibility conditions and hands the parameters back unchanged.
///
/// The critical/non-critical split is left to [`classify_regime`].
pub fn validate(params: ModelParams) -> Result<ModelParams, ModelError> {
    let coefficients = [
        ("c_m1", params.c_m1),
        ("c0", params.c0),
        ("c1", params.c1),
        ("c2", params.c2),
        ("c3", params.c3),
        ("x0", params.x0),
    ];
    for (field, value) in coefficients {
        if !(value.is_finite() && value > 0.0) {
            return Err(ModelError::NonPositiveCoefficient { field, value });
        }
    }
    for (field, value) in [("kappa", params.kappa), ("rho", params.rho)] {
        if !(value > 1.0 && value <= MAX_EXPONENT) {
            return Err(ModelError::ExponentOutOfRange {
                field,
                value,
                max: MAX_EXPONENT,
            });
        }
    }
    let lhs = params.kappa + 1.0;
    let rhs = 2.0 * params.rho;
    if lhs < rhs {
        return Err(ModelError::InadmissibleRegime { lhs, rhs });
    }
    Ok(params)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RegimeKind {
    NonCritical,
    Critical,
}

/// Parameter regime, with the thresholds that the critical case must clear.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regime {
    pub kind: RegimeKind,
    /// `c2 / c3^2`.
    pub ratio: f64,
    /// `c2/c3^2 > 2 kappa - 3/2`, the condition known for implicit schemes.
    pub stm_threshold_ok: bool,
    /// `c2/c3^2 >= (2 alpha + 1) kappa - 1/2`, the condition for the tamed scheme.
    pub tamed_threshold_ok: bool,
}

/// Relative slack on the `>=` threshold, so that `c3 = sqrt(2)` style inputs
/// that sit on the boundary up to rounding still count as on it.
pub const THRESHOLD_RTOL: f64 = 1e-12;

/// Classifies the regime. `kappa + 1 = 2 rho` is tested exactly, so exponents
/// should be supplied as exactly representable values (halves, quarters).
pub fn classify_regime(params: &ModelParams, alpha: f64) -> Regime {
    let ratio = params.ratio();
    if params.is_critical() {
        let tamed = (2.0 * alpha + 1.0) * params.kappa - 0.5;
        Regime {
            kind: RegimeKind::Critical,
            ratio,
            stm_threshold_ok: ratio > 2.0 * params.kappa - 1.5,
            tamed_threshold_ok: ratio >= tamed - THRESHOLD_RTOL * tamed.abs(),
        }
    } else {
        Regime {
            kind: RegimeKind::NonCritical,
            ratio,
            stm_threshold_ok: true,
            tamed_threshold_ok: true,
        }
    }
}

/// `x^exponent` for `x > 0`, computed as `exp(exponent * ln x)`.
///
/// Fails instead of returning an infinity when `|exponent * ln x|` exceeds
/// [`LOG_OVERFLOW_GUARD`] on the overflow side.
pub fn guarded_pow(x: f64, exponent: f64) -> Result<f64, ModelError> {
    if !(x > 0.0) {
        return Err(ModelError::NonPositiveState(x));
    }
    let log = exponent * x.ln();
    if !log.is_finite() || log > LOG_OVERFLOW_GUARD {
        return Err(ModelError::Overflow { x, exponent });
    }
    Ok(log.exp())
}

pub fn drift(params: &ModelParams, x: f64) -> Result<f64, ModelError> {
    if !(x > 0.0) || x.is_nan() {
        return Err(ModelError::NonPositiveState(x));
    }
    let xk = guarded_pow(x, params.kappa)?;
    let value = params.c_m1 / x - params.c0 + params.c1 * x - params.c2 * xk;
    if !value.is_finite() {
        return Err(ModelError::Overflow {
            x,
            exponent: params.kappa,
        });
    }
    Ok(value)
}

pub fn diffusion(params: &ModelParams, x: f64) -> Result<f64, ModelError> {
    if !(x > 0.0) || x.is_nan() {
        return Err(ModelError::NonPositiveState(x));
    }
    let value = params.c3 * guarded_pow(x, params.rho)?;
    if !value.is_finite() {
        return Err(ModelError::Overflow {
            x,
            exponent: params.rho,
        });
    }
    Ok(value)
}
