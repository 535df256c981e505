//! Tamed drift and diffusion coefficients and grid checks of the bounds they
//! must satisfy.
//!
//! ```text
//! f_h(x) = -c2 x^kappa / (1 + h^alpha x^(2 kappa alpha))
//! g_h(x) =  c3 x^rho   / (1 + h^alpha x^(2 kappa alpha))
//! ```
//!
//! With `alpha >= 1/2` these satisfy, for every `x > 0`:
//!
//! * `|f_h(x)| <= c2 h^(-1/2)` and `|g_h(x)| <= c3 h^(-rho / (2 kappa))`;
//! * `x f_h(x) + gamma g_h(x)^2 <= L` whenever the untamed expression is bounded by `L`;
//! * `|f - f_h|^2 <= c2^2 h^(2 alpha) x^m1`, `|g - g_h|^2 <= c3^2 h^(2 alpha) x^m2`
//!   with `m1 = 2 (2 alpha + 1) kappa` and `m2 = 2 (2 kappa alpha + rho)`.
//!
//! [`check_assumptions`] samples all three on a log-spaced grid.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::model::{classify_regime, guarded_pow, ModelParams, RegimeKind};

/// `h^alpha x^(2 kappa alpha)` above this switches to the rewritten quotient.
const LARGE_DENOMINATOR: f64 = 1e8;

/// Relative slack allowed on every grid margin.
pub const MARGIN_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TamingError {
    #[error("taming exponent alpha must be >= 1/2, got {0}")]
    AlphaTooSmall(f64),
    #[error("horizon must be finite and positive, got {0}")]
    NonPositiveHorizon(f64),
    #[error("state must be strictly positive, got {0}")]
    NonPositiveState(f64),
    #[error("step size must be finite and positive, got {0}")]
    NonPositiveStep(f64),
}

/// Taming exponent and time horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TamingConfig {
    pub alpha: f64,
    pub horizon: f64,
}

impl TamingConfig {
    pub fn new(alpha: f64, horizon: f64) -> Result<Self, TamingError> {
        if !(alpha >= 0.5) || !alpha.is_finite() {
            return Err(TamingError::AlphaTooSmall(alpha));
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(TamingError::NonPositiveHorizon(horizon));
        }
        Ok(Self { alpha, horizon })
    }

    /// Skips the `alpha >= 1/2` check. Only meant for probing how the grid
    /// checks fail outside the admissible range.
    pub fn unchecked(alpha: f64, horizon: f64) -> Self {
        Self { alpha, horizon }
    }
}

impl Default for TamingConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            horizon: 1.0,
        }
    }
}

/// `f_h` and `g_h` for fixed parameters and step size.
///
/// Precomputes `h^alpha` and the exponents so the per-step cost is one `ln`
/// and three `exp`.
#[derive(Debug, Clone, Copy)]
pub struct TamedCoefficients {
    c2: f64,
    c3: f64,
    kappa: f64,
    rho: f64,
    taming_exp: f64,
    h_alpha: f64,
    log_h_alpha: f64,
}

impl TamedCoefficients {
    pub fn new(params: &ModelParams, cfg: &TamingConfig, h: f64) -> Result<Self, TamingError> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(TamingError::NonPositiveStep(h));
        }
        let log_h_alpha = cfg.alpha * h.ln();
        Ok(Self {
            c2: params.c2,
            c3: params.c3,
            kappa: params.kappa,
            rho: params.rho,
            taming_exp: 2.0 * params.kappa * cfg.alpha,
            h_alpha: log_h_alpha.exp(),
            log_h_alpha,
        })
    }

    /// Returns `(f_h(x), g_h(x))`. `x` must be positive.
    #[inline]
    pub fn eval(&self, x: f64) -> (f64, f64) {
        let ln_x = x.ln();
        let log_damp = self.log_h_alpha + self.taming_exp * ln_x;
        if log_damp > LARGE_DENOMINATOR.ln() {
            // -c2 x^(kappa - 2 kappa alpha) / (h^alpha + x^(-2 kappa alpha)), all exponents <= 0
            let denom = self.h_alpha + (-self.taming_exp * ln_x).exp();
            let f = -self.c2 * ((self.kappa - self.taming_exp) * ln_x).exp() / denom;
            let g = self.c3 * ((self.rho - self.taming_exp) * ln_x).exp() / denom;
            (f, g)
        } else {
            let denom = 1.0 + log_damp.exp();
            let f = -self.c2 * (self.kappa * ln_x).exp() / denom;
            let g = self.c3 * (self.rho * ln_x).exp() / denom;
            (f, g)
        }
    }
}

fn check_state(x: f64) -> Result<(), TamingError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(TamingError::NonPositiveState(x))
    }
}

pub fn f_h(params: &ModelParams, cfg: &TamingConfig, h: f64, x: f64) -> Result<f64, TamingError> {
    let tamed = TamedCoefficients::new(params, cfg, h)?;
    check_state(x)?;
    Ok(tamed.eval(x).0)
}

pub fn g_h(params: &ModelParams, cfg: &TamingConfig, h: f64, x: f64) -> Result<f64, TamingError> {
    let tamed = TamedCoefficients::new(params, cfg, h)?;
    check_state(x)?;
    Ok(tamed.eval(x).1)
}

/// Log-spaced sampling grid for [`check_assumptions`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            x_min: 1e-8,
            x_max: 1e8,
            points: 100_000,
        }
    }
}

impl GridSpec {
    pub fn point(&self, i: usize) -> f64 {
        if self.points <= 1 {
            return self.x_min;
        }
        let (a, b) = (self.x_min.ln(), self.x_max.ln());
        (a + (b - a) * i as f64 / (self.points - 1) as f64).exp()
    }
}

/// Outcome of sampling the three coefficient assumptions on a grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub h: f64,
    pub grid: GridSpec,
    pub alpha: f64,
    /// `max |f_h(x)| sqrt(h) - c2`.
    pub bound_f_margin: f64,
    /// `max |g_h(x)| h^(rho / (2 kappa)) - c3`.
    pub bound_g_margin: f64,
    /// `max x f_h(x) + gamma g_h(x)^2`.
    pub coupling_sup: f64,
    /// `L = max(0, max -c2 x^(kappa+1) + gamma c3^2 x^(2 rho))` over the same grid.
    pub coupling_bound: f64,
    pub gamma_requested: f64,
    pub gamma_used: f64,
    /// Smallest gamma with `m1, m2 <= 2 gamma + 1`.
    pub gamma_required: f64,
    pub m1: f64,
    pub m2: f64,
    /// `max (|f - f_h|^2 - B) / (1 + B)` with `B = c2^2 h^(2 alpha) x^m1`.
    pub modification_f_margin: f64,
    /// Same as `modification_f_margin` for `g` with `B = c3^2 h^(2 alpha) x^m2`.
    pub modification_g_margin: f64,
    /// Grid points where the untamed coefficients overflow and the
    /// modification error could not be formed.
    pub modification_skipped: usize,
    pub pass: bool,
}

impl AssumptionReport {
    /// True when `gamma_used` is large enough for the modification-error exponents.
    pub fn gamma_sufficient(&self) -> bool {
        self.gamma_used >= self.gamma_required
    }
}

#[derive(Debug, Clone, Copy)]
struct PointMargins {
    bound_f: f64,
    bound_g: f64,
    coupling_tamed: f64,
    coupling_untamed: f64,
    modification_f: f64,
    modification_g: f64,
    skipped: usize,
}

impl PointMargins {
    fn merge(self, o: Self) -> Self {
        Self {
            bound_f: self.bound_f.max(o.bound_f),
            bound_g: self.bound_g.max(o.bound_g),
            coupling_tamed: self.coupling_tamed.max(o.coupling_tamed),
            coupling_untamed: self.coupling_untamed.max(o.coupling_untamed),
            modification_f: self.modification_f.max(o.modification_f),
            modification_g: self.modification_g.max(o.modification_g),
            skipped: self.skipped + o.skipped,
        }
    }

    const EMPTY: Self = Self {
        bound_f: f64::NEG_INFINITY,
        bound_g: f64::NEG_INFINITY,
        coupling_tamed: f64::NEG_INFINITY,
        coupling_untamed: f64::NEG_INFINITY,
        modification_f: f64::NEG_INFINITY,
        modification_g: f64::NEG_INFINITY,
        skipped: 0,
    };
}

/// `(value - bound) / (1 + bound)`, with an infinite bound counted as satisfied.
fn normalized_excess(value: f64, log_bound: f64) -> f64 {
    let bound = log_bound.exp();
    if bound.is_infinite() {
        return -1.0;
    }
    (value - bound) / (1.0 + bound)
}

/// Exponents `(m1, m2)` in `|f - f_h|^2 <= c2^2 h^(2 alpha) x^m1` and
/// `|g - g_h|^2 <= c3^2 h^(2 alpha) x^m2`.
pub fn modification_exponents(params: &ModelParams, alpha: f64) -> (f64, f64) {
    (
        2.0 * (2.0 * alpha + 1.0) * params.kappa,
        2.0 * (2.0 * params.kappa * alpha + params.rho),
    )
}

/// Smallest coupling constant `gamma` that covers the moments needed by the
/// modification error, `(max(m1, m2) - 1) / 2`.
pub fn required_gamma(params: &ModelParams, alpha: f64) -> f64 {
    let (m1, m2) = modification_exponents(params, alpha);
    (m1.max(m2) - 1.0) / 2.0
}

/// Samples the coefficient assumptions for step `h` on `grid`.
///
/// In the critical case `gamma` is capped at `c2/c3^2`; otherwise it is used
/// as given. An all-fail report is a valid result.
pub fn check_assumptions(
    params: &ModelParams,
    cfg: &TamingConfig,
    h: f64,
    grid: &GridSpec,
    gamma: f64,
) -> Result<AssumptionReport, TamingError> {
    let tamed = TamedCoefficients::new(params, cfg, h)?;
    let regime = classify_regime(params, cfg.alpha);
    let gamma_used = match regime.kind {
        RegimeKind::Critical => gamma.min(regime.ratio),
        RegimeKind::NonCritical => gamma,
    };
    let alpha = cfg.alpha;
    let (m1, m2) = modification_exponents(params, alpha);
    let gamma_required = required_gamma(params, alpha);

    let sqrt_h = h.sqrt();
    let g_scale = h.powf(params.rho / (2.0 * params.kappa));
    let log_f_bound = 2.0 * params.c2.ln() + 2.0 * alpha * h.ln();
    let log_g_bound = 2.0 * params.c3.ln() + 2.0 * alpha * h.ln();
    let c3_sq = params.c3 * params.c3;

    let margins = (0..grid.points)
        .into_par_iter()
        .map(|i| {
            let x = grid.point(i);
            let (fh, gh) = tamed.eval(x);
            let ln_x = x.ln();

            // -c2 x^(kappa+1) + gamma c3^2 x^(2 rho), factored so large x gives -inf, not NaN
            let untamed = (2.0 * params.rho * ln_x).exp()
                * (gamma_used * c3_sq
                    - params.c2 * ((params.kappa + 1.0 - 2.0 * params.rho) * ln_x).exp());

            let (modification_f, modification_g, skipped) =
                match (guarded_pow(x, params.kappa), guarded_pow(x, params.rho)) {
                    (Ok(xk), Ok(xr)) => {
                        let df = -params.c2 * xk - fh;
                        let dg = params.c3 * xr - gh;
                        (
                            normalized_excess(df * df, log_f_bound + m1 * ln_x),
                            normalized_excess(dg * dg, log_g_bound + m2 * ln_x),
                            0,
                        )
                    }
                    _ => (f64::NEG_INFINITY, f64::NEG_INFINITY, 1),
                };

            PointMargins {
                bound_f: fh.abs() * sqrt_h - params.c2,
                bound_g: gh.abs() * g_scale - params.c3,
                coupling_tamed: x * fh + gamma_used * gh * gh,
                coupling_untamed: untamed,
                modification_f,
                modification_g,
                skipped,
            }
        })
        .reduce(|| PointMargins::EMPTY, PointMargins::merge);

    let bound = margins.coupling_untamed.max(0.0);
    let ok = |excess: f64, scale: f64| excess <= MARGIN_TOLERANCE * (1.0 + scale.abs());
    let pass = ok(margins.bound_f, params.c2)
        && ok(margins.bound_g, params.c3)
        && ok(margins.coupling_tamed - bound, bound)
        && ok(margins.modification_f, 0.0)
        && ok(margins.modification_g, 0.0);

    Ok(AssumptionReport {
        h,
        grid: *grid,
        alpha,
        bound_f_margin: margins.bound_f,
        bound_g_margin: margins.bound_g,
        coupling_sup: margins.coupling_tamed,
        coupling_bound: bound,
        gamma_requested: gamma,
        gamma_used,
        gamma_required,
        m1,
        m2,
        modification_f_margin: margins.modification_f,
        modification_g_margin: margins.modification_g,
        modification_skipped: margins.skipped,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Preset;
    use proptest::prelude::*;

    fn half() -> TamingConfig {
        TamingConfig::default()
    }

    #[test]
    fn vanishes_at_origin() {
        let p = Preset::Eg1.params();
        assert!(f_h(&p, &half(), 0.1, 1e-12).unwrap().abs() < 1e-10);
        assert!(g_h(&p, &half(), 0.1, 1e-12).unwrap().abs() < 1e-10);
    }

    #[test]
    fn hand_evaluated_point() {
        // h = 0.25, x = 2: sqrt(h) x^5 = 16
        let p = Preset::Eg1.params();
        let f = f_h(&p, &half(), 0.25, 2.0).unwrap();
        let g = g_h(&p, &half(), 0.25, 2.0).unwrap();
        assert!((f - (-64.0 / 17.0)).abs() < 1e-14);
        assert!((g - 2f64.powf(1.5) / 17.0).abs() < 1e-14);
    }

    #[test]
    fn bounded_by_negative_power_of_h() {
        let p = Preset::Eg1.params();
        let grid = GridSpec::default();
        for h in [1e-4, 0.1, 0.25, 1.0] {
            let t = TamedCoefficients::new(&p, &half(), h).unwrap();
            let f_cap = p.c2 / h.sqrt();
            let g_cap = p.c3 * h.powf(-p.rho / (2.0 * p.kappa));
            for i in 0..grid.points {
                let (f, g) = t.eval(grid.point(i));
                assert!(f.abs() <= f_cap * (1.0 + 1e-12));
                assert!(g.abs() <= g_cap * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn large_x_branch_is_continuous() {
        let p = Preset::Eg2.params();
        let h = 2f64.powi(-6);
        let t = TamedCoefficients::new(&p, &half(), h).unwrap();
        // h^(1/2) x^3 = 1e8 at the switch point
        let x_switch = (1e8 / h.sqrt()).powf(1.0 / 3.0);
        let (f_lo, g_lo) = t.eval(x_switch * (1.0 - 1e-9));
        let (f_hi, g_hi) = t.eval(x_switch * (1.0 + 1e-9));
        assert!((f_lo - f_hi).abs() <= 1e-7 * f_lo.abs());
        assert!((g_lo - g_hi).abs() <= 1e-7 * g_lo.abs());
        let (f, g) = t.eval(1e300);
        assert!(f.is_finite() && g.is_finite());
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = Preset::Eg1.params();
        assert_eq!(
            f_h(&p, &half(), 0.0, 1.0),
            Err(TamingError::NonPositiveStep(0.0))
        );
        assert_eq!(
            g_h(&p, &half(), 0.1, -2.0),
            Err(TamingError::NonPositiveState(-2.0))
        );
        assert_eq!(
            TamingConfig::new(0.25, 1.0),
            Err(TamingError::AlphaTooSmall(0.25))
        );
        assert!(TamingConfig::new(0.5, 0.0).is_err());
    }

    #[test]
    fn modification_error_ratio_converges() {
        // |f - f_h| / h^alpha -> c2 x^((2 alpha + 1) kappa) as h -> 0, for alpha = 1/2
        let p = Preset::Eg1.params();
        let x: f64 = 0.8;
        let target = p.c2 * x.powf(2.0 * p.kappa);
        let mut prev_gap = f64::INFINITY;
        for k in 10..=20 {
            let h = 2f64.powi(-k);
            let f = -p.c2 * x.powf(p.kappa);
            let ratio = (f - f_h(&p, &half(), h, x).unwrap()).abs() / h.sqrt();
            let gap = (ratio - target).abs();
            assert!(gap < prev_gap, "k = {k}");
            prev_gap = gap;
        }
        assert!(prev_gap / target < 1e-3);
    }

    #[test]
    fn assumptions_hold_for_presets() {
        let h = 2f64.powi(-6);
        let grid = GridSpec::default();
        let r1 = check_assumptions(&Preset::Eg1.params(), &half(), h, &grid, 10.0).unwrap();
        assert!(r1.pass, "{r1:?}");
        assert_eq!(r1.gamma_used, 10.0);
        assert_eq!(r1.gamma_required, 9.5);
        assert!(r1.gamma_sufficient());
        assert!(r1.coupling_bound > 0.0);

        let r2 = check_assumptions(&Preset::Eg2.params(), &half(), h, &grid, 16.0).unwrap();
        assert!(r2.pass, "{r2:?}");
        assert!(r2.coupling_sup <= r2.coupling_bound + MARGIN_TOLERANCE);

        // gamma above c2/c3^2 is capped in the critical case
        let r3 = check_assumptions(&Preset::Eg3.params(), &half(), h, &grid, 100.0).unwrap();
        assert!((r3.gamma_used - 3.5).abs() < 1e-15);
        assert!(r3.pass, "{r3:?}");
    }

    #[test]
    fn huge_step_still_bounded() {
        let r = check_assumptions(
            &Preset::Eg1.params(),
            &half(),
            1e6,
            &GridSpec::default(),
            10.0,
        )
        .unwrap();
        assert!(r.pass, "{r:?}");
        assert!(r.bound_f_margin <= MARGIN_TOLERANCE && r.bound_g_margin <= MARGIN_TOLERANCE);
    }

    #[test]
    fn quarter_alpha_fails() {
        let cfg = TamingConfig::unchecked(0.25, 1.0);
        for preset in Preset::ALL {
            let r = check_assumptions(
                &preset.params(),
                &cfg,
                2f64.powi(-6),
                &GridSpec::default(),
                10.0,
            )
            .unwrap();
            assert!(!r.pass);
            assert!(r.bound_f_margin > 0.0);
        }
    }

    proptest! {
        #[test]
        fn sign_and_domination(x in 1e-6f64..1e6, h in 1e-8f64..10.0, alpha in 0.5f64..2.0, which in 0usize..3) {
            let p = Preset::ALL[which].params();
            let cfg = TamingConfig::new(alpha, 1.0).unwrap();
            let (f, g) = TamedCoefficients::new(&p, &cfg, h).unwrap().eval(x);
            prop_assert!(f < 0.0 && g > 0.0);
            let f_full = p.c2 * x.powf(p.kappa);
            let g_full = p.c3 * x.powf(p.rho);
            prop_assert!(f.abs() <= f_full * (1.0 + 1e-12));
            prop_assert!(g <= g_full * (1.0 + 1e-12));
        }

        #[test]
        fn consistent_as_h_vanishes(x in 1e-3f64..10.0) {
            let p = Preset::Eg2.params();
            let h = 1e-24;
            let (f, g) = TamedCoefficients::new(&p, &half(), h).unwrap().eval(x);
            prop_assert!((f + p.c2 * x.powf(p.kappa)).abs() <= 1e-9 * (1.0 + f.abs()));
            prop_assert!((g - p.c3 * x.powf(p.rho)).abs() <= 1e-9 * (1.0 + g.abs()));
        }
    }
}
