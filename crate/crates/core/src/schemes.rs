//! One-step maps and trajectory integration on a uniform mesh.
//!
//! * [`SchemeKind::Tem`]: tamed explicit drift and diffusion with the `c_m1 / Y`
//!   term taken implicitly,
//!   ```text
//!   Y' = Y + c_m1 h / Y' + (-c0 + c1 Y + f_h(Y)) h + g_h(Y) dW
//!   ```
//!   The implicit part is `Y' - c_m1 h / Y' = a`, whose positive root
//!   `(a + sqrt(a^2 + 4 c_m1 h)) / 2` exists for every real `a` and every `h > 0`.
//! * [`SchemeKind::Bem`]: drift-implicit backward Euler, solved by safeguarded
//!   Newton on a bracket. Needs `h < 1/c1`.
//! * [`SchemeKind::Em`]: plain Euler-Maruyama, which can leave `(0, inf)`.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::ModelParams;
use crate::taming::{TamedCoefficients, TamingConfig, TamingError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SchemeKind {
    Tem,
    Bem,
    Em,
}

impl SchemeKind {
    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::Tem => "TEM",
            SchemeKind::Bem => "BEM",
            SchemeKind::Em => "EM",
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown scheme `{0}` (valid schemes: TEM, BEM, EM)")]
pub struct UnknownScheme(pub String);

impl FromStr for SchemeKind {
    type Err = UnknownScheme;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "TEM" => Ok(SchemeKind::Tem),
            "BEM" => Ok(SchemeKind::Bem),
            "EM" => Ok(SchemeKind::Em),
            _ => Err(UnknownScheme(s.to_string())),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchemeError {
    #[error("BEM needs h < 1/c1: h = {h}, 1/c1 = {limit}")]
    StepTooLarge { h: f64, limit: f64 },
    #[error("step count must be positive")]
    ZeroSteps,
    #[error("expected {expected} increments, got {actual}")]
    IncrementCountMismatch { expected: usize, actual: usize },
    #[error(transparent)]
    Taming(#[from] TamingError),
}

/// Stopping rule for the BEM root solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonSettings {
    pub max_iters: u32,
    pub abs_tol: f64,
    pub rel_tol: f64,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        Self {
            max_iters: 100,
            abs_tol: 1e-12,
            rel_tol: 1e-10,
        }
    }
}

/// Scheme, uniform step `h = horizon / n_steps` and per-scheme settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeConfig {
    pub kind: SchemeKind,
    pub horizon: f64,
    pub n_steps: usize,
    pub taming: TamingConfig,
    pub newton: NewtonSettings,
}

impl SchemeConfig {
    pub fn new(kind: SchemeKind, horizon: f64, n_steps: usize) -> Self {
        Self {
            kind,
            horizon,
            n_steps,
            taming: TamingConfig {
                alpha: 0.5,
                horizon,
            },
            newton: NewtonSettings::default(),
        }
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.taming.alpha = alpha;
        self
    }

    /// Step size. For `n_steps = 0` this is the whole horizon.
    pub fn h(&self) -> f64 {
        self.horizon / self.n_steps.max(1) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StepStatus {
    Ok,
    PositivityLost,
    SolverFailed,
    Overflow,
}

impl StepStatus {
    pub fn name(self) -> &'static str {
        match self {
            StepStatus::Ok => "ok",
            StepStatus::PositivityLost => "positivity_lost",
            StepStatus::SolverFailed => "solver_failed",
            StepStatus::Overflow => "overflow",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub y_next: f64,
    pub status: StepStatus,
    /// Newton/bisection iterations, BEM only.
    pub newton_iters: u32,
}

impl StepOutcome {
    fn ok(y_next: f64) -> Self {
        Self {
            y_next,
            status: StepStatus::Ok,
            newton_iters: 0,
        }
    }

    fn failed(y_next: f64, status: StepStatus) -> Self {
        Self {
            y_next,
            status,
            newton_iters: 0,
        }
    }
}

/// Positive root of `x - c / x = a` for `c > 0`.
///
/// Uses the cancellation-free form `2c / (sqrt(a^2 + 4c) - a)` when `a < 0`.
#[inline]
pub fn positive_root(a: f64, c: f64) -> f64 {
    let disc = if a.abs() < 1e150 {
        (a * a + 4.0 * c).sqrt()
    } else {
        a.abs() * (1.0 + 4.0 * c / a / a).sqrt()
    };
    if a >= 0.0 {
        0.5 * (a + disc)
    } else {
        2.0 * c / (disc - a)
    }
}

/// A scheme bound to parameters and a step size.
#[derive(Debug, Clone, Copy)]
pub struct Stepper {
    kind: SchemeKind,
    params: ModelParams,
    h: f64,
    tamed: TamedCoefficients,
    newton: NewtonSettings,
}

/// How an integration ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StoppedAt {
    /// Index of the step that failed (`0` is the step from `t_0` to `t_1`).
    pub step: usize,
    pub status: StepStatus,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IntegrationSummary {
    pub stopped: Option<StoppedAt>,
    pub newton_iters: u64,
}

impl Stepper {
    pub fn new(params: &ModelParams, cfg: &SchemeConfig) -> Result<Self, SchemeError> {
        if cfg.n_steps == 0 {
            return Err(SchemeError::ZeroSteps);
        }
        Self::with_step(params, cfg.kind, cfg.h(), &cfg.taming, cfg.newton)
    }

    pub fn with_step(
        params: &ModelParams,
        kind: SchemeKind,
        h: f64,
        taming: &TamingConfig,
        newton: NewtonSettings,
    ) -> Result<Self, SchemeError> {
        let tamed = TamedCoefficients::new(params, taming, h)?;
        if kind == SchemeKind::Bem && !(h * params.c1 < 1.0) {
            return Err(SchemeError::StepTooLarge {
                h,
                limit: 1.0 / params.c1,
            });
        }
        Ok(Self {
            kind,
            params: *params,
            h,
            tamed,
            newton,
        })
    }

    pub fn kind(&self) -> SchemeKind {
        self.kind
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    #[inline]
    pub fn step(&self, y: f64, dw: f64) -> StepOutcome {
        match self.kind {
            SchemeKind::Tem => self.tem(y, dw),
            SchemeKind::Bem => self.bem(y, dw),
            SchemeKind::Em => self.em(y, dw),
        }
    }

    #[inline]
    fn tem(&self, y: f64, dw: f64) -> StepOutcome {
        if !(y > 0.0) {
            return StepOutcome::failed(y, StepStatus::PositivityLost);
        }
        let p = &self.params;
        let (fh, gh) = self.tamed.eval(y);
        let theta = -p.c0 + p.c1 * y + fh;
        let a = y + theta * self.h + gh * dw;
        if !a.is_finite() {
            return StepOutcome::failed(a, StepStatus::Overflow);
        }
        let y_next = positive_root(a, p.c_m1 * self.h);
        if y_next > 0.0 && y_next.is_finite() {
            StepOutcome::ok(y_next)
        } else {
            // only reachable through underflow of c_m1 h / |a|
            StepOutcome::failed(y_next, StepStatus::PositivityLost)
        }
    }

    fn em(&self, y: f64, dw: f64) -> StepOutcome {
        if !(y > 0.0) {
            return StepOutcome::failed(y, StepStatus::PositivityLost);
        }
        let (drift, diffusion) = match (self.params.drift(y), self.params.diffusion(y)) {
            (Ok(d), Ok(s)) => (d, s),
            _ => return StepOutcome::failed(f64::NAN, StepStatus::Overflow),
        };
        let y_next = y + drift * self.h + diffusion * dw;
        if !y_next.is_finite() {
            StepOutcome::failed(y_next, StepStatus::Overflow)
        } else if y_next <= 0.0 {
            StepOutcome::failed(y_next, StepStatus::PositivityLost)
        } else {
            StepOutcome::ok(y_next)
        }
    }

    fn bem(&self, y: f64, dw: f64) -> StepOutcome {
        if !(y > 0.0) {
            return StepOutcome::failed(y, StepStatus::PositivityLost);
        }
        let p = &self.params;
        let b = y + p.c3 * (p.rho * y.ln()).exp() * dw;
        if !b.is_finite() {
            return StepOutcome::failed(b, StepStatus::Overflow);
        }
        let residual = BemResidual {
            slope: 1.0 - self.h * p.c1,
            hcm1: self.h * p.c_m1,
            hc2: self.h * p.c2,
            kappa: p.kappa,
            shift: self.h * p.c0 - b,
        };
        match residual.solve(y.max(self.h.sqrt() * p.c_m1.sqrt()), &self.newton) {
            Some((root, iters)) => StepOutcome {
                y_next: root,
                status: StepStatus::Ok,
                newton_iters: iters,
            },
            None => StepOutcome::failed(f64::NAN, StepStatus::SolverFailed),
        }
    }

    /// Integrates from `x0` over `increments`, writing `states` (cleared first).
    ///
    /// Stops at the first failing step. A step that loses positivity still
    /// records its (non-positive) value; overflow and solver failure do not.
    pub fn integrate_into(
        &self,
        x0: f64,
        increments: &[f64],
        states: &mut Vec<f64>,
    ) -> IntegrationSummary {
        states.clear();
        states.reserve(increments.len() + 1);
        states.push(x0);
        let mut summary = IntegrationSummary::default();
        let mut y = x0;
        for (n, &dw) in increments.iter().enumerate() {
            let out = self.step(y, dw);
            summary.newton_iters += u64::from(out.newton_iters);
            if out.status != StepStatus::Ok {
                if out.status == StepStatus::PositivityLost {
                    states.push(out.y_next);
                }
                summary.stopped = Some(StoppedAt {
                    step: n,
                    status: out.status,
                });
                break;
            }
            y = out.y_next;
            states.push(y);
        }
        summary
    }
}

/// `F(z) = (1 - h c1) z - h c_m1 / z + h c0 + h c2 z^kappa - b`, strictly
/// increasing on `(0, inf)` when `h c1 < 1`.
struct BemResidual {
    slope: f64,
    hcm1: f64,
    hc2: f64,
    kappa: f64,
    shift: f64,
}

const MAX_BRACKET_DOUBLINGS: u32 = 200;

impl BemResidual {
    #[inline]
    fn value_and_slope(&self, z: f64) -> (f64, f64) {
        let zk = (self.kappa * z.ln()).exp();
        let inv = 1.0 / z;
        let f = self.slope * z - self.hcm1 * inv + self.shift + self.hc2 * zk;
        let df = self.slope + self.hcm1 * inv * inv + self.hc2 * self.kappa * zk * inv;
        (f, df)
    }

    fn converged(f: f64, z: f64, tol: &NewtonSettings) -> bool {
        f.abs() <= tol.abs_tol + tol.rel_tol * z.abs()
    }

    /// Returns the root and the number of Newton/bisection iterations.
    fn solve(&self, guess: f64, tol: &NewtonSettings) -> Option<(f64, u32)> {
        let (f0, df0) = self.value_and_slope(guess);
        if Self::converged(f0, guess, tol) {
            return Some((guess, 0));
        }
        // bracket lo < root < hi with F(lo) < 0 < F(hi)
        let (mut lo, mut hi);
        if f0 > 0.0 {
            hi = guess;
            lo = guess;
            let mut found = false;
            for _ in 0..MAX_BRACKET_DOUBLINGS {
                lo *= 0.5;
                let (f, _) = self.value_and_slope(lo);
                if f < 0.0 {
                    found = true;
                    break;
                }
                if f == 0.0 {
                    return Some((lo, 0));
                }
                hi = lo;
            }
            if !found {
                return None;
            }
        } else {
            lo = guess;
            hi = guess;
            let mut found = false;
            for _ in 0..MAX_BRACKET_DOUBLINGS {
                hi *= 2.0;
                let (f, _) = self.value_and_slope(hi);
                if f > 0.0 || f.is_nan() {
                    found = true;
                    break;
                }
                if f == 0.0 {
                    return Some((hi, 0));
                }
                lo = hi;
            }
            if !found {
                return None;
            }
        }

        let mut z = guess.clamp(lo, hi);
        let (mut f, mut df) = if z == guess {
            (f0, df0)
        } else {
            self.value_and_slope(z)
        };
        let mut prev_abs = f64::INFINITY;
        for iter in 1..=tol.max_iters {
            let newton = z - f / df;
            let mut next = if newton.is_finite() && newton > lo && newton < hi && f.abs() < prev_abs
            {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if next <= lo || next >= hi {
                next = 0.5 * (lo + hi);
            }
            prev_abs = f.abs();
            z = next;
            let (fz, dfz) = self.value_and_slope(z);
            f = fz;
            df = dfz;
            if Self::converged(f, z, tol) {
                return Some((z, iter));
            }
            if f.is_nan() || f > 0.0 {
                hi = z;
            } else {
                lo = z;
            }
            if hi - lo <= 4.0 * f64::EPSILON * hi {
                return Some((z, iter));
            }
        }
        None
    }
}

fn single(
    params: &ModelParams,
    cfg: &SchemeConfig,
    kind: SchemeKind,
) -> Result<Stepper, SchemeError> {
    Stepper::with_step(params, kind, cfg.h(), &cfg.taming, cfg.newton)
}

/// One TEM step from `y` with increment `dw` and step `cfg.h()`.
pub fn tem_step(
    params: &ModelParams,
    cfg: &SchemeConfig,
    y: f64,
    dw: f64,
) -> Result<StepOutcome, SchemeError> {
    Ok(single(params, cfg, SchemeKind::Tem)?.step(y, dw))
}

/// One BEM step. Fails with [`SchemeError::StepTooLarge`] unless `h c1 < 1`.
pub fn bem_step(
    params: &ModelParams,
    cfg: &SchemeConfig,
    y: f64,
    dw: f64,
) -> Result<StepOutcome, SchemeError> {
    Ok(single(params, cfg, SchemeKind::Bem)?.step(y, dw))
}

/// One Euler-Maruyama step. Failures are reported in the status.
pub fn em_step(
    params: &ModelParams,
    cfg: &SchemeConfig,
    y: f64,
    dw: f64,
) -> Result<StepOutcome, SchemeError> {
    Ok(single(params, cfg, SchemeKind::Em)?.step(y, dw))
}

/// A simulated path on the uniform mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub kind: SchemeKind,
    pub h: f64,
    /// `Y_0 .. Y_n`; shorter than `N + 1` when the integration stopped early.
    pub states: Vec<f64>,
    /// Status of each attempted step.
    pub statuses: Vec<StepStatus>,
    pub stopped: Option<StoppedAt>,
    pub newton_iters: u64,
    pub elapsed: Duration,
}

impl Trajectory {
    pub fn completed(&self) -> bool {
        self.stopped.is_none()
    }

    pub fn final_status(&self) -> StepStatus {
        self.stopped.map_or(StepStatus::Ok, |s| s.status)
    }
}

/// Integrates `cfg.n_steps` steps from `params.x0`.
pub fn integrate(
    params: &ModelParams,
    cfg: &SchemeConfig,
    increments: &[f64],
) -> Result<Trajectory, SchemeError> {
    if increments.len() != cfg.n_steps {
        return Err(SchemeError::IncrementCountMismatch {
            expected: cfg.n_steps,
            actual: increments.len(),
        });
    }
    let stepper = single(params, cfg, cfg.kind)?;
    let start = Instant::now();
    let mut states = Vec::new();
    let summary = stepper.integrate_into(params.x0, increments, &mut states);
    let elapsed = start.elapsed();
    let attempted = summary.stopped.map_or(increments.len(), |s| s.step + 1);
    let mut statuses = vec![StepStatus::Ok; attempted];
    if let Some(stop) = summary.stopped {
        statuses[stop.step] = stop.status;
    }
    Ok(Trajectory {
        kind: cfg.kind,
        h: stepper.h,
        states,
        statuses,
        stopped: summary.stopped,
        newton_iters: summary.newton_iters,
        elapsed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Preset;
    use crate::noise::BrownianLattice;
    use crate::taming::g_h;
    use proptest::prelude::*;

    fn cfg(kind: SchemeKind, h: f64) -> SchemeConfig {
        // one step of size h
        SchemeConfig::new(kind, h, 1)
    }

    /// Root of an increasing function on (lo, hi) by plain bisection.
    fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        assert!(f(lo) < 0.0 && f(hi) > 0.0);
        for _ in 0..400 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if f(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn zero_argument_gives_sqrt() {
        let p = Preset::Eg1.params();
        let h = 0.3;
        let y = 0.9;
        let t = TamedCoefficients::new(&p, &TamingConfig::default(), h).unwrap();
        let (fh, gh) = t.eval(y);
        let dw = -(y + (-p.c0 + p.c1 * y + fh) * h) / gh;
        let out = tem_step(&p, &cfg(SchemeKind::Tem, h), y, dw).unwrap();
        assert!((out.y_next - (p.c_m1 * h).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn tem_matches_bisection() {
        let p = Preset::Eg1.params();
        let (h, y, dw): (f64, f64, f64) = (0.25, 1.0, 0.1);
        let fh = -p.c2 / (1.0 + h.sqrt());
        let gh = g_h(&p, &TamingConfig::default(), h, y).unwrap();
        let a = y + (-p.c0 + p.c1 * y + fh) * h + gh * dw;
        let c = p.c_m1 * h;
        let oracle = bisect(|x| x - c / x - a, 1e-16, a.abs() + 2.0 + c.sqrt());
        let out = tem_step(&p, &cfg(SchemeKind::Tem, h), y, dw).unwrap();
        assert_eq!(out.status, StepStatus::Ok);
        assert!((out.y_next - oracle).abs() <= 1e-12 * oracle);
    }

    #[test]
    fn tem_survives_adversarial_step() {
        let p = Preset::Eg1.params();
        for y in [1e-6, 1.0, 1e6] {
            let out = tem_step(&p, &cfg(SchemeKind::Tem, 10.0), y, -1e6).unwrap();
            assert_eq!(out.status, StepStatus::Ok);
            assert!(out.y_next > 0.0);
        }
    }

    #[test]
    fn bem_consistent_as_h_vanishes() {
        let p = Preset::Eg1.params();
        let y = 1.3;
        let out = bem_step(&p, &cfg(SchemeKind::Bem, 1e-8), y, 0.0).unwrap();
        let d = p.drift(y).unwrap();
        assert!((out.y_next - y).abs() <= 1e-6 * (1.0 + d.abs()));
    }

    #[test]
    fn bem_matches_bisection() {
        let p = Preset::Eg1.params();
        let (h, y, dw): (f64, f64, f64) = (2f64.powi(-6), 1.0, 0.05);
        let b = y + p.c3 * y.powf(p.rho) * dw;
        let f = |z: f64| z - h * (p.c_m1 / z - p.c0 + p.c1 * z - p.c2 * z.powf(p.kappa)) - b;
        let oracle = bisect(f, 1e-8, 10.0);
        let out = bem_step(&p, &cfg(SchemeKind::Bem, h), y, dw).unwrap();
        assert_eq!(out.status, StepStatus::Ok);
        assert!((out.y_next - oracle).abs() < 1e-10);
        assert!(out.newton_iters >= 1);
    }

    #[test]
    fn bem_step_restriction() {
        let p = Preset::Eg3.params();
        assert_eq!(
            bem_step(&p, &cfg(SchemeKind::Bem, 0.25), 1.0, 0.0),
            Err(SchemeError::StepTooLarge {
                h: 0.25,
                limit: 0.25
            })
        );
        assert!(bem_step(&p, &cfg(SchemeKind::Bem, 0.0625), 1.0, 0.0).is_ok());
    }

    #[test]
    fn bem_roots_positive_and_solve_residual() {
        let p = Preset::Eg1.params();
        let h = 2f64.powi(-4);
        let stepper = Stepper::new(&p, &cfg(SchemeKind::Bem, h)).unwrap();
        let normals = crate::noise::CounterNormals::new(5);
        for i in 0..100_000u64 {
            let y = (3.0 * normals.draw(0, i)).exp();
            let dw = h.sqrt() * 3.0 * normals.draw(1, i);
            let out = stepper.step(y, dw);
            assert_eq!(out.status, StepStatus::Ok, "y = {y}, dw = {dw}");
            let z = out.y_next;
            assert!(z > 0.0);
            let b = y + p.c3 * y.powf(p.rho) * dw;
            let f = z - h * (p.c_m1 / z - p.c0 + p.c1 * z - p.c2 * z.powf(p.kappa)) - b;
            let tol = NewtonSettings::default();
            // recomputed residual carries its own rounding, so allow a few ulps of the terms
            let scale = b.abs() + z + h * (p.c_m1 / z + p.c2 * z.powf(p.kappa));
            assert!(f.abs() <= tol.abs_tol + tol.rel_tol * z + 1e-14 * scale);
        }
    }

    #[test]
    fn em_behaviour() {
        let p = Preset::Eg1.params();
        let h = 1e-6;
        let y = 1.2;
        let out = em_step(&p, &cfg(SchemeKind::Em, h), y, 0.0).unwrap();
        assert!((out.y_next - (y + p.drift(y).unwrap() * h)).abs() < 1e-15);

        let out = em_step(&p, &cfg(SchemeKind::Em, 0.1), -0.5, 0.0).unwrap();
        assert_eq!(out.status, StepStatus::PositivityLost);

        let h = 2f64.powi(-4);
        let out = em_step(&p, &cfg(SchemeKind::Em, h), 0.01, -5.0 * h.sqrt()).unwrap();
        // drift at 0.01 is ~148, so the step overshoots but stays positive; a
        // positive state near 1 with a large negative shock does not
        assert_eq!(out.status, StepStatus::Ok);
        let out = em_step(&p, &cfg(SchemeKind::Em, h), 2.0, -5.0 * h.sqrt()).unwrap();
        assert_eq!(out.status, StepStatus::PositivityLost);
        assert!(out.y_next <= 0.0);
    }

    #[test]
    fn integrate_edge_cases() {
        let p = Preset::Eg2.params();
        let c = SchemeConfig::new(SchemeKind::Tem, 1.0, 0);
        assert_eq!(c.h(), 1.0);
        let t = integrate(&p, &c, &[]).unwrap();
        assert_eq!(t.states, vec![p.x0]);
        assert!(t.statuses.is_empty());
        assert!(matches!(
            integrate(&p, &SchemeConfig::new(SchemeKind::Tem, 1.0, 4), &[0.0; 3]),
            Err(SchemeError::IncrementCountMismatch {
                expected: 4,
                actual: 3
            })
        ));
    }

    #[test]
    fn integrate_is_deterministic_and_positive() {
        let p = Preset::Eg2.params();
        let lattice = BrownianLattice::generate(42, 0, 1.0, 4).unwrap();
        let c = SchemeConfig::new(SchemeKind::Tem, 1.0, 16);
        let a = integrate(&p, &c, lattice.increments()).unwrap();
        let b = integrate(&p, &c, lattice.increments()).unwrap();
        assert_eq!(a.states.len(), 17);
        assert!(a.states.iter().all(|&y| y > 0.0));
        let bits = |t: &Trajectory| t.states.iter().map(|y| y.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert!(a.completed());
    }

    #[test]
    fn em_trajectory_stops_on_failure() {
        let p = Preset::Eg1.params();
        let c = SchemeConfig::new(SchemeKind::Em, 1.0, 4);
        let t = integrate(&p, &c, &[0.0, -10.0, 0.0, 0.0]).unwrap();
        assert_eq!(
            t.stopped,
            Some(StoppedAt {
                step: 1,
                status: StepStatus::PositivityLost
            })
        );
        assert_eq!(t.states.len(), 3);
        assert!(*t.states.last().unwrap() <= 0.0);
        assert_eq!(t.statuses.len(), 2);
        assert_eq!(t.final_status(), StepStatus::PositivityLost);
    }

    fn tem_bem_gap(alpha: f64, h: f64) -> f64 {
        let p = Preset::Eg1.params();
        let c = cfg(SchemeKind::Tem, h).with_alpha(alpha);
        let t = tem_step(&p, &c, 1.0, 0.0).unwrap().y_next;
        let b = bem_step(&p, &c, 1.0, 0.0).unwrap().y_next;
        (t - b).abs()
    }

    #[test]
    fn tem_bem_agree_to_second_order_with_alpha_one() {
        for k in 8..16 {
            let h = 2f64.powi(-k);
            let ratio = tem_bem_gap(1.0, h) / (h * h);
            assert!(ratio < 100.0, "k = {k}, ratio = {ratio}");
        }
    }

    #[test]
    fn tem_bem_gap_with_half_taming() {
        // sqrt(h) taming leaves an O(h^1.5) one-step gap
        let ratios: Vec<f64> = (8..16)
            .map(|k| {
                let h = 2f64.powi(-k);
                tem_bem_gap(0.5, h) / h.powf(1.5)
            })
            .collect();
        for r in &ratios {
            assert!(*r < 10.0);
        }
        let last = ratios[ratios.len() - 1];
        assert!((last - 2.0).abs() < 0.1, "{ratios:?}");
    }

    #[test]
    fn scheme_names() {
        for k in [SchemeKind::Tem, SchemeKind::Bem, SchemeKind::Em] {
            assert_eq!(k.name().parse::<SchemeKind>(), Ok(k));
            assert_eq!(k.name().to_lowercase().parse::<SchemeKind>(), Ok(k));
        }
        assert!("milstein".parse::<SchemeKind>().is_err());
    }

    proptest! {
        #[test]
        fn root_solves_quadratic(a in -1e12f64..1e12, c in 1e-12f64..1e3) {
            let x = positive_root(a, c);
            prop_assert!(x > 0.0);
            prop_assert!((x - c / x - a).abs() <= 1e-10 * (1.0 + a.abs()));
        }

        #[test]
        fn root_increasing_in_a(mut xs in proptest::collection::vec(-1e6f64..1e6, 2..50), c in 1e-6f64..10.0) {
            xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            xs.dedup();
            for w in xs.windows(2) {
                prop_assert!(positive_root(w[0], c) < positive_root(w[1], c));
            }
        }

        #[test]
        fn tem_always_positive(y in 1e-8f64..1e8, dw in -1e3f64..1e3, h in 1e-6f64..10.0, which in 0usize..3) {
            let p = Preset::ALL[which].params();
            let out = tem_step(&p, &cfg(SchemeKind::Tem, h), y, dw).unwrap();
            prop_assert_eq!(out.status, StepStatus::Ok);
            prop_assert!(out.y_next > 0.0);
        }
    }
}
