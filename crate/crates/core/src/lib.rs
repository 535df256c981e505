//! Positivity-preserving simulation of the generalized Aït-Sahalia model.
//!
//! The core of the crate is the semi-implicit tamed Euler scheme ([`SchemeKind::Tem`]),
//! an explicit scheme that stays strictly positive for every step size because
//! its only implicit term, `c_m1 h / Y_{n+1}`, leads to a quadratic with a single
//! positive root. Backward Euler ([`SchemeKind::Bem`]) and Euler-Maruyama
//! ([`SchemeKind::Em`]) are provided as baselines.
//!
//! ```
//! use ppsde_core::{integrate, BrownianLattice, Preset, SchemeConfig, SchemeKind};
//!
//! let params = Preset::Eg1.params();
//! let lattice = BrownianLattice::generate(42, 0, 1.0, 8).unwrap();
//! let cfg = SchemeConfig::new(SchemeKind::Tem, 1.0, 256);
//! let path = integrate(&params, &cfg, lattice.increments()).unwrap();
//! assert!(path.states.iter().all(|&y| y > 0.0));
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod model;
pub mod montecarlo;
pub mod noise;
pub mod output;
pub mod schemes;
pub mod taming;

pub use model::{classify_regime, validate, ModelError, ModelParams, Preset, Regime, RegimeKind};
pub use montecarlo::{
    fit_rate, mlmc_estimate, mlmc_fixed, moment_study, single_level_estimate, strong_error_study,
    ConvergenceReport, McError, MlmcConfig, MlmcResult, MomentReport, MomentStudy, Payoff, RateFit,
    StrongErrorStudy,
};
pub use noise::{BrownianLattice, NoiseError};
pub use schemes::{
    bem_step, em_step, integrate, tem_step, NewtonSettings, SchemeConfig, SchemeError, SchemeKind,
    StepOutcome, StepStatus, Stepper, Trajectory,
};
pub use taming::{check_assumptions, AssumptionReport, GridSpec, TamingConfig, TamingError};
