//! Stability indices of non-hyperbolic equilibria in planar ODEs.
//!
//! The crate provides the vector fields of a few planar families whose origin
//! is a non-hyperbolic equilibrium, closed-form oracles for their stability
//! indices, an adaptive Runge–Kutta integrator that decides basin membership,
//! and a sampler that estimates the local basin fraction `Σ_ε` on a ladder of
//! neighbourhood sizes and fits the indices `σ_-`, `σ_+` and `σ` from the
//! log–log slopes.
//!
//! ```
//! use stabindex::{analytic, ExtendedReal, SystemSpec};
//!
//! let spec = SystemSpec::power_attract(2.0).unwrap();
//! let (sigma, sigma_loc) = analytic::analytic_sigma(&spec);
//! assert_eq!(sigma, ExtendedReal::Finite(1.0));
//! assert_eq!(sigma_loc, sigma);
//! ```

pub mod analytic;
pub mod config;
pub mod error;
pub mod extended;
pub mod fit;
pub mod integrator;
pub mod measure;
pub mod output;
pub mod sampling;
pub mod system;
pub mod verify;

pub use analytic::{ConeLabel, Cones};
pub use error::{Error, Result};
pub use extended::ExtendedReal;
pub use fit::{fit_indices, FitOptions, IndexEstimate};
pub use integrator::{integrate, integrate_observed, BasinLabel, IntegratorConfig, Outcome, OutcomeKind};
pub use measure::{estimate_fraction, MeasureSample};
pub use system::{Family, State, SystemSpec, Velocity};
