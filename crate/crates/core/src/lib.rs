#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Modal simulation of viscoelastic evolution equations with fading memory and
//! intermittent delay feedback, plus the decay certificates that go with them.
//!
//! The abstract problem
//!
//! ```text
//! u_tt + A u - ∫₀^∞ μ(s) A u(t - s) ds + b(t) u_t(t - τ) = 0
//! ```
//!
//! is projected on the eigenbasis of `A`, where it splits into scalar
//! equations, one per mode.

pub mod certificates;
pub mod config;
pub mod dynamics;
pub mod energy;
pub mod format;
pub mod model;

pub use certificates::{
    calibrate_decay, calibrate_trajectory, certify, check_asymptotic, check_exponential, cycle_factor, decay_envelope,
    observability_factor, CertificateError, CertificateReport, CertifyOptions, DecayConstants, Variant, Verdict,
};
pub use dynamics::{simulate, simulate_ode_oracle, Backend, DynamicsError, Execution, SolverOptions, Trajectory};
pub use energy::EnergySample;
pub use model::{ModelError, Scenario, ValidatedScenario};
