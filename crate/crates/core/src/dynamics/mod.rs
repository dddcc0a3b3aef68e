//! Time integration of the modal delay–integro-differential system.
//!
//! Each mode `k` of `A` evolves as
//!
//! ```text
//! u_k'' = -(1 - μ̃) λ_k u_k - λ_k ∫ μ(s) η_k(s) ds - b(t) u_k'(t - τ)
//! ```
//!
//! (or `+ k(t) u_k'` in anti-damping mode). The run proceeds by the method of
//! steps: the delayed velocity is always read from already computed history.

mod delay;
mod history;
mod integrator;
mod trajectory;

pub use delay::{delayed_velocity, DelayBuffer};
pub use history::{HistoryLine, LagGrid};
pub(crate) use integrator::aux_memory_energy;
pub use integrator::{
    init_state, memory_force, AuxMemory, Backend, Execution, Integrator, Memory, ModalState, DIVERGENCE_FACTOR,
};
pub use trajectory::{simulate, simulate_ode_oracle, Snapshot, SolverOptions, Trajectory};

use thiserror::Error;

use crate::model::ModelError;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("state blew up at t = {t} (E_S/E_S(0) = {energy_ratio:e})")]
    NonFiniteState { t: f64, energy_ratio: f64 },
    /// A run aborted by the divergence guard; carries everything computed so far.
    #[error("simulation diverged at t = {t} (E_S/E_S(0) = {energy_ratio:e})")]
    Diverged {
        t: f64,
        energy_ratio: f64,
        partial: Box<Trajectory>,
    },
    #[error("delay buffer holds {have} entries, needs {need}")]
    BufferUnderfilled { have: usize, need: usize },
    #[error("the auxiliary-variable backend needs an exponential kernel")]
    KernelNotExponential,
    #[error(transparent)]
    Model(#[from] ModelError),
}
