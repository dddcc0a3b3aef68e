//! Standard and augmented energies of modal states.
//!
//! With orthonormal modes, Parseval turns every norm into a weighted sum:
//!
//! ```text
//! E_S = ½ Σ v_k² + (1 - μ̃)/2 Σ λ_k u_k² + ½ Σ λ_k ∫ μ(s) η_k(s)² ds
//! E   = E_S + ½ ∫_{t-τ}^t |b(s + τ)| ‖u_t(s)‖² ds
//! ```

use serde::{Deserialize, Serialize};

use crate::dynamics::{aux_memory_energy, DelayBuffer, DynamicsError, Integrator, Memory, ModalState, Trajectory};
use crate::model::ValidatedSchedule;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergySample {
    pub t: f64,
    /// Standard energy `E_S`.
    #[serde(rename = "E_S")]
    pub standard: f64,
    /// Augmented energy `E = E_S + delay_term`.
    #[serde(rename = "E")]
    pub full: f64,
    pub kinetic: f64,
    pub potential: f64,
    pub memory_term: f64,
    pub delay_term: f64,
}

impl EnergySample {
    pub fn new(t: f64, kinetic: f64, potential: f64, memory_term: f64, delay_term: f64) -> Self {
        let standard = kinetic + potential + memory_term;
        EnergySample {
            t,
            standard,
            full: standard + delay_term,
            kinetic,
            potential,
            memory_term,
            delay_term,
        }
    }
}

/// Memory part `½ Σ λ_k ∫ μ η_k²`. The auxiliary backend reconstructs it
/// from its second moment `q`.
pub(crate) fn memory_term(state: &ModalState, integrator: &Integrator<'_>) -> f64 {
    let lambdas = integrator.scenario().eigenvalues();
    match state.memory() {
        Memory::History(lines) => lines
            .iter()
            .zip(state.u())
            .zip(lambdas)
            .map(|((line, &u), l)| 0.5 * l * line.moments(integrator.grid(), u).second)
            .sum(),
        Memory::Auxiliary(aux) => {
            let mass = integrator.kernel_mass();
            aux.iter()
                .zip(state.u())
                .zip(lambdas)
                .map(|((a, &u), l)| 0.5 * l * aux_memory_energy(mass, u, a))
                .sum()
        }
    }
}

pub fn standard_energy(state: &ModalState, integrator: &Integrator<'_>) -> f64 {
    let kinetic = 0.5 * state.v().iter().map(|v| v * v).sum::<f64>();
    let potential = 0.5
        * state
            .u()
            .iter()
            .zip(integrator.elastic())
            .map(|(u, a)| a * u * u)
            .sum::<f64>();
    kinetic + potential + memory_term(state, integrator)
}

/// Augmented energy `E`. Needs a full delay line covering `[t - τ, t]`.
pub fn full_energy(state: &ModalState, integrator: &Integrator<'_>) -> Result<f64, DynamicsError> {
    let buffer = state.delay_buffer();
    if !buffer.is_full() {
        return Err(DynamicsError::BufferUnderfilled {
            have: buffer.len(),
            need: buffer.capacity(),
        });
    }
    Ok(standard_energy(state, integrator) + integrator.delay_term(buffer))
}

/// Trapezoid rule for `½ ∫_{t-τ}^t |b(s + τ)| ‖v(s)‖² ds` on the buffer's
/// nodes. Past the end of a finite schedule the coefficient counts as off.
pub fn delay_window_integral(buffer: &DelayBuffer, schedule: &ValidatedSchedule, dt: f64) -> f64 {
    let n = buffer.len();
    if n < 2 {
        return 0.0;
    }
    let tau = schedule.tau();
    let mut acc = 0.0;
    for (i, (s, v)) in buffer.iter().enumerate() {
        let b = schedule.coefficient_or_off(s + tau).abs();
        if b == 0.0 {
            continue;
        }
        let w = if i == 0 || i == n - 1 { 0.5 * dt } else { dt };
        acc += w * b * v.iter().map(|x| x * x).sum::<f64>();
    }
    0.5 * acc
}

/// Per-step energy samples of a trajectory, in time order.
pub fn energy_series(trajectory: &Trajectory) -> Vec<EnergySample> {
    trajectory.energies.clone()
}
