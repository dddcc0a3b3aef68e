use serde::{Deserialize, Serialize};

use super::history::{HistoryLine, LagGrid};
use super::{DelayBuffer, DynamicsError};
use crate::energy::{self, EnergySample};
use crate::model::{FeedbackMode, PreHistory, ValidatedScenario};

/// Runs abort once `E_S` exceeds this multiple of `E_S(0)`.
pub const DIVERGENCE_FACTOR: f64 = 1e12;

/// How the memory integral is represented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    /// Relative history on a lag grid; works for any admissible kernel.
    #[default]
    Dafermos,
    /// Auxiliary ODEs for `w = ∫ μ(s) u(t-s) ds`; exponential kernels only.
    Ode,
}

/// Whether the per-mode update runs on the rayon pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Execution {
    Sequential,
    /// Falls back to sequential when the `parallel` feature is off.
    #[default]
    Parallel,
}

/// Auxiliary memory of one mode for exponential kernels:
/// `w = ∫ μ(s) u(t-s) ds` and `q = ∫ μ(s) u(t-s)² ds`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct AuxMemory {
    pub w: f64,
    pub q: f64,
}

#[derive(Debug, Clone, Serialize)]
pub enum Memory {
    History(Vec<HistoryLine>),
    Auxiliary(Vec<AuxMemory>),
}

/// Modal state at one time level.
#[derive(Debug, Clone, Serialize)]
pub struct ModalState {
    pub(crate) step: u64,
    pub(crate) u: Vec<f64>,
    pub(crate) v: Vec<f64>,
    pub(crate) memory: Memory,
    pub(crate) delay: DelayBuffer,
    pub(crate) dt: f64,
    pub(crate) reference_energy: f64,
}

impl ModalState {
    pub fn t(&self) -> f64 {
        self.step as f64 * self.dt
    }

    pub fn step_index(&self) -> u64 {
        self.step
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn memory(&self) -> &Memory {
        &self.memory
    }

    pub fn delay_buffer(&self) -> &DelayBuffer {
        &self.delay
    }

    /// `E_S(0)` of the run this state belongs to.
    pub fn reference_energy(&self) -> f64 {
        self.reference_energy
    }

    /// `η_k(s_j)` on the lag grid (history backend only).
    pub fn eta(&self, mode: usize) -> Option<Vec<f64>> {
        match &self.memory {
            Memory::History(lines) => Some(lines[mode].eta(self.u[mode])),
            Memory::Auxiliary(_) => None,
        }
    }

    /// Memory integrals `w_k` (auxiliary backend only).
    pub fn memory_integrals(&self) -> Option<Vec<f64>> {
        match &self.memory {
            Memory::History(_) => None,
            Memory::Auxiliary(aux) => Some(aux.iter().map(|a| a.w).collect()),
        }
    }
}

/// Exponential-integrator weights for `w' = μ₀ u - δ w` over one step with
/// `u` linear in time.
#[derive(Debug, Clone, Copy)]
struct ExpWeights {
    mu0: f64,
    mass: f64,
    decay: f64,
    /// `∫₀^dt e^{-δ(dt-r)} (r/dt)^p dr` for `p = 0, 1, 2`.
    moment: [f64; 3],
}

impl ExpWeights {
    fn new(mu0: f64, delta: f64, dt: f64) -> Self {
        let x = delta * dt;
        ExpWeights {
            mu0,
            mass: mu0 / delta,
            decay: (-x).exp(),
            moment: [dt * phi(0, x), dt * phi(1, x), dt * phi(2, x)],
        }
    }
}

/// `∫₀¹ e^{-x(1-θ)} θ^p dθ`. The series is used near zero where the
/// recurrence `I_p = (1 - p I_{p-1}) / x` cancels badly.
fn phi(p: u32, x: f64) -> f64 {
    if x < 0.5 {
        // Σ_m (-x)^m p! / (m + p + 1)!
        let mut fact_p = 1.0;
        for i in 1..=p {
            fact_p *= i as f64;
        }
        let mut denom = 1.0;
        for i in 1..=(p + 1) {
            denom *= i as f64;
        }
        let mut term = fact_p / denom;
        let mut sum = term;
        for m in 1..60 {
            term *= -x / (m + p + 1) as f64;
            sum += term;
            if term.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        sum
    } else {
        let mut i = -(-x).exp_m1() / x;
        for q in 1..=p {
            i = (1.0 - q as f64 * i) / x;
        }
        i
    }
}

/// Advances a validated scenario one time step at a time.
#[derive(Debug, Clone)]
pub struct Integrator<'a> {
    scenario: &'a ValidatedScenario,
    backend: Backend,
    execution: Execution,
    dt: f64,
    elastic: Vec<f64>,
    grid: LagGrid,
    expo: Option<ExpWeights>,
}

impl<'a> Integrator<'a> {
    pub fn new(scenario: &'a ValidatedScenario, backend: Backend) -> Result<Self, DynamicsError> {
        let kernel = scenario.kernel();
        let expo = match backend {
            Backend::Ode if !kernel.is_exponential() => return Err(DynamicsError::KernelNotExponential),
            Backend::Ode => Some(ExpWeights::new(kernel.mu0(), kernel.delta(), scenario.dt())),
            Backend::Dafermos => None,
        };
        let mass = kernel.total_mass();
        let elastic = scenario.eigenvalues().iter().map(|l| (1.0 - mass) * l).collect();
        let grid = LagGrid::new(kernel, scenario.history_nodes(), scenario.lag_step(), scenario.dt());
        Ok(Integrator {
            scenario,
            backend,
            execution: Execution::default(),
            dt: scenario.dt(),
            elastic,
            grid,
            expo,
        })
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    pub fn scenario(&self) -> &ValidatedScenario {
        self.scenario
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn grid(&self) -> &LagGrid {
        &self.grid
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub(crate) fn elastic(&self) -> &[f64] {
        &self.elastic
    }

    pub(crate) fn kernel_mass(&self) -> f64 {
        self.scenario.kernel().total_mass()
    }

    /// Initial state from the scenario's data and pre-history.
    pub fn init_state(&self) -> ModalState {
        let sc = self.scenario;
        let modes = sc.modes();
        let u0 = sc.scenario().initial_position.clone();
        let v0 = sc.scenario().initial_velocity.clone();

        let memory = match self.backend {
            Backend::Dafermos => {
                let past: Vec<Vec<f64>> = (0..self.grid.nodes())
                    .map(|j| sc.past_position(self.grid.lag(j)))
                    .collect();
                Memory::History(
                    (0..modes)
                        .map(|k| HistoryLine::new(&self.grid, |j| past[j][k]))
                        .collect(),
                )
            }
            Backend::Ode => {
                let mass = self.kernel_mass();
                let aux = match &sc.scenario().pre_history {
                    PreHistory::Zero => vec![AuxMemory::default(); modes],
                    PreHistory::ConstantEqualToInitial => u0
                        .iter()
                        .map(|&u| AuxMemory {
                            w: mass * u,
                            q: mass * u * u,
                        })
                        .collect(),
                    PreHistory::Tabulated { .. } => {
                        let past: Vec<Vec<f64>> = (0..self.grid.nodes())
                            .map(|j| sc.past_position(self.grid.lag(j)))
                            .collect();
                        (0..modes)
                            .map(|k| AuxMemory {
                                w: self.grid.integrate(|j| past[j][k]),
                                q: self.grid.integrate(|j| past[j][k] * past[j][k]),
                            })
                            .collect()
                    }
                };
                Memory::Auxiliary(aux)
            }
        };

        let m = sc.delay_steps();
        let mut delay = DelayBuffer::new(modes, m, self.dt, -(m as i64));
        for i in (1..=m).rev() {
            delay.push(&sc.past_velocity(i as f64 * self.dt));
        }
        delay.push(&v0);

        let mut state = ModalState {
            step: 0,
            u: u0,
            v: v0,
            memory,
            delay,
            dt: self.dt,
            reference_energy: 0.0,
        };
        state.reference_energy = energy::standard_energy(&state, self);
        state
    }

    /// Energy sample of a state, evaluating every term from scratch.
    pub fn sample(&self, state: &ModalState) -> EnergySample {
        let (kinetic, potential) = self.kinetic_potential(state);
        let memory = energy::memory_term(state, self);
        let delay = self.delay_term(&state.delay);
        EnergySample::new(state.t(), kinetic, potential, memory, delay)
    }

    fn kinetic_potential(&self, state: &ModalState) -> (f64, f64) {
        let kinetic = 0.5 * state.v.iter().map(|v| v * v).sum::<f64>();
        let potential = 0.5 * state.u.iter().zip(&self.elastic).map(|(u, a)| a * u * u).sum::<f64>();
        (kinetic, potential)
    }

    /// `½ ∫_{t-τ}^t |b(s + τ)| ‖u_t(s)‖² ds` over the delay line.
    pub(crate) fn delay_term(&self, buffer: &DelayBuffer) -> f64 {
        let schedule = self.scenario.schedule();
        if schedule.mode() == FeedbackMode::AntiDamping || schedule.is_feedback_free() {
            return 0.0;
        }
        energy::delay_window_integral(buffer, schedule, self.dt)
    }

    /// Advances one step of length `dt` and returns the energy at the new time.
    ///
    /// Displacement and velocity follow the implicit midpoint rule. The
    /// memory force is split into an explicit part from the transported
    /// history and an implicit part from the new displacement, so each mode
    /// needs a single scalar solve. Feedback enters explicitly at the midpoint.
    ///
    /// With the force weights as energy weights the scheme dissipates its
    /// discrete energy exactly when `b ≡ 0`; the reported `E_S` uses the
    /// trapezoid weights and differs from it by `O(dt)` times the memory
    /// dissipation rate.
    pub fn step(&self, state: &mut ModalState) -> Result<EnergySample, DynamicsError> {
        let sc = self.scenario;
        let dt = self.dt;
        let t_mid = (state.step as f64 + 0.5) * dt;
        let coefficient = sc.schedule().coefficient_at(t_mid)?;
        let modes = sc.modes();

        let mut forcing = vec![0.0; modes];
        let mut anti = 0.0;
        match sc.schedule().mode() {
            FeedbackMode::DelayedFeedback => {
                if coefficient != 0.0 {
                    if !state.delay.is_full() {
                        return Err(DynamicsError::BufferUnderfilled {
                            have: state.delay.len(),
                            need: state.delay.capacity(),
                        });
                    }
                    // u_t at t_n - τ and t_{n+1} - τ, both already computed.
                    let z0 = state.delay.entry(0);
                    let z1 = state.delay.entry(1);
                    for ((f, a), b) in forcing.iter_mut().zip(z0).zip(z1) {
                        *f = -coefficient * 0.5 * (a + b);
                    }
                }
            }
            FeedbackMode::AntiDamping => anti = coefficient,
        }

        let lambdas = sc.eigenvalues();
        let elastic = &self.elastic;
        let grid = &self.grid;
        let ModalState { u, v, memory, .. } = state;

        let memory_energy: Vec<f64> = match memory {
            Memory::History(lines) => {
                let omega = grid.interior_mass();
                let omega_force = grid.force_mass();
                for_each_mode(self.execution, u, v, lines, |k, u, v, line| {
                    let lambda = lambdas[k];
                    let a = elastic[k];
                    let m = line.transport(grid, *u);
                    // Memory force at the half step: Σ ω^F_j (ū - U_j) = m.force + Δu Ω^F / 2.
                    let denom = 1.0 + 0.25 * dt * dt * (a + lambda * omega_force) - 0.5 * anti * dt;
                    let du = (dt * *v + 0.5 * dt * dt * (-a * *u - lambda * m.force + forcing[k])) / denom;
                    *u += du;
                    *v = 2.0 * du / dt - *v;
                    line.set_inflow(*u);
                    0.5 * lambda * (m.second + 2.0 * du * m.first + du * du * omega)
                })
            }
            Memory::Auxiliary(aux) => {
                let ew = self.expo.expect("auxiliary backend has exponential weights");
                for_each_mode(self.execution, u, v, aux, |k, u, v, aux| {
                    let lambda = lambdas[k];
                    let [ma, mb, mc] = ew.moment;
                    let base = -lambda * *u + 0.5 * lambda * ((1.0 + ew.decay) * aux.w + ew.mu0 * ma * *u) + forcing[k];
                    let denom = 1.0 + 0.25 * dt * dt * lambda * (1.0 - ew.mu0 * mb) - 0.5 * anti * dt;
                    let du = (dt * *v + 0.5 * dt * dt * base) / denom;
                    let u_old = *u;
                    aux.w = ew.decay * aux.w + ew.mu0 * (ma * u_old + mb * du);
                    aux.q = ew.decay * aux.q + ew.mu0 * (ma * u_old * u_old + 2.0 * mb * u_old * du + mc * du * du);
                    *u += du;
                    *v = 2.0 * du / dt - *v;
                    0.5 * lambda * aux_memory_energy(ew.mass, *u, aux)
                })
            }
        };

        state.delay.push(&state.v);
        state.step += 1;

        let (kinetic, potential) = self.kinetic_potential(state);
        let memory: f64 = memory_energy.iter().sum();
        let delay = self.delay_term(&state.delay);
        let sample = EnergySample::new(state.t(), kinetic, potential, memory, delay);

        let reference = state.reference_energy;
        let ratio = if reference > 0.0 {
            sample.standard / reference
        } else {
            0.0
        };
        if !sample.standard.is_finite() || ratio > DIVERGENCE_FACTOR {
            return Err(DynamicsError::NonFiniteState {
                t: state.t(),
                energy_ratio: ratio,
            });
        }
        Ok(sample)
    }

    /// Total stiffness-plus-memory force per mode.
    pub fn memory_force(&self, state: &ModalState) -> Vec<f64> {
        let lambdas = self.scenario.eigenvalues();
        match &state.memory {
            Memory::History(lines) => lines
                .iter()
                .enumerate()
                .map(|(k, line)| {
                    let m = line.moments(&self.grid, state.u[k]);
                    -self.elastic[k] * state.u[k] - lambdas[k] * m.first
                })
                .collect(),
            Memory::Auxiliary(aux) => aux
                .iter()
                .enumerate()
                .map(|(k, a)| -lambdas[k] * state.u[k] + lambdas[k] * a.w)
                .collect(),
        }
    }
}

/// `∫ μ(s) (u - u(t-s))² ds = μ̃ u² - 2 u w + q`, clipped at zero against
/// cancellation.
pub(crate) fn aux_memory_energy(mass: f64, u: f64, aux: &AuxMemory) -> f64 {
    (mass * u * u - 2.0 * u * aux.w + aux.q).max(0.0)
}

fn for_each_mode<T, F>(execution: Execution, u: &mut [f64], v: &mut [f64], memory: &mut [T], update: F) -> Vec<f64>
where
    T: Send,
    F: Fn(usize, &mut f64, &mut f64, &mut T) -> f64 + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if execution == Execution::Parallel {
        use rayon::prelude::*;
        return u
            .par_iter_mut()
            .zip(v.par_iter_mut())
            .zip(memory.par_iter_mut())
            .enumerate()
            .map(|(k, ((u, v), m))| update(k, u, v, m))
            .collect();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = execution;
    u.iter_mut()
        .zip(v.iter_mut())
        .zip(memory.iter_mut())
        .enumerate()
        .map(|(k, ((u, v), m))| update(k, u, v, m))
        .collect()
}

pub fn init_state(scenario: &ValidatedScenario, backend: Backend) -> Result<ModalState, DynamicsError> {
    Ok(Integrator::new(scenario, backend)?.init_state())
}

pub fn memory_force(state: &ModalState, integrator: &Integrator<'_>) -> Vec<f64> {
    integrator.memory_force(state)
}
