use serde::Serialize;

use super::{Backend, DynamicsError, Execution, Integrator, ModalState};
use crate::energy::EnergySample;
use crate::model::{ValidatedScenario, ValidatedSchedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SolverOptions {
    pub backend: Backend,
    pub execution: Execution,
    /// Keep every `stride`-th modal snapshot. Energies are kept at every step.
    pub stride: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            backend: Backend::Dafermos,
            execution: Execution::default(),
            stride: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Snapshot {
    pub t: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

/// Result of a run: energies at every step, modal snapshots at the stride.
#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub backend: Backend,
    pub dt: f64,
    pub stride: usize,
    pub energies: Vec<EnergySample>,
    pub snapshots: Vec<Snapshot>,
    pub schedule: ValidatedSchedule,
    pub final_state: ModalState,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.energies.iter().map(|e| e.t).collect()
    }

    pub fn standard_energies(&self) -> Vec<f64> {
        self.energies.iter().map(|e| e.standard).collect()
    }

    pub fn full_energies(&self) -> Vec<f64> {
        self.energies.iter().map(|e| e.full).collect()
    }

    pub fn initial_energy(&self) -> f64 {
        self.energies[0].standard
    }

    pub fn final_sample(&self) -> &EnergySample {
        self.energies.last().expect("trajectory has the initial sample")
    }

    /// True when every recorded sample is from a run with `b ≡ 0`.
    pub fn is_feedback_free(&self) -> bool {
        self.schedule.is_feedback_free()
    }

    /// `E_S(t)` by linear interpolation between steps; `None` outside the run.
    pub fn standard_energy_at(&self, t: f64) -> Option<f64> {
        let last = self.final_sample().t;
        if !(t >= 0.0 && t <= last + 1e-9 * self.dt) {
            return None;
        }
        let x = t / self.dt;
        let i = (x.floor() as usize).min(self.energies.len() - 1);
        if i + 1 >= self.energies.len() {
            return Some(self.energies[i].standard);
        }
        let frac = x - i as f64;
        let (a, b) = (self.energies[i].standard, self.energies[i + 1].standard);
        Some(a + frac * (b - a))
    }
}

/// Runs the scenario to its horizon.
///
/// When the divergence guard trips, the error carries the partial trajectory.
pub fn simulate(scenario: &ValidatedScenario, options: SolverOptions) -> Result<Trajectory, DynamicsError> {
    let integrator = Integrator::new(scenario, options.backend)?.with_execution(options.execution);
    let stride = options.stride.max(1);
    let mut state = integrator.init_state();
    let steps = scenario.steps();

    let mut energies = Vec::with_capacity(steps + 1);
    energies.push(integrator.sample(&state));
    let mut snapshots = vec![snapshot(&state)];

    for _ in 0..steps {
        match integrator.step(&mut state) {
            Ok(sample) => energies.push(sample),
            Err(DynamicsError::NonFiniteState { t, energy_ratio }) => {
                let partial = Trajectory {
                    backend: options.backend,
                    dt: scenario.dt(),
                    stride,
                    energies,
                    snapshots,
                    schedule: scenario.schedule().clone(),
                    final_state: state,
                };
                return Err(DynamicsError::Diverged {
                    t,
                    energy_ratio,
                    partial: Box::new(partial),
                });
            }
            Err(e) => return Err(e),
        }
        if state.step % stride as u64 == 0 {
            snapshots.push(snapshot(&state));
        }
    }

    Ok(Trajectory {
        backend: options.backend,
        dt: scenario.dt(),
        stride,
        energies,
        snapshots,
        schedule: scenario.schedule().clone(),
        final_state: state,
    })
}

fn snapshot(state: &ModalState) -> Snapshot {
    Snapshot {
        t: state.t(),
        u: state.u.clone(),
        v: state.v.clone(),
    }
}

/// Reference run with the auxiliary-variable backend at half the step.
/// Exponential kernels only.
pub fn simulate_ode_oracle(scenario: &ValidatedScenario, options: SolverOptions) -> Result<Trajectory, DynamicsError> {
    if !scenario.kernel().is_exponential() {
        return Err(DynamicsError::KernelNotExponential);
    }
    let mut fine = scenario.scenario().clone();
    fine.dt = scenario.dt() / 2.0;
    if let Some(n) = fine.history_nodes {
        fine.history_nodes = Some(2 * n - 1);
    }
    let fine = fine.validate()?;
    simulate(
        &fine,
        SolverOptions {
            backend: Backend::Ode,
            stride: options.stride.max(1) * 2,
            ..options
        },
    )
}

impl Trajectory {
    /// Energy columns `t,E_S,E,kinetic,potential,memory_term,delay_term`, one
    /// row per step.
    pub fn write_energy_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        use crate::format::sig17;
        writeln!(out, "t,E_S,E,kinetic,potential,memory_term,delay_term")?;
        for e in &self.energies {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                sig17(e.t),
                sig17(e.standard),
                sig17(e.full),
                sig17(e.kinetic),
                sig17(e.potential),
                sig17(e.memory_term),
                sig17(e.delay_term)
            )?;
        }
        Ok(())
    }

    /// Modal snapshots: `t,u_1..u_K,v_1..v_K`.
    pub fn write_snapshot_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        use crate::format::sig17;
        let k = self.snapshots.first().map_or(0, |s| s.u.len());
        let mut header = vec!["t".to_string()];
        header.extend((1..=k).map(|i| format!("u_{i}")));
        header.extend((1..=k).map(|i| format!("v_{i}")));
        writeln!(out, "{}", header.join(","))?;
        for s in &self.snapshots {
            let row: Vec<String> = std::iter::once(s.t)
                .chain(s.u.iter().copied())
                .chain(s.v.iter().copied())
                .map(sig17)
                .collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}
