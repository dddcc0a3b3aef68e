use serde::{Deserialize, Serialize};

use super::{
    build_operator, validate_kernel, validate_schedule, FeedbackMode, MemoryKernel, ModelError, OperatorKind,
    OperatorSpec, Schedule, ValidatedKernel, ValidatedSchedule,
};

/// Displacement before `t = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PreHistory {
    /// `u(t) = 0` for `t < 0`. Equivalent to a memory integral over `[0, t]` only.
    Zero,
    /// `u(t) = u(0)` for `t < 0`.
    ConstantEqualToInitial,
    /// Modal values of `u(-s)` at increasing lags `s ≥ 0`, linearly
    /// interpolated and held constant past the last lag.
    Tabulated { lags: Vec<f64>, values: Vec<Vec<f64>> },
}

/// Velocity on `(-τ, 0)` that seeds the delay line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VelocityHistory {
    /// The initial velocity held constant.
    HoldInitial,
    Zero,
    /// Time derivative of the displacement pre-history.
    FromPreHistory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub operator: OperatorSpec,
    pub kernel: MemoryKernel,
    pub schedule: Schedule,
    pub initial_position: Vec<f64>,
    pub initial_velocity: Vec<f64>,
    pub pre_history: PreHistory,
    pub velocity_history: VelocityHistory,
    pub dt: f64,
    pub horizon: f64,
    /// Nodes of the lag grid. `None` picks spacing equal to `dt`, where the
    /// upwind transport of the history is exact.
    pub history_nodes: Option<usize>,
}

/// Sine-series coefficients of `x(L - x)` on `(0, L)` in the orthonormal
/// basis `√(2/L) sin(kπx/L)`.
pub fn parabola_coefficients(modes: usize, length: f64) -> Vec<f64> {
    let pi = std::f64::consts::PI;
    (1..=modes)
        .map(|k| {
            if k % 2 == 0 {
                0.0
            } else {
                let b = 8.0 * length * length / (k as f64 * pi).powi(3);
                (length / 2.0).sqrt() * b
            }
        })
        .collect()
}

impl Scenario {
    /// Desk-scale reference problem: 16 wave modes on `(0, π)`, exponential
    /// kernel `0.2 e^{-s}`, delay 0.5, `dt = 1/512`, horizon 40, parabolic
    /// initial displacement at rest with a constant past. Feedback is off.
    pub fn desk_default() -> Self {
        let length = std::f64::consts::PI;
        let operator = build_operator(OperatorKind::Wave1d, 16, length).expect("valid operator");
        let modes = operator.modes();
        Scenario {
            operator,
            kernel: MemoryKernel::exponential(0.2, 1.0),
            schedule: Schedule::quiescent(0.5),
            initial_position: parabola_coefficients(modes, length),
            initial_velocity: vec![0.0; modes],
            pre_history: PreHistory::ConstantEqualToInitial,
            velocity_history: VelocityHistory::HoldInitial,
            dt: 1.0 / 512.0,
            horizon: 40.0,
            history_nodes: None,
        }
    }

    pub fn with_schedule(mut self, schedule: Schedule) -> Self {
        self.schedule = schedule;
        self
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn modes(&self) -> usize {
        self.operator.modes()
    }

    pub fn validate(&self) -> Result<ValidatedScenario, ModelError> {
        self.operator.validate()?;
        let modes = self.operator.modes();
        check_len("initial position", self.initial_position.len(), modes)?;
        check_len("initial velocity", self.initial_velocity.len(), modes)?;
        if let PreHistory::Tabulated { lags, values } = &self.pre_history {
            if lags.is_empty() || lags.len() != values.len() {
                return Err(ModelError::InvalidPreHistory(
                    "lags and values must be non-empty and of equal length".into(),
                ));
            }
            if lags[0] < 0.0 || lags.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(ModelError::InvalidPreHistory(
                    "lags must be non-negative and strictly increasing".into(),
                ));
            }
            for row in values {
                check_len("pre-history row", row.len(), modes)?;
            }
        }
        let kernel = validate_kernel(&self.kernel)?;
        let schedule = validate_schedule(&self.schedule)?;

        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(ModelError::InvalidSolver(format!("dt = {} is not positive", self.dt)));
        }
        if !(self.horizon >= 0.0) || !self.horizon.is_finite() {
            return Err(ModelError::InvalidSolver(format!(
                "horizon = {} is negative",
                self.horizon
            )));
        }
        if self.horizon > schedule.end() * (1.0 + 1e-12) + 1e-12 {
            return Err(ModelError::BeyondSchedule {
                t: self.horizon,
                end: schedule.end(),
            });
        }

        let delay_steps = match schedule.mode() {
            FeedbackMode::DelayedFeedback => {
                let ratio = schedule.tau() / self.dt;
                let m = ratio.round();
                if m < 1.0 || (ratio - m).abs() > 1e-9 * ratio.max(1.0) {
                    return Err(ModelError::InvalidSolver(format!(
                        "dt = {} must divide the delay {} exactly",
                        self.dt,
                        schedule.tau()
                    )));
                }
                m as usize
            }
            FeedbackMode::AntiDamping => 0,
        };

        let (history_nodes, lag_step) = match self.history_nodes {
            None => {
                let steps = (kernel.s_max() / self.dt - 1e-9).ceil().max(1.0) as usize;
                (steps + 1, self.dt)
            }
            Some(j) => {
                if j < 2 {
                    return Err(ModelError::InvalidSolver(
                        "history grid needs at least two nodes".into(),
                    ));
                }
                let ds = kernel.s_max() / (j - 1) as f64;
                if ds < self.dt * (1.0 - 1e-12) {
                    return Err(ModelError::InvalidSolver(format!(
                        "lag spacing {ds} is below dt = {}; transport would be unstable",
                        self.dt
                    )));
                }
                (j, ds)
            }
        };
        let steps = (self.horizon / self.dt + 1e-9).floor() as usize;

        Ok(ValidatedScenario {
            scenario: self.clone(),
            kernel,
            schedule,
            delay_steps,
            history_nodes,
            lag_step,
            steps,
        })
    }
}

fn check_len(what: &'static str, got: usize, expected: usize) -> Result<(), ModelError> {
    if got != expected {
        return Err(ModelError::InconsistentModeCount { what, got, expected });
    }
    Ok(())
}

/// A scenario whose parts were validated together, with the derived grid sizes.
#[derive(Debug, Clone)]
pub struct ValidatedScenario {
    scenario: Scenario,
    kernel: ValidatedKernel,
    schedule: ValidatedSchedule,
    delay_steps: usize,
    history_nodes: usize,
    lag_step: f64,
    steps: usize,
}

impl ValidatedScenario {
    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn kernel(&self) -> &ValidatedKernel {
        &self.kernel
    }

    pub fn schedule(&self) -> &ValidatedSchedule {
        &self.schedule
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.scenario.operator.eigenvalues
    }

    pub fn modes(&self) -> usize {
        self.scenario.operator.modes()
    }

    pub fn dt(&self) -> f64 {
        self.scenario.dt
    }

    /// `τ / dt`; zero for anti-damping.
    pub fn delay_steps(&self) -> usize {
        self.delay_steps
    }

    pub fn history_nodes(&self) -> usize {
        self.history_nodes
    }

    pub fn lag_step(&self) -> f64 {
        self.lag_step
    }

    /// Number of time steps that fit in the horizon.
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Modal displacement `u(-s)` for `s ≥ 0`.
    pub fn past_position(&self, s: f64) -> Vec<f64> {
        let u0 = &self.scenario.initial_position;
        match &self.scenario.pre_history {
            PreHistory::Zero => {
                if s == 0.0 {
                    u0.clone()
                } else {
                    vec![0.0; u0.len()]
                }
            }
            PreHistory::ConstantEqualToInitial => u0.clone(),
            PreHistory::Tabulated { lags, values } => {
                if s == 0.0 {
                    return u0.clone();
                }
                interpolate_rows(lags, values, s)
            }
        }
    }

    /// Modal velocity `u_t(-s)` for `0 < s ≤ τ` used to seed the delay line.
    pub fn past_velocity(&self, s: f64) -> Vec<f64> {
        let k = self.modes();
        match self.scenario.velocity_history {
            VelocityHistory::HoldInitial => self.scenario.initial_velocity.clone(),
            VelocityHistory::Zero => vec![0.0; k],
            VelocityHistory::FromPreHistory => match &self.scenario.pre_history {
                PreHistory::Tabulated { lags, values } if lags.len() > 1 => {
                    // d/dt u(-s) = -d/ds of the tabulated lag profile.
                    let idx = lags.partition_point(|&l| l <= s).clamp(1, lags.len() - 1);
                    let h = lags[idx] - lags[idx - 1];
                    if s > lags[lags.len() - 1] {
                        return vec![0.0; k];
                    }
                    (0..k).map(|m| -(values[idx][m] - values[idx - 1][m]) / h).collect()
                }
                _ => vec![0.0; k],
            },
        }
    }
}

fn interpolate_rows(lags: &[f64], values: &[Vec<f64>], s: f64) -> Vec<f64> {
    let idx = lags.partition_point(|&l| l <= s);
    if idx == 0 {
        return values[0].clone();
    }
    if idx == lags.len() {
        return values[lags.len() - 1].clone();
    }
    let w = (s - lags[idx - 1]) / (lags[idx] - lags[idx - 1]);
    values[idx - 1]
        .iter()
        .zip(&values[idx])
        .map(|(a, b)| a + w * (b - a))
        .collect()
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario::desk_default()
    }
}
