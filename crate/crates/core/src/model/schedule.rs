//! On/off feedback schedules.
//!
//! Time is split into alternating intervals `I_{2n} = [t_{2n}, t_{2n+1})`,
//! where the feedback coefficient vanishes, and `I_{2n+1} = [t_{2n+1}, t_{2n+2})`,
//! where its magnitude is bounded by the cycle bound. One [`Cycle`] holds the
//! pair `(T_{2n}, T_{2n+1})` and the bound.

use serde::{Deserialize, Serialize};

use super::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackMode {
    /// `+ b(t) u_t(t - τ)` in the equation.
    DelayedFeedback,
    /// `- k(t) u_t(t)` in the equation (destabilizing sign, no delay).
    AntiDamping,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cycle {
    /// Length of the off interval.
    pub off: f64,
    /// Length of the on interval.
    pub on: f64,
    /// Bound on the coefficient magnitude during the on interval.
    pub bound: f64,
}

impl Cycle {
    pub fn new(off: f64, on: f64, bound: f64) -> Self {
        Cycle { off, on, bound }
    }

    pub fn period(&self) -> f64 {
        self.off + self.on
    }
}

/// Actual coefficient value inside on intervals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    ConstantAtBound,
    /// A fixed fraction of the bound, in `[-1, 1]`.
    Scaled(f64),
}

/// How the cycle list continues past its last entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Extension {
    /// The schedule ends with its last cycle.
    None,
    /// The last cycle repeats forever.
    Periodic,
    /// The last cycle's lengths repeat and its bound is multiplied by the
    /// ratio once per additional cycle.
    Geometric(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub tau: f64,
    pub mode: FeedbackMode,
    pub cycles: Vec<Cycle>,
    pub profile: Profile,
    pub extension: Extension,
    /// Require `T_{2n} ≥ τ` in delayed mode. Turning this off admits
    /// zero-length off intervals for simulation-only scenarios; such
    /// schedules cannot be certified.
    pub enforce_dwell: bool,
}

impl Schedule {
    pub fn new(tau: f64, mode: FeedbackMode, cycles: Vec<Cycle>) -> Self {
        Schedule {
            tau,
            mode,
            cycles,
            profile: Profile::ConstantAtBound,
            extension: Extension::None,
            enforce_dwell: true,
        }
    }

    pub fn periodic(mut self) -> Self {
        self.extension = Extension::Periodic;
        self
    }

    pub fn geometric(mut self, ratio: f64) -> Self {
        self.extension = Extension::Geometric(ratio);
        self
    }

    pub fn with_profile(mut self, profile: Profile) -> Self {
        self.profile = profile;
        self
    }

    /// Delayed feedback with one constant cycle repeated forever.
    pub fn periodic_delayed(tau: f64, off: f64, on: f64, bound: f64) -> Self {
        Schedule::new(tau, FeedbackMode::DelayedFeedback, vec![Cycle::new(off, on, bound)]).periodic()
    }

    /// Identically zero feedback: a never-ending off state.
    pub fn quiescent(tau: f64) -> Self {
        Schedule::new(
            tau,
            FeedbackMode::DelayedFeedback,
            vec![Cycle::new(tau.max(1.0), 1.0, 1.0)],
        )
        .with_profile(Profile::Scaled(0.0))
        .periodic()
    }
}

/// A schedule with explicit interval endpoints `t_0 = 0 < t_1 < t_2 < …`
/// for the listed cycles.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidatedSchedule {
    schedule: Schedule,
    endpoints: Vec<f64>,
    short_delay: Vec<bool>,
}

pub fn validate_schedule(schedule: &Schedule) -> Result<ValidatedSchedule, ModelError> {
    if schedule.cycles.is_empty() {
        return Err(ModelError::EmptySchedule);
    }
    let delayed = schedule.mode == FeedbackMode::DelayedFeedback;
    if delayed && !(schedule.tau > 0.0 && schedule.tau.is_finite()) {
        return Err(ModelError::NonPositiveLength(schedule.tau));
    }
    match schedule.profile {
        Profile::Scaled(f) if !(-1.0..=1.0).contains(&f) => {
            return Err(ModelError::InvalidProfile(f));
        }
        _ => {}
    }
    if let Extension::Geometric(r) = schedule.extension {
        if !(r > 0.0) || !r.is_finite() {
            return Err(ModelError::InvalidExtension(r));
        }
    }

    let mut endpoints = Vec::with_capacity(2 * schedule.cycles.len() + 1);
    let mut short_delay = Vec::with_capacity(schedule.cycles.len());
    let mut t = 0.0;
    endpoints.push(t);
    for (n, c) in schedule.cycles.iter().enumerate() {
        let off_ok = if schedule.enforce_dwell {
            c.off > 0.0
        } else {
            c.off >= 0.0
        };
        if !off_ok || !c.off.is_finite() {
            return Err(ModelError::NonPositiveLength(c.off));
        }
        if !(c.on > 0.0) || !c.on.is_finite() {
            return Err(ModelError::NonPositiveLength(c.on));
        }
        if !(c.bound > 0.0) || !c.bound.is_finite() {
            return Err(ModelError::NonPositiveBound(c.bound));
        }
        if delayed && schedule.enforce_dwell && c.off < schedule.tau {
            return Err(ModelError::OffIntervalShorterThanDelay {
                cycle: n,
                off: c.off,
                tau: schedule.tau,
            });
        }
        // Zero-length off intervals leave t unchanged; keep the endpoint
        // list non-decreasing in that case.
        t += c.off;
        endpoints.push(t);
        t += c.on;
        endpoints.push(t);
        short_delay.push(delayed && c.on <= schedule.tau);
    }
    Ok(ValidatedSchedule {
        schedule: schedule.clone(),
        endpoints,
        short_delay,
    })
}

impl ValidatedSchedule {
    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    pub fn tau(&self) -> f64 {
        self.schedule.tau
    }

    pub fn mode(&self) -> FeedbackMode {
        self.schedule.mode
    }

    pub fn extension(&self) -> Extension {
        self.schedule.extension
    }

    /// Endpoints `t_0, …, t_{2N}` of the listed cycles.
    pub fn endpoints(&self) -> &[f64] {
        &self.endpoints
    }

    /// Per listed cycle: whether its on interval is no longer than the delay.
    pub fn short_delay_flags(&self) -> &[bool] {
        &self.short_delay
    }

    pub fn listed_cycles(&self) -> usize {
        self.schedule.cycles.len()
    }

    /// End of the listed cycles.
    pub fn listed_end(&self) -> f64 {
        self.endpoints[self.endpoints.len() - 1]
    }

    /// End of the whole schedule; infinite when it is extended.
    pub fn end(&self) -> f64 {
        match self.schedule.extension {
            Extension::None => self.listed_end(),
            _ => f64::INFINITY,
        }
    }

    pub fn is_extended(&self) -> bool {
        self.schedule.extension != Extension::None
    }

    /// True when the coefficient is zero everywhere.
    pub fn is_feedback_free(&self) -> bool {
        self.schedule.profile == Profile::Scaled(0.0)
    }

    /// Cycle `n`, following the extension rule past the list. `None` past
    /// the end of a finite schedule.
    pub fn cycle(&self, n: usize) -> Option<Cycle> {
        let cycles = &self.schedule.cycles;
        if n < cycles.len() {
            return Some(cycles[n]);
        }
        let last = cycles[cycles.len() - 1];
        match self.schedule.extension {
            Extension::None => None,
            Extension::Periodic => Some(last),
            Extension::Geometric(r) => {
                let extra = (n - (cycles.len() - 1)) as i32;
                Some(Cycle {
                    bound: last.bound * r.powi(extra),
                    ..last
                })
            }
        }
    }

    /// Start time `t_{2n}` of cycle `n`.
    pub fn cycle_start(&self, n: usize) -> Option<f64> {
        let listed = self.listed_cycles();
        if n <= listed {
            return Some(self.endpoints[2 * n]);
        }
        if !self.is_extended() {
            return None;
        }
        let period = self.schedule.cycles[listed - 1].period();
        Some(self.listed_end() + (n - listed) as f64 * period)
    }

    /// Start of the on interval `t_{2n+1}` of cycle `n`.
    pub fn on_start(&self, n: usize) -> Option<f64> {
        Some(self.cycle_start(n)? + self.cycle(n)?.off)
    }

    /// Index of the cycle containing `t` (cycle `n` covers `[t_{2n}, t_{2n+2})`).
    pub fn cycle_index(&self, t: f64) -> Option<usize> {
        if t < 0.0 || t.is_nan() {
            return None;
        }
        let listed_end = self.listed_end();
        if t < listed_end {
            // Cycle boundaries are the even endpoints.
            let (mut lo, mut hi) = (0, self.listed_cycles());
            while hi - lo > 1 {
                let mid = (lo + hi) / 2;
                if self.endpoints[2 * mid] <= t {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return Some(lo);
        }
        if !self.is_extended() {
            return None;
        }
        let listed = self.listed_cycles();
        let period = self.schedule.cycles[listed - 1].period();
        let k = ((t - listed_end) / period).floor() as usize;
        // Guard against rounding at the boundary.
        let mut n = listed + k;
        while self.cycle_start(n + 1).is_some_and(|s| s <= t) {
            n += 1;
        }
        while n > listed && self.cycle_start(n).is_some_and(|s| s > t) {
            n -= 1;
        }
        Some(n)
    }

    /// Feedback coefficient `b(t)` (or `k(t)`), signed according to the profile.
    pub fn coefficient_at(&self, t: f64) -> Result<f64, ModelError> {
        if t < 0.0 || t.is_nan() {
            return Err(ModelError::NegativeArgument(t));
        }
        let n = self
            .cycle_index(t)
            .ok_or(ModelError::BeyondSchedule { t, end: self.end() })?;
        let cycle = self.cycle(n).expect("cycle index is in range");
        let on_start = self.on_start(n).expect("cycle index is in range");
        if t < on_start {
            return Ok(0.0);
        }
        Ok(match self.schedule.profile {
            Profile::ConstantAtBound => cycle.bound,
            Profile::Scaled(f) => f * cycle.bound,
        })
    }

    /// Like [`coefficient_at`](Self::coefficient_at), but zero after the end
    /// of a finite schedule.
    pub fn coefficient_or_off(&self, t: f64) -> f64 {
        self.coefficient_at(t).unwrap_or(0.0)
    }
}

pub fn coefficient_at(schedule: &ValidatedSchedule, t: f64) -> Result<f64, ModelError> {
    schedule.coefficient_at(t)
}
