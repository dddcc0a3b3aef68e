//! Problem data: memory kernels, feedback schedules, operator spectra and
//! complete scenarios. Everything here is immutable once validated.

mod kernel;
mod operator;
mod scenario;
mod schedule;

pub use kernel::{
    kernel_eval, validate_kernel, KernelForm, MemoryKernel, ValidatedKernel, DECAY_CHECK_TOL, DEFAULT_TAIL_TOL,
};
pub use operator::{build_operator, OperatorKind, OperatorSpec};
pub use scenario::{parabola_coefficients, PreHistory, Scenario, ValidatedScenario, VelocityHistory};
pub use schedule::{
    coefficient_at, validate_schedule, Cycle, Extension, FeedbackMode, Profile, Schedule, ValidatedSchedule,
};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("kernel violates assumption iii: total mass {0} is not < 1")]
    MassNotLessThanOne(f64),
    #[error("kernel violates assumption ii: mu0 = {0} is not positive")]
    NonPositiveMu0(f64),
    #[error("kernel decay rate delta = {0} is not positive")]
    NonPositiveDelta(f64),
    #[error("kernel violates assumption iv: decay slower than e^(-delta s) at s = {at}")]
    DecayViolated { at: f64 },
    #[error("kernel tail {value:e} at the truncation horizon exceeds {limit:e}")]
    TailTooLarge { value: f64, limit: f64 },
    #[error("invalid kernel table: {0}")]
    InvalidKernelTable(String),
    #[error("negative argument {0}")]
    NegativeArgument(f64),
    #[error("invalid spectrum: {0}")]
    InvalidSpectrum(String),
    #[error("schedule has no cycles")]
    EmptySchedule,
    #[error("cycle {cycle}: off interval {off} is shorter than the delay {tau}")]
    OffIntervalShorterThanDelay { cycle: usize, off: f64, tau: f64 },
    #[error("length {0} is not positive")]
    NonPositiveLength(f64),
    #[error("coefficient bound {0} is not positive")]
    NonPositiveBound(f64),
    #[error("profile fraction {0} is outside [-1, 1]")]
    InvalidProfile(f64),
    #[error("geometric extension ratio {0} is not positive")]
    InvalidExtension(f64),
    #[error("time {t} lies beyond the end of the schedule ({end})")]
    BeyondSchedule { t: f64, end: f64 },
    #[error("{what} has {got} modal entries, expected {expected}")]
    InconsistentModeCount {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("invalid solver setting: {0}")]
    InvalidSolver(String),
    #[error("invalid pre-history: {0}")]
    InvalidPreHistory(String),
}
