//! Scenario files.
//!
//! A scenario is a TOML document with a `schema` version and sections
//! `[operator]`, `[kernel]`, `[schedule]`, `[initial]`, `[solver]`, plus the
//! optional `[certificate]` and `[sweep]`. See `scenarios/default.toml`.

use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::certificates::{CertificateError, CertifyOptions, DecayConstants, Variant, DEFAULT_THRESHOLD};
use crate::dynamics::Backend;
use crate::model::{
    build_operator, parabola_coefficients, Cycle, Extension, FeedbackMode, MemoryKernel, ModelError, OperatorKind,
    OperatorSpec, PreHistory, Profile, Scenario, Schedule, VelocityHistory,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed scenario: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("unsupported schema version {0} (expected {SCHEMA_VERSION})")]
    Schema(u32),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Certificate(#[from] CertificateError),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema: u32,
    #[serde(default)]
    pub name: Option<String>,
    pub operator: OperatorSection,
    pub kernel: KernelSection,
    pub schedule: ScheduleSection,
    pub initial: InitialSection,
    pub solver: SolverSection,
    #[serde(default)]
    pub certificate: Option<CertificateSection>,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKindName {
    #[serde(rename = "wave_1d")]
    Wave1d,
    #[serde(rename = "petrovsky_1d")]
    Petrovsky1d,
    Custom,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorSection {
    pub kind: OperatorKindName,
    #[serde(default)]
    pub modes: Option<usize>,
    #[serde(default)]
    pub length: Option<f64>,
    #[serde(default)]
    pub eigenvalues: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum KernelFormName {
    Exponential,
    Tabulated,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    pub form: KernelFormName,
    #[serde(default)]
    pub mu0: Option<f64>,
    pub delta: f64,
    #[serde(default)]
    pub s_max: Option<f64>,
    #[serde(default)]
    pub tail_tol: Option<f64>,
    /// `[[s, μ(s)], …]` for tabulated kernels.
    #[serde(default)]
    pub table: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    Delayed,
    AntiDamping,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum ExtensionValue {
    Named(ExtensionName),
    Geometric { geometric: f64 },
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum ExtensionName {
    None,
    Periodic,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum ProfileValue {
    Named(ProfileName),
    Scaled { scaled: f64 },
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum ProfileName {
    Constant,
    Off,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    pub tau: f64,
    #[serde(default = "default_mode")]
    pub mode: ModeName,
    /// `[[off, on, bound], …]`. Absent means no feedback at all.
    #[serde(default)]
    pub cycles: Option<Vec<[f64; 3]>>,
    #[serde(default)]
    pub extension: Option<ExtensionValue>,
    #[serde(default)]
    pub profile: Option<ProfileValue>,
    #[serde(default = "default_true")]
    pub enforce_dwell: bool,
}

fn default_mode() -> ModeName {
    ModeName::Delayed
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ModalData {
    Named(String),
    Values(Vec<f64>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum PreHistoryValue {
    Named(String),
    Table { lags: Vec<f64>, values: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    /// `"parabola"` or modal coefficients.
    pub position: ModalData,
    /// `"zero"` or modal coefficients.
    #[serde(default)]
    pub velocity: Option<ModalData>,
    /// `"zero"`, `"constant"` or a lag table.
    #[serde(default)]
    pub pre_history: Option<PreHistoryValue>,
    #[serde(default)]
    pub velocity_history: Option<VelocityHistory>,
    /// Multiplies position, velocity and pre-history.
    #[serde(default)]
    pub scale: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub dt: f64,
    pub horizon: f64,
    #[serde(default)]
    pub history_nodes: Option<usize>,
    #[serde(default)]
    pub backend: Option<Backend>,
    #[serde(default)]
    pub stride: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateSection {
    #[serde(rename = "C", default)]
    pub c: Option<f64>,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub threshold: Option<f64>,
    #[serde(default)]
    pub variant: Option<Variant>,
    /// Start of the log-energy fit window for calibration.
    #[serde(default)]
    pub burn_in: Option<f64>,
    #[serde(default)]
    pub window: Option<usize>,
}

/// Grid axes; every combination becomes one run. Each axis overrides the
/// corresponding value of every listed cycle.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default)]
    pub bound: Option<Vec<f64>>,
    #[serde(default)]
    pub t_odd: Option<Vec<f64>>,
    #[serde(default)]
    pub t_even: Option<Vec<f64>>,
}

/// A parsed scenario file, turned into model types.
#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub name: Option<String>,
    pub scenario: Scenario,
    pub backend: Backend,
    pub stride: usize,
    pub certificate: Option<CertificateSection>,
    pub sweep: Option<SweepSection>,
}

impl LoadedScenario {
    /// User-supplied constants, when both `C` and `alpha` are given.
    pub fn user_constants(&self) -> Result<Option<DecayConstants>, CertificateError> {
        match &self.certificate {
            Some(CertificateSection {
                c: Some(c),
                alpha: Some(a),
                ..
            }) => DecayConstants::user_supplied(*c, *a).map(Some),
            _ => Ok(None),
        }
    }

    pub fn certify_options(&self) -> CertifyOptions {
        let cert = self.certificate.as_ref();
        CertifyOptions {
            variant: cert.and_then(|c| c.variant),
            threshold: cert.and_then(|c| c.threshold).unwrap_or(DEFAULT_THRESHOLD),
            horizon: Some(self.scenario.horizon),
            window: cert.and_then(|c| c.window).unwrap_or(2),
        }
    }

    pub fn burn_in(&self) -> f64 {
        self.certificate.as_ref().and_then(|c| c.burn_in).unwrap_or(0.0)
    }
}

pub fn load_scenario(path: &Path) -> Result<LoadedScenario, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_scenario(&text)
}

pub fn parse_scenario(text: &str) -> Result<LoadedScenario, ConfigError> {
    let file: ScenarioFile = toml::from_str(text)?;
    file.into_loaded()
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

impl ScenarioFile {
    pub fn into_loaded(self) -> Result<LoadedScenario, ConfigError> {
        if self.schema != SCHEMA_VERSION {
            return Err(ConfigError::Schema(self.schema));
        }
        let operator = self.operator.build()?;
        let modes = operator.modes();
        let kernel = self.kernel.build()?;
        let schedule = self.schedule.build();
        let length = self.operator.length.unwrap_or(std::f64::consts::PI);
        let scale = self.initial.scale.unwrap_or(1.0);

        let modal = |data: &ModalData, what: &str| -> Result<Vec<f64>, ConfigError> {
            match data {
                ModalData::Values(v) => Ok(v.clone()),
                ModalData::Named(n) if n == "zero" => Ok(vec![0.0; modes]),
                ModalData::Named(n) if n == "parabola" => Ok(parabola_coefficients(modes, length)),
                ModalData::Named(n) => Err(invalid(format!("unknown {what} profile {n:?}"))),
            }
        };
        let position = modal(&self.initial.position, "position")?;
        let velocity = match &self.initial.velocity {
            Some(v) => modal(v, "velocity")?,
            None => vec![0.0; modes],
        };
        let pre_history = match &self.initial.pre_history {
            None => PreHistory::ConstantEqualToInitial,
            Some(PreHistoryValue::Named(n)) => match n.as_str() {
                "zero" => PreHistory::Zero,
                "constant" => PreHistory::ConstantEqualToInitial,
                other => return Err(invalid(format!("unknown pre_history {other:?}"))),
            },
            Some(PreHistoryValue::Table { lags, values }) => PreHistory::Tabulated {
                lags: lags.clone(),
                values: values
                    .iter()
                    .map(|row| row.iter().map(|x| x * scale).collect())
                    .collect(),
            },
        };

        let scenario = Scenario {
            operator,
            kernel,
            schedule,
            initial_position: position.iter().map(|x| x * scale).collect(),
            initial_velocity: velocity.iter().map(|x| x * scale).collect(),
            pre_history,
            velocity_history: self.initial.velocity_history.unwrap_or(VelocityHistory::HoldInitial),
            dt: self.solver.dt,
            horizon: self.solver.horizon,
            history_nodes: self.solver.history_nodes,
        };
        Ok(LoadedScenario {
            name: self.name,
            scenario,
            backend: self.solver.backend.unwrap_or_default(),
            stride: self.solver.stride.unwrap_or(1).max(1),
            certificate: self.certificate,
            sweep: self.sweep,
        })
    }
}

impl OperatorSection {
    fn build(&self) -> Result<OperatorSpec, ConfigError> {
        let kind = match self.kind {
            OperatorKindName::Custom => {
                let ev = self
                    .eigenvalues
                    .clone()
                    .ok_or_else(|| invalid("custom operator needs eigenvalues"))?;
                return Ok(OperatorSpec::custom(ev)?);
            }
            OperatorKindName::Wave1d => OperatorKind::Wave1d,
            OperatorKindName::Petrovsky1d => OperatorKind::Petrovsky1d,
        };
        let modes = self.modes.ok_or_else(|| invalid("operator needs modes"))?;
        Ok(build_operator(
            kind,
            modes,
            self.length.unwrap_or(std::f64::consts::PI),
        )?)
    }
}

impl KernelSection {
    fn build(&self) -> Result<MemoryKernel, ConfigError> {
        let mut k = match self.form {
            KernelFormName::Exponential => {
                let mu0 = self.mu0.ok_or_else(|| invalid("exponential kernel needs mu0"))?;
                MemoryKernel::exponential(mu0, self.delta)
            }
            KernelFormName::Tabulated => {
                let table = self
                    .table
                    .as_ref()
                    .ok_or_else(|| invalid("tabulated kernel needs a table"))?;
                MemoryKernel::tabulated(table.iter().map(|p| (p[0], p[1])).collect(), self.delta)
            }
        };
        if let Some(s) = self.s_max {
            k = k.with_s_max(s);
        }
        if let Some(t) = self.tail_tol {
            k = k.with_tail_tol(t);
        }
        Ok(k)
    }
}

impl ScheduleSection {
    fn build(&self) -> Schedule {
        let mode = match self.mode {
            ModeName::Delayed => FeedbackMode::DelayedFeedback,
            ModeName::AntiDamping => FeedbackMode::AntiDamping,
        };
        let Some(cycles) = &self.cycles else {
            let mut s = Schedule::quiescent(self.tau);
            s.mode = mode;
            return s;
        };
        let mut s = Schedule::new(
            self.tau,
            mode,
            cycles.iter().map(|c| Cycle::new(c[0], c[1], c[2])).collect(),
        );
        s.extension = match self.extension {
            None | Some(ExtensionValue::Named(ExtensionName::None)) => Extension::None,
            Some(ExtensionValue::Named(ExtensionName::Periodic)) => Extension::Periodic,
            Some(ExtensionValue::Geometric { geometric }) => Extension::Geometric(geometric),
        };
        s.profile = match self.profile {
            None | Some(ProfileValue::Named(ProfileName::Constant)) => Profile::ConstantAtBound,
            Some(ProfileValue::Named(ProfileName::Off)) => Profile::Scaled(0.0),
            Some(ProfileValue::Scaled { scaled }) => Profile::Scaled(scaled),
        };
        s.enforce_dwell = self.enforce_dwell;
        s
    }
}

/// Replaces the value of every listed cycle on the given axes.
pub fn override_cycles(schedule: &Schedule, bound: Option<f64>, t_odd: Option<f64>, t_even: Option<f64>) -> Schedule {
    let mut s = schedule.clone();
    for c in &mut s.cycles {
        if let Some(b) = bound {
            c.bound = b;
        }
        if let Some(t) = t_odd {
            c.on = t;
        }
        if let Some(t) = t_even {
            c.off = t;
        }
    }
    s
}
