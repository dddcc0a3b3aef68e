use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use memdelay::certificates::{calibrate_trajectory, certify, CertificateError, ConstantsSource, DecayConstants};
use memdelay::config::{ConfigError, LoadedScenario};
use memdelay::dynamics::{simulate, Backend, DynamicsError, SolverOptions, Trajectory};
use memdelay::model::{Schedule, ValidatedScenario};
use serde_json::{json, Value};

mod output;
mod sweep;

use output::{number, scenario_hash, to_value, write_json, SCHEMA_VERSION};

#[derive(Parser)]
#[command(
    name = "memdelay",
    version,
    about = "Viscoelastic modal simulator with switched delay feedback and decay certificates"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write trajectory.csv, snapshots.csv and summary.json.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Keep every N-th modal snapshot.
        #[arg(long)]
        stride: Option<usize>,
    },
    /// Fit decay constants on a run without feedback and write constants.json.
    Calibrate {
        #[command(flatten)]
        common: Common,
        /// Use the file's schedule instead of forcing b ≡ 0.
        #[arg(long)]
        keep_schedule: bool,
    },
    /// Certify the scenario's schedule and write report.json.
    Certify {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        constants: ConstantsArg,
        /// Also simulate and compare measured energy with the envelope.
        #[arg(long)]
        with_sim: bool,
    },
    /// Certify and simulate every point of the `[sweep]` grid; write grid.csv.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        constants: ConstantsArg,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long, value_name = "PATH")]
    scenario: PathBuf,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Overrides `[solver] backend`.
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
}

#[derive(Args)]
struct ConstantsArg {
    /// constants.json from `calibrate`. Defaults to `C` and `alpha` in `[certificate]`.
    #[arg(long, value_name = "PATH")]
    constants: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Dafermos,
    Ode,
}

impl From<BackendArg> for Backend {
    fn from(b: BackendArg) -> Self {
        match b {
            BackendArg::Dafermos => Backend::Dafermos,
            BackendArg::Ode => Backend::Ode,
        }
    }
}

#[derive(Debug)]
pub(crate) enum Failure {
    Io(String),
    Validation(String),
    Diverged(String),
    Calibration(String),
    MissingConstants(String),
}

impl Failure {
    pub(crate) fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        Failure::Io(format!("{}: {e}", path.display()))
    }

    fn code(&self) -> u8 {
        match self {
            Failure::Io(_) => 1,
            Failure::Validation(_) => 2,
            Failure::Diverged(_) => 3,
            Failure::Calibration(_) => 4,
            Failure::MissingConstants(_) => 5,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Io(m)
            | Failure::Validation(m)
            | Failure::Diverged(m)
            | Failure::Calibration(m)
            | Failure::MissingConstants(m) => m,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Validation(e.to_string())
    }
}

impl From<CertificateError> for Failure {
    fn from(e: CertificateError) -> Self {
        match e {
            CertificateError::NotDecaying { .. } | CertificateError::ZeroInitialEnergy => {
                Failure::Calibration(e.to_string())
            }
            other => Failure::Validation(other.to_string()),
        }
    }
}

impl From<DynamicsError> for Failure {
    fn from(e: DynamicsError) -> Self {
        match e {
            DynamicsError::Diverged { .. } | DynamicsError::NonFiniteState { .. } => Failure::Diverged(e.to_string()),
            DynamicsError::Model(m) => Failure::Validation(m.to_string()),
            DynamicsError::KernelNotExponential => Failure::Validation(e.to_string()),
            other => Failure::Io(other.to_string()),
        }
    }
}

/// A scenario file after parsing and validation.
pub(crate) struct Input {
    pub(crate) loaded: LoadedScenario,
    pub(crate) validated: ValidatedScenario,
    pub(crate) hash: String,
    pub(crate) backend: Backend,
}

fn read_input(common: &Common) -> Result<Input, Failure> {
    let bytes = std::fs::read(&common.scenario)
        .map_err(|e| Failure::Validation(format!("cannot read {}: {e}", common.scenario.display())))?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| Failure::Validation(format!("{} is not UTF-8", common.scenario.display())))?;
    let loaded = memdelay::config::parse_scenario(&text)?;
    let validated = loaded
        .scenario
        .validate()
        .map_err(|e| Failure::Validation(e.to_string()))?;
    std::fs::create_dir_all(&common.out)
        .map_err(|e| Failure::Validation(format!("cannot create output directory {}: {e}", common.out.display())))?;
    let backend = common.backend.map(Backend::from).unwrap_or(loaded.backend);
    Ok(Input {
        loaded,
        validated,
        hash: scenario_hash(&bytes),
        backend,
    })
}

/// Constants from `--constants`, else from the scenario's `[certificate]`.
pub(crate) fn resolve_constants(arg: &ConstantsArg, loaded: &LoadedScenario) -> Result<DecayConstants, Failure> {
    if let Some(path) = &arg.constants {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::MissingConstants(format!("cannot read constants {}: {e}", path.display())))?;
        let v: Value = serde_json::from_str(&text)
            .map_err(|e| Failure::Validation(format!("malformed constants {}: {e}", path.display())))?;
        let field = |k: &str| v.get(k).and_then(Value::as_f64);
        let (Some(c), Some(alpha)) = (field("C"), field("alpha")) else {
            return Err(Failure::MissingConstants(format!(
                "{} lacks C or alpha",
                path.display()
            )));
        };
        let mut k = DecayConstants::user_supplied(c, alpha)?;
        if v.get("source").and_then(Value::as_str) == Some("calibrated") {
            k.source = ConstantsSource::Calibrated;
            k.fit_r2 = field("fit_r2").unwrap_or(k.fit_r2);
        }
        return Ok(k);
    }
    loaded.user_constants()?.ok_or_else(|| {
        Failure::MissingConstants(
            "no decay constants: pass --constants or set C and alpha under [certificate]".to_string(),
        )
    })
}

fn run_simulation(input: &Input, stride: usize) -> (Result<Trajectory, Failure>, Option<Trajectory>, f64) {
    let start = Instant::now();
    let result = simulate(
        &input.validated,
        SolverOptions {
            backend: input.backend,
            stride,
            ..Default::default()
        },
    );
    let wall = start.elapsed().as_secs_f64();
    match result {
        Ok(tr) => (Ok(tr), None, wall),
        Err(DynamicsError::Diverged {
            t,
            energy_ratio,
            partial,
        }) => (
            Err(Failure::Diverged(format!(
                "divergence abort at t = {t}: E_S grew by a factor {energy_ratio:e}"
            ))),
            Some(*partial),
            wall,
        ),
        Err(e) => (Err(e.into()), None, wall),
    }
}

fn write_trajectory(dir: &Path, tr: &Trajectory) -> Result<(), Failure> {
    let path = dir.join("trajectory.csv");
    tr.write_energy_csv(output::create(&path)?)
        .map_err(|e| Failure::io(&path, e))?;
    let path = dir.join("snapshots.csv");
    tr.write_snapshot_csv(output::create(&path)?)
        .map_err(|e| Failure::io(&path, e))
}

fn cmd_simulate(common: &Common, stride: Option<usize>) -> Result<(), Failure> {
    let input = read_input(common)?;
    let stride = stride.unwrap_or(input.loaded.stride).max(1);
    let (result, partial, wall) = run_simulation(&input, stride);
    let (tr, failure) = match (result, partial) {
        (Ok(tr), _) => (tr, None),
        (Err(f), Some(p)) => (p, Some(f)),
        (Err(f), None) => return Err(f),
    };
    write_trajectory(&common.out, &tr)?;
    let last = tr.final_sample();
    let e0 = tr.initial_energy();
    let summary = json!({
        "schema_version": SCHEMA_VERSION,
        "scenario_hash": input.hash,
        "scenario_name": input.loaded.name,
        "backend": input.backend,
        "modes": input.validated.modes(),
        "dt": number(tr.dt),
        "horizon": number(input.loaded.scenario.horizon),
        "steps": tr.energies.len() - 1,
        "stride": stride,
        "initial": to_value(&tr.energies[0]),
        "terminal": to_value(last),
        "terminal_ratio": if e0 > 0.0 { number(last.standard / e0) } else { Value::Null },
        "diverged": failure.is_some(),
        "divergence": failure.as_ref().map(|f| f.message().to_string()),
        "wall_time_seconds": number(wall),
    });
    write_json(&common.out.join("summary.json"), &summary)?;
    failure.map_or(Ok(()), Err)
}

fn cmd_calibrate(common: &Common, keep_schedule: bool) -> Result<(), Failure> {
    let mut input = read_input(common)?;
    if !keep_schedule {
        let tau = input.loaded.scenario.schedule.tau;
        input.loaded.scenario.schedule = Schedule::quiescent(tau);
        input.validated = input
            .loaded
            .scenario
            .validate()
            .map_err(|e| Failure::Validation(e.to_string()))?;
    }
    let (result, _, wall) = run_simulation(&input, usize::MAX);
    let tr = result?;
    let burn_in = input.loaded.burn_in();
    let k = calibrate_trajectory(&tr, burn_in)?;
    let doc = json!({
        "schema_version": SCHEMA_VERSION,
        "scenario_hash": input.hash,
        "backend": input.backend,
        "dt": number(tr.dt),
        "horizon": number(input.loaded.scenario.horizon),
        "burn_in": number(burn_in),
        "C": number(k.c),
        "alpha": number(k.alpha),
        "T0": number(k.t0),
        "fit_r2": number(k.fit_r2),
        "source": k.source,
        "wall_time_seconds": number(wall),
    });
    write_json(&common.out.join("constants.json"), &doc)
}

/// Measured `E_S(t)/E_S(0)` against the envelope at every certified cycle end
/// inside the run.
fn comparison(report: &memdelay::CertificateReport, tr: &Trajectory) -> (Vec<Value>, f64) {
    let e0 = tr.initial_energy();
    let mut rows = Vec::new();
    let mut worst = 0.0f64;
    for (n, (t, u)) in report.envelope.breakpoints.iter().skip(1).enumerate() {
        let Some(e) = tr.standard_energy_at(*t) else { break };
        let measured = e / e0;
        worst = worst.max(measured / u);
        rows.push(json!({
            "cycle": n,
            "t": number(*t),
            "envelope": number(*u),
            "measured": number(measured),
            "ratio": number(measured / u),
            "within": measured <= *u,
        }));
    }
    (rows, worst)
}

fn cmd_certify(common: &Common, constants: &ConstantsArg, with_sim: bool) -> Result<(), Failure> {
    let input = read_input(common)?;
    let k = resolve_constants(constants, &input.loaded)?;
    let report = certify(input.validated.schedule(), &k, &input.loaded.certify_options())?;
    let mut failure = None;
    let simulation = if with_sim {
        let (result, partial, wall) = run_simulation(&input, input.loaded.stride);
        let tr = match (result, partial) {
            (Ok(tr), _) => tr,
            (Err(f), Some(p)) => {
                failure = Some(f);
                p
            }
            (Err(f), None) => return Err(f),
        };
        write_trajectory(&common.out, &tr)?;
        let (rows, worst) = comparison(&report, &tr);
        json!({
            "backend": input.backend,
            "diverged": failure.is_some(),
            "terminal_ratio": number(tr.final_sample().standard / tr.initial_energy()),
            "max_measured_over_envelope": number(worst),
            "comparison": rows,
            "wall_time_seconds": number(wall),
        })
    } else {
        Value::Null
    };
    let doc = json!({
        "schema_version": SCHEMA_VERSION,
        "scenario_hash": input.hash,
        "report": to_value(&report),
        "simulation": simulation,
    });
    write_json(&common.out.join("report.json"), &doc)?;
    failure.map_or(Ok(()), Err)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate { common, stride } => cmd_simulate(common, *stride),
        Command::Calibrate { common, keep_schedule } => cmd_calibrate(common, *keep_schedule),
        Command::Certify {
            common,
            constants,
            with_sim,
        } => cmd_certify(common, constants, *with_sim),
        Command::Sweep { common, constants } => {
            read_input(common).and_then(|input| sweep::cmd_sweep(&input, constants, &common.out))
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
