use std::path::Path;

use memdelay::certificates::{certify, DecayConstants};
use memdelay::config::override_cycles;
use memdelay::dynamics::{simulate, DynamicsError, Execution, SolverOptions};
use memdelay::model::Schedule;

use crate::output::{create, opt17};
use crate::{resolve_constants, ConstantsArg, Failure, Input};

struct Point {
    bound: Option<f64>,
    t_odd: Option<f64>,
    t_even: Option<f64>,
}

#[derive(Default)]
struct Row {
    bound: Option<f64>,
    t_odd: Option<f64>,
    t_even: Option<f64>,
    status: &'static str,
    verdict: String,
    exponential_d: Option<f64>,
    terminal_ratio: Option<f64>,
    max_ratio: Option<f64>,
    message: Vec<String>,
}

fn axis(values: &Option<Vec<f64>>) -> Vec<Option<f64>> {
    match values {
        Some(v) if !v.is_empty() => v.iter().copied().map(Some).collect(),
        _ => vec![None],
    }
}

/// Effective `(bound, T_odd, T_even)` of the first cycle.
fn first_cycle(s: &Schedule) -> (Option<f64>, Option<f64>, Option<f64>) {
    s.cycles
        .first()
        .map_or((None, None, None), |c| (Some(c.bound), Some(c.on), Some(c.off)))
}

fn run_point(input: &Input, k: &DecayConstants, p: &Point) -> Row {
    let schedule = override_cycles(&input.loaded.scenario.schedule, p.bound, p.t_odd, p.t_even);
    let (bound, t_odd, t_even) = first_cycle(&schedule);
    let mut row = Row {
        bound,
        t_odd,
        t_even,
        ..Default::default()
    };
    let scenario = input.loaded.scenario.clone().with_schedule(schedule);
    let validated = match scenario.validate() {
        Ok(v) => v,
        Err(e) => {
            row.status = "invalid";
            row.message.push(e.to_string());
            return row;
        }
    };
    let mut options = input.loaded.certify_options();
    options.horizon = Some(scenario.horizon);
    match certify(validated.schedule(), k, &options) {
        Ok(report) => {
            row.verdict = serde_json::to_value(report.asymptotic.verdict)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default();
            row.exponential_d = report.exponential.map(|e| e.d);
        }
        Err(e) => row.message.push(format!("certificate: {e}")),
    }
    let opts = SolverOptions {
        backend: input.backend,
        execution: Execution::Sequential,
        stride: usize::MAX,
    };
    let tr = match simulate(&validated, opts) {
        Ok(tr) => {
            row.status = "ok";
            tr
        }
        Err(DynamicsError::Diverged { t, partial, .. }) => {
            row.status = "diverged";
            row.message.push(format!("divergence abort at t = {t}"));
            *partial
        }
        Err(e) => {
            row.status = "error";
            row.message.push(e.to_string());
            return row;
        }
    };
    let e0 = tr.initial_energy();
    if e0 > 0.0 {
        row.terminal_ratio = Some(tr.final_sample().standard / e0);
        row.max_ratio = Some(tr.energies.iter().map(|e| e.standard / e0).fold(0.0, f64::max));
    }
    row
}

pub fn cmd_sweep(input: &Input, constants: &ConstantsArg, out: &Path) -> Result<(), Failure> {
    let k = resolve_constants(constants, &input.loaded)?;
    let Some(axes) = &input.loaded.sweep else {
        return Err(Failure::Validation("scenario has no [sweep] section".to_string()));
    };
    if [&axes.bound, &axes.t_odd, &axes.t_even]
        .iter()
        .all(|a| a.as_ref().is_none_or(Vec::is_empty))
    {
        return Err(Failure::Validation("[sweep] declares no axis values".to_string()));
    }
    let mut points = Vec::new();
    for bound in axis(&axes.bound) {
        for t_odd in axis(&axes.t_odd) {
            for t_even in axis(&axes.t_even) {
                points.push(Point { bound, t_odd, t_even });
            }
        }
    }

    #[cfg(feature = "parallel")]
    let rows: Vec<Row> = {
        use rayon::prelude::*;
        points.par_iter().map(|p| run_point(input, &k, p)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let rows: Vec<Row> = points.iter().map(|p| run_point(input, &k, p)).collect();

    let path = out.join("grid.csv");
    let mut w = csv::Writer::from_writer(create(&path)?);
    let io = |e: csv::Error| Failure::io(&path, e);
    w.write_record([
        "index",
        "bound",
        "t_odd",
        "t_even",
        "status",
        "verdict",
        "exponential_d",
        "terminal_ratio",
        "max_ratio",
        "message",
    ])
    .map_err(io)?;
    for (i, r) in rows.iter().enumerate() {
        w.write_record([
            i.to_string(),
            opt17(r.bound),
            opt17(r.t_odd),
            opt17(r.t_even),
            r.status.to_string(),
            r.verdict.clone(),
            opt17(r.exponential_d),
            opt17(r.terminal_ratio),
            opt17(r.max_ratio),
            r.message.join("; "),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Failure::io(&path, e))
}
