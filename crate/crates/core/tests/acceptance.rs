//! One line per acceptance criterion. Exits non-zero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use memdelay::certificates::{
    calibrate_trajectory, certify, check_asymptotic, check_exponential, cycle_factor, observability_factor,
    CertifyOptions, DecayConstants, Variant, Verdict,
};
use memdelay::dynamics::{
    simulate, simulate_ode_oracle, Backend, DynamicsError, Integrator, SolverOptions, Trajectory,
};
use memdelay::model::{
    build_operator, validate_schedule, Cycle, FeedbackMode, MemoryKernel, OperatorKind, OperatorSpec, Scenario,
    Schedule,
};
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

/// Per-step E_S increase allowed on a feedback-free run, relative to E_S(0).
const DISSIPATION_TOL: f64 = 1e-6;
const MIN_FIT_R2: f64 = 0.99;
const MAX_CALIBRATION_SECONDS: f64 = 10.0;
const BACKEND_TOL: f64 = 1e-3;
const BACKEND_WINDOW: f64 = 10.0;
const MIN_GAP_REDUCTION: f64 = 2.0;
const TIE_TOL: f64 = 1e-12;
const ENVELOPE_SLACK: f64 = 1.1;
const ENVELOPE_TERMINAL: f64 = 1e-3;
const MAX_ENVELOPE_FACTOR: f64 = 0.9;
const GEOMETRIC_TERMINAL: f64 = 1e-2;
const MIN_GROWTH: f64 = 10.0;
const LINEARITY_TOL: f64 = 1e-12;
const TRANSPORT_TOL: f64 = 5e-2;
const RANDOM_CASES: u32 = 1000;
const MIN_ORDER: f64 = 1.5;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn e_s_ratio(tr: &Trajectory, t: f64) -> f64 {
    tr.standard_energy_at(t).expect("time inside the run") / tr.initial_energy()
}

fn criterion_1() -> (Outcome, DecayConstants) {
    let start = Instant::now();
    let scenario = Scenario::desk_default().validate().unwrap();
    let tr = simulate(&scenario, SolverOptions::default()).unwrap();
    let k = calibrate_trajectory(&tr, 0.0).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let e0 = tr.initial_energy();
    let worst = tr
        .energies
        .windows(2)
        .map(|w| (w[1].standard - w[0].standard) / e0)
        .fold(f64::NEG_INFINITY, f64::max);
    let pass = worst < DISSIPATION_TOL && k.alpha > 0.0 && k.fit_r2 >= MIN_FIT_R2 && secs < MAX_CALIBRATION_SECONDS;
    let detail = format!(
        "max step increase {worst:.3e}·E_S(0) (< {DISSIPATION_TOL:e}), alpha {:.6}, C {:.6}, r² {:.6} (≥ {MIN_FIT_R2}), {secs:.2} s (< {MAX_CALIBRATION_SECONDS} s)",
        k.alpha, k.c, k.fit_r2
    );
    (outcome(pass, detail), k)
}

fn backend_gap(dt: f64) -> f64 {
    let scenario = Scenario::desk_default()
        .with_dt(dt)
        .with_horizon(BACKEND_WINDOW)
        .validate()
        .unwrap();
    let a = simulate(&scenario, SolverOptions::default()).unwrap();
    let b = simulate_ode_oracle(&scenario, SolverOptions::default()).unwrap();
    let e0 = a.initial_energy();
    a.energies
        .iter()
        .zip(b.energies.iter().step_by(2))
        .map(|(x, y)| {
            assert!((x.t - y.t).abs() < 1e-9);
            (x.standard - y.standard).abs() / e0
        })
        .fold(0.0, f64::max)
}

fn criterion_2() -> Outcome {
    let dt = Scenario::desk_default().dt;
    let coarse = backend_gap(dt);
    let fine = backend_gap(dt / 2.0);
    let ratio = coarse / fine;
    outcome(
        coarse <= BACKEND_TOL && ratio >= MIN_GAP_REDUCTION,
        format!("max gap {coarse:.3e} (≤ {BACKEND_TOL:e}) over [0, {BACKEND_WINDOW}], halved {fine:.3e}, reduction {ratio:.3} (≥ {MIN_GAP_REDUCTION})"),
    )
}

fn criterion_3() -> Outcome {
    let c = (-0.5f64).exp() - 0.25;
    let (b, t_odd, tau) = (0.5, 0.5, 1.0);
    let general = cycle_factor(Variant::General, c, b, t_odd, tau).unwrap();
    let short = cycle_factor(Variant::ShortDelay, c, b, t_odd, tau).unwrap();
    let bt = b * t_odd;
    let oracle = bt.exp() * (c + 1.0 - (-bt).exp());

    let k = DecayConstants::user_supplied(2.0, 0.5).unwrap();
    let t_star = (k.c / c).ln() / k.alpha;
    let sched = validate_schedule(&Schedule::periodic_delayed(tau, t_star, t_odd, b)).unwrap();
    let verdict = |v| {
        check_asymptotic(
            &sched,
            &k,
            &CertifyOptions {
                variant: Some(v),
                ..Default::default()
            },
        )
        .unwrap()
        .verdict
    };
    let (vg, vs) = (verdict(Variant::General), verdict(Variant::ShortDelay));
    let pass = (general - 1.0).abs() <= TIE_TOL
        && short > 0.74
        && short < 0.75
        && (short - oracle).abs() <= 1e-15
        && vg == Verdict::NotCertified
        && vs == Verdict::Certified;
    outcome(
        pass,
        format!("general {general:.17} (|·-1| ≤ {TIE_TOL:e}), short_delay {short:.6} in (0.74, 0.75), oracle {oracle:.6}; verdicts {vg:?} / {vs:?}"),
    )
}

fn criterion_4(k: &DecayConstants) -> Outcome {
    let (tau, t_star, b, cycles) = (0.5, 8.0, 0.5, 9usize);
    let t_tilde = tau / 2.0;
    let sched = Schedule::periodic_delayed(tau, t_star, t_tilde, b);
    let horizon = cycles as f64 * (t_star + t_tilde);
    let scenario = Scenario::desk_default()
        .with_schedule(sched)
        .with_horizon(horizon)
        .validate()
        .unwrap();
    let report = certify(
        scenario.schedule(),
        k,
        &CertifyOptions {
            horizon: Some(horizon),
            ..Default::default()
        },
    )
    .unwrap();
    let Some(exp) = report.exponential else {
        return outcome(
            false,
            format!("no exponential certificate: {:?}", report.exponential_note),
        );
    };
    let tr = simulate(&scenario, SolverOptions::default()).unwrap();
    let env = report.envelope.cycle_end_values();
    let mut worst = 0.0f64;
    for (n, u) in env.iter().enumerate().take(cycles) {
        let t = (n + 1) as f64 * (t_star + t_tilde);
        worst = worst.max(e_s_ratio(&tr, t) / u);
    }
    let terminal = tr.final_sample().standard / tr.initial_energy();
    let pass = t_star > k.t0
        && exp.d < MAX_ENVELOPE_FACTOR
        && env.len() >= cycles
        && cycles >= 8
        && worst <= ENVELOPE_SLACK
        && terminal < ENVELOPE_TERMINAL;
    outcome(
        pass,
        format!(
            "T* {t_star} > T0 {:.4}, d {:.4} (< {MAX_ENVELOPE_FACTOR}), max E_S/envelope {worst:.3e} (≤ {ENVELOPE_SLACK}) over {cycles} cycles, terminal {terminal:.3e} (< {ENVELOPE_TERMINAL:e})",
            k.t0, exp.d
        ),
    )
}

fn criterion_5(k: &DecayConstants) -> Outcome {
    let (t_star, t_tilde, cycles) = (5.0, 0.25, 10usize);
    let sched = Schedule::new(
        0.5,
        FeedbackMode::DelayedFeedback,
        vec![Cycle::new(t_star, t_tilde, 2.0)],
    )
    .geometric(0.5);
    let period = t_star + t_tilde;
    let horizon = cycles as f64 * period;
    let scenario = Scenario::desk_default()
        .with_schedule(sched)
        .with_horizon(horizon)
        .validate()
        .unwrap();
    let report = certify(
        scenario.schedule(),
        k,
        &CertifyOptions {
            horizon: Some(horizon),
            ..Default::default()
        },
    )
    .unwrap();
    let tr = simulate(&scenario, SolverOptions::default()).unwrap();
    let starts: Vec<f64> = (0..=cycles).map(|n| e_s_ratio(&tr, n as f64 * period)).collect();
    let decreasing = starts.windows(2).all(|w| w[1] < w[0]);
    let terminal = tr.final_sample().standard / tr.initial_energy();
    let pass = report.asymptotic.verdict == Verdict::Certified && decreasing && terminal < GEOMETRIC_TERMINAL;
    outcome(
        pass,
        format!(
            "verdict {:?}, E_S(t_2n) strictly decreasing: {decreasing}, terminal {terminal:.3e} (< {GEOMETRIC_TERMINAL:e}) over {cycles} cycles",
            report.asymptotic.verdict
        ),
    )
}

fn criterion_6() -> Outcome {
    let mut sched = Schedule::new(0.5, FeedbackMode::DelayedFeedback, vec![Cycle::new(0.0, 20.0, 50.0)]);
    sched.enforce_dwell = false;
    let scenario = Scenario::desk_default()
        .with_schedule(sched)
        .with_horizon(20.0)
        .validate()
        .unwrap();
    let (tr, note) = match simulate(&scenario, SolverOptions::default()) {
        Ok(tr) => (tr, "ran to the horizon".to_string()),
        Err(DynamicsError::Diverged { t, partial, .. }) => (*partial, format!("divergence guard at t = {t:.3}")),
        Err(e) => return outcome(false, e.to_string()),
    };
    let e0 = tr.initial_energy();
    let growth = tr.energies.iter().map(|e| e.standard / e0).fold(0.0, f64::max);
    outcome(
        growth >= MIN_GROWTH,
        format!("max E_S/E_S(0) {growth:.3e} (≥ {MIN_GROWTH}), {note}"),
    )
}

fn criterion_7(k: &DecayConstants) -> Outcome {
    let (t_star, t_tilde, gain, periods) = (8.0, 0.5, 0.5, 5usize);
    let sched = Schedule::new(0.5, FeedbackMode::AntiDamping, vec![Cycle::new(t_star, t_tilde, gain)]).periodic();
    let period = t_star + t_tilde;
    let c = observability_factor(k, t_star).unwrap();
    let product = (2.0 * gain * t_tilde).exp() * c;
    let scenario = Scenario::desk_default()
        .with_schedule(sched)
        .with_horizon(periods as f64 * period)
        .validate()
        .unwrap();
    let exp = match check_exponential(scenario.schedule(), k, None) {
        Ok(e) => e,
        Err(e) => {
            return outcome(
                false,
                format!("e^(2kT̃)c = {product:.4}; no exponential certificate: {e}"),
            )
        }
    };
    let tr = simulate(&scenario, SolverOptions::default()).unwrap();
    let worst = (0..periods)
        .map(|n| e_s_ratio(&tr, (n + 1) as f64 * period) / e_s_ratio(&tr, n as f64 * period))
        .fold(0.0, f64::max);
    let pass = product < 1.0 && exp.d < 1.0 && worst <= exp.d * ENVELOPE_SLACK;
    outcome(
        pass,
        format!(
            "e^(2kT̃)c {product:.4} (< 1), certified d {:.4}, beta {:.4}, max per-period ratio {worst:.4} (≤ {:.4})",
            exp.d,
            exp.beta,
            exp.d * ENVELOPE_SLACK
        ),
    )
}

fn small(modes: usize) -> Scenario {
    let mut s = Scenario::desk_default();
    s.operator = build_operator(OperatorKind::Wave1d, modes, std::f64::consts::PI).unwrap();
    s.initial_position = memdelay::model::parabola_coefficients(modes, std::f64::consts::PI);
    s.initial_velocity = (0..modes).map(|k| 0.1 / (k + 1) as f64).collect();
    s.dt = 1.0 / 64.0;
    s.horizon = 6.0;
    s.schedule = Schedule::periodic_delayed(0.5, 1.0, 0.5, 0.8);
    s
}

fn linearity() -> bool {
    let base = small(4);
    let gamma = 3.0;
    let mut scaled = base.clone();
    scaled.initial_position.iter_mut().for_each(|x| *x *= gamma);
    scaled.initial_velocity.iter_mut().for_each(|x| *x *= gamma);
    [Backend::Dafermos, Backend::Ode].into_iter().all(|backend| {
        let opts = SolverOptions {
            backend,
            ..Default::default()
        };
        let a = simulate(&base.validate().unwrap(), opts).unwrap();
        let b = simulate(&scaled.validate().unwrap(), opts).unwrap();
        a.energies.iter().zip(&b.energies).all(|(x, y)| {
            let want = gamma * gamma * x.full;
            (y.full - want).abs() <= LINEARITY_TOL * want.abs()
        })
    })
}

fn decoupling() -> bool {
    let mut s = small(4);
    s.initial_position[1] = 0.0;
    s.initial_velocity[1] = 0.0;
    let tr = simulate(&s.validate().unwrap(), SolverOptions::default()).unwrap();
    let mut alone = s.clone();
    for k in 1..4 {
        alone.initial_position[k] = 0.0;
        alone.initial_velocity[k] = 0.0;
    }
    let solo = simulate(&alone.validate().unwrap(), SolverOptions::default()).unwrap();
    tr.snapshots.iter().all(|x| x.u[1] == 0.0 && x.v[1] == 0.0)
        && tr
            .snapshots
            .iter()
            .zip(&solo.snapshots)
            .all(|(a, b)| a.u[0] == b.u[0] && a.v[0] == b.v[0])
}

/// Worst relative error of the delay lookup and of the history grid against
/// the stored past, on the default lag grid.
#[allow(clippy::needless_range_loop)]
fn lookup_and_grid() -> (bool, f64, f64) {
    let v = small(3).validate().unwrap();
    let integ = Integrator::new(&v, Backend::Dafermos).unwrap();
    let mut state = integ.init_state();
    let m = v.delay_steps();
    let (dt, ds) = (v.dt(), v.lag_step());
    let mut vel = vec![state.v().to_vec()];
    let mut pos = vec![state.u().to_vec()];
    let mut lookup_exact = true;
    for _ in 0..v.steps() {
        integ.step(&mut state).unwrap();
        vel.push(state.v().to_vec());
        pos.push(state.u().to_vec());
        let n = vel.len() - 1;
        if n >= m {
            lookup_exact &= memdelay::dynamics::delayed_velocity(&state).unwrap() == &vel[n - m][..];
        }
    }
    let n = pos.len() - 1;
    let weights = integ.grid().weights();
    let mut worst = 0.0f64;
    for k in 0..3 {
        let eta = state.eta(k).unwrap();
        let (mut err, mut norm) = (0.0, 0.0);
        for (j, e) in eta.iter().enumerate() {
            let back = (j as f64 * ds / dt).round() as usize;
            if back > n {
                break;
            }
            let exact = pos[n][k] - pos[n - back][k];
            err += weights[j] * (e - exact).powi(2);
            norm += weights[j] * exact * exact;
        }
        worst = worst.max((err / norm).sqrt());
    }
    (lookup_exact, worst, TRANSPORT_TOL * (dt + ds))
}

fn runner() -> TestRunner {
    TestRunner::new_with_rng(
        Config {
            cases: RANDOM_CASES,
            failure_persistence: None,
            ..Config::default()
        },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    )
}

fn contraction_equivalence() -> bool {
    runner()
        .run(&(1.0001f64..20.0, 0.01f64..5.0, 0.001f64..50.0), |(c, alpha, t)| {
            let k = DecayConstants::user_supplied(c, alpha).unwrap();
            let r = observability_factor(&k, t);
            proptest::prop_assert_eq!(r.is_ok(), t > k.t0);
            if let Ok(cn) = r {
                proptest::prop_assert!(cn < 1.0);
            }
            Ok(())
        })
        .is_ok()
}

fn short_below_general() -> bool {
    runner()
        .run(
            &(0.001f64..0.999, 0.001f64..5.0, 0.001f64..2.0, 0.0f64..1.0),
            |(c, b, t, slack)| {
                let s = cycle_factor(Variant::ShortDelay, c, b, t, t + slack).unwrap();
                let g = cycle_factor(Variant::General, c, b, t, t + slack).unwrap();
                proptest::prop_assert!(s < g);
                Ok(())
            },
        )
        .is_ok()
}

fn criterion_8() -> Outcome {
    let lin = linearity();
    let dec = decoupling();
    let (lookup, grid_err, grid_tol) = lookup_and_grid();
    let eq = contraction_equivalence();
    let sd = short_below_general();
    let grid = grid_err <= grid_tol;
    outcome(
        lin && dec && lookup && grid && eq && sd,
        format!(
            "linearity {lin}, decoupling {dec}, delay lookup exact {lookup}, η-grid error {grid_err:.3e} (≤ {grid_tol:.3e}) {grid}, c_n ⇔ T > T0 on {RANDOM_CASES} cases {eq}, short_delay < general on {RANDOM_CASES} cases {sd}"
        ),
    )
}

fn oscillator_error(dt: f64) -> f64 {
    let mut s = Scenario::desk_default();
    s.operator = OperatorSpec::custom(vec![1.0]).unwrap();
    s.kernel = MemoryKernel::exponential(1e-12, 1.0);
    s.initial_position = vec![1.0];
    s.initial_velocity = vec![0.0];
    s.dt = dt;
    s.horizon = 10.0;
    let tr = simulate(&s.validate().unwrap(), SolverOptions::default()).unwrap();
    tr.snapshots
        .iter()
        .map(|x| (x.u[0] - x.t.cos()).abs())
        .fold(0.0, f64::max)
}

fn criterion_9() -> Outcome {
    let errs: Vec<f64> = [128.0, 256.0, 512.0]
        .iter()
        .map(|n| oscillator_error(1.0 / n))
        .collect();
    let orders: Vec<f64> = errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let pass = orders.iter().all(|p| *p >= MIN_ORDER);
    outcome(
        pass,
        format!(
            "errors {:.3e} / {:.3e} / {:.3e}, orders {:.3} / {:.3} (≥ {MIN_ORDER})",
            errs[0], errs[1], errs[2], orders[0], orders[1]
        ),
    )
}

fn guarded(f: impl FnOnce() -> Outcome) -> Outcome {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(o) => o,
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        }
    }
}

fn main() {
    let names = [
        "no-feedback dissipation",
        "backend oracle equivalence",
        "tie-case factors",
        "envelope consistency",
        "summable-bound stability",
        "destabilization witness",
        "anti-damping variant",
        "invariant suites",
        "convergence",
    ];
    // Calibration runs alone so its wall time is not inflated by the others.
    let mut constants = None;
    let first = guarded(|| {
        let (o, k) = criterion_1();
        constants = Some(k);
        o
    });
    let k = constants.unwrap_or_else(|| DecayConstants::user_supplied(2.0, 0.5).unwrap());
    let k = &k;
    let rest: Vec<Outcome> = std::thread::scope(|s| {
        let jobs: Vec<Box<dyn FnOnce() -> Outcome + Send + '_>> = vec![
            Box::new(criterion_2),
            Box::new(criterion_3),
            Box::new(move || criterion_4(k)),
            Box::new(move || criterion_5(k)),
            Box::new(criterion_6),
            Box::new(move || criterion_7(k)),
            Box::new(criterion_8),
            Box::new(criterion_9),
        ];
        let handles: Vec<_> = jobs.into_iter().map(|job| s.spawn(move || guarded(job))).collect();
        handles.into_iter().map(|h| h.join().expect("guarded")).collect()
    });
    let mut failed = 0;
    for (i, o) in std::iter::once(first).chain(rest).enumerate() {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("{tag} criterion {} ({}): {}", i + 1, names[i], o.detail);
        failed += usize::from(!o.pass);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
