use memdelay::dynamics::{simulate, Backend, Integrator, SolverOptions, Trajectory};
use memdelay::energy::{energy_series, full_energy, standard_energy};
use memdelay::model::{
    build_operator, Cycle, FeedbackMode, MemoryKernel, OperatorKind, OperatorSpec, Scenario, Schedule,
};

/// Tolerance for discrete derivative bounds, relative to E_S(0) per unit time.
const RATE_TOL: f64 = 1e-3;

fn one_mode(u: f64, v: f64) -> Scenario {
    let mut s = Scenario::desk_default();
    s.operator = OperatorSpec::custom(vec![1.0]).unwrap();
    s.kernel = MemoryKernel::exponential(0.2, 1.0);
    s.initial_position = vec![u];
    s.initial_velocity = vec![v];
    s.dt = 1.0 / 64.0;
    s.horizon = 0.0;
    s
}

fn initial_energy(s: &Scenario) -> (f64, f64) {
    let v = s.validate().unwrap();
    let integ = Integrator::new(&v, Backend::Dafermos).unwrap();
    let state = integ.init_state();
    (standard_energy(&state, &integ), full_energy(&state, &integ).unwrap())
}

#[test]
fn closed_form_states() {
    assert_eq!(initial_energy(&one_mode(0.0, 0.0)), (0.0, 0.0));
    let (es, _) = initial_energy(&one_mode(0.0, 1.0));
    assert_eq!(es, 0.5);
    // Constant past: η ≡ 0, so only the reduced stiffness (1 - 0.2)/2 remains.
    let (es, e) = initial_energy(&one_mode(1.0, 0.0));
    assert!((es - 0.4).abs() < 1e-15);
    assert_eq!(e, es);
}

#[test]
fn single_sample_series() {
    let v = one_mode(1.0, 0.0).validate().unwrap();
    let tr = simulate(&v, SolverOptions::default()).unwrap();
    assert_eq!(energy_series(&tr).len(), 1);
}

fn wave(modes: usize, schedule: Schedule, horizon: f64) -> Trajectory {
    let mut s = Scenario::desk_default();
    s.operator = build_operator(OperatorKind::Wave1d, modes, std::f64::consts::PI).unwrap();
    s.initial_position = memdelay::model::parabola_coefficients(modes, std::f64::consts::PI);
    s.initial_velocity = (0..modes).map(|k| 0.3 / (k + 1) as f64).collect();
    s.dt = 1.0 / 128.0;
    s.schedule = schedule;
    s.horizon = horizon;
    simulate(&s.validate().unwrap(), SolverOptions::default()).unwrap()
}

#[test]
fn components_are_consistent_and_nonnegative() {
    let tr = wave(6, Schedule::periodic_delayed(0.5, 1.0, 0.75, 1.5), 8.0);
    for e in &tr.energies {
        assert!(e.kinetic >= 0.0 && e.potential >= 0.0 && e.memory_term >= 0.0 && e.delay_term >= 0.0);
        assert!((e.standard - (e.kinetic + e.potential + e.memory_term)).abs() <= 1e-14 * e.standard);
        assert!((e.full - (e.standard + e.delay_term)).abs() <= 1e-14 * e.full);
        assert!(e.full >= e.standard);
    }
    assert!(tr.energies.windows(2).all(|w| w[1].t > w[0].t));
}

#[test]
fn no_feedback_dissipates() {
    let tr = wave(8, Schedule::quiescent(0.5), 10.0);
    let e0 = tr.initial_energy();
    for w in tr.energies.windows(2) {
        assert!(w[1].standard - w[0].standard <= 1e-6 * tr.dt * e0);
    }
}

fn on_interval(tr: &Trajectory, t: f64) -> Option<f64> {
    let b = tr.schedule.coefficient_at(t).ok()?;
    (b != 0.0).then_some(b.abs())
}

#[test]
fn bad_interval_growth_bound() {
    // E'(t) ≤ b ‖u_t‖² on on intervals when every off interval is at least τ.
    let tr = wave(6, Schedule::periodic_delayed(0.5, 0.75, 1.5, 2.0), 9.0);
    let e0 = tr.initial_energy();
    let dt = tr.dt;
    for w in tr.energies.windows(2) {
        let mid = 0.5 * (w[0].t + w[1].t);
        let Some(b) = on_interval(&tr, mid) else { continue };
        let v2 = 2.0 * w[0].kinetic.max(w[1].kinetic);
        let rate = (w[1].full - w[0].full) / dt;
        assert!(rate <= b * v2 + RATE_TOL * e0, "t = {}: {rate} > {}", w[0].t, b * v2);
    }
}

#[test]
fn anti_damping_growth_bound() {
    let sched = Schedule::new(0.0, FeedbackMode::AntiDamping, vec![Cycle::new(1.0, 1.0, 0.7)]).periodic();
    let tr = wave(6, sched, 8.0);
    let e0 = tr.initial_energy();
    for w in tr.energies.windows(2) {
        let mid = 0.5 * (w[0].t + w[1].t);
        let Some(k) = on_interval(&tr, mid) else { continue };
        let v2 = 2.0 * w[0].kinetic.max(w[1].kinetic);
        let rate = (w[1].standard - w[0].standard) / tr.dt;
        assert!(rate <= k * v2 + RATE_TOL * e0);
    }
}

#[test]
fn short_delay_growth_bound() {
    // On intervals no longer than τ: E_S' ≤ b E_S(t) + b E_S(t_{2n}).
    let tau = 0.5;
    let sched = Schedule::periodic_delayed(tau, 1.0, 0.4, 1.5);
    let tr = wave(6, sched, 8.0);
    let e0 = tr.initial_energy();
    for w in tr.energies.windows(2) {
        let mid = 0.5 * (w[0].t + w[1].t);
        let Some(b) = on_interval(&tr, mid) else { continue };
        let n = tr.schedule.cycle_index(mid).unwrap();
        let start = tr.schedule.cycle_start(n).unwrap();
        let es_start = tr.standard_energy_at(start).unwrap();
        let es = w[0].standard.max(w[1].standard);
        let rate = (w[1].standard - w[0].standard) / tr.dt;
        assert!(rate <= b * es + b * es_start + RATE_TOL * e0);
    }
}
