//! Decay constants and stability certificates for switched feedback schedules.
//!
//! Off intervals contract the standard energy by the observability factor
//! `c_n = C e^{-α T_{2n}}`; on intervals grow it by at most a variant-specific
//! amount. A cycle factor below one certifies a contraction over that cycle and
//! the running product of factors bounds `E_S(t_{2n+2}) / E_S(0)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::Trajectory;
use crate::model::{Extension, FeedbackMode, Profile, ValidatedSchedule};

/// Factors within this distance of one count as no contraction.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Default envelope level a finite schedule must reach to be certified.
pub const DEFAULT_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CertificateError {
    #[error("energy is not decaying (fitted slope {slope} ≥ 0)")]
    NotDecaying { slope: f64 },
    #[error("initial energy is zero")]
    ZeroInitialEnergy,
    #[error("need at least two samples after the burn-in, got {0}")]
    TooFewSamples(usize),
    #[error("calibration run has nonzero feedback")]
    FeedbackPresent,
    #[error("invalid constants: {0}")]
    InvalidConstants(String),
    #[error("off interval {t_even} does not exceed T0 = {t0} (c = {c} ≥ 1)")]
    IntervalTooShort { t_even: f64, t0: f64, c: f64 },
    #[error("on interval {t_odd} exceeds the delay {tau}; short-delay factor does not apply")]
    ShortDelayInapplicable { t_odd: f64, tau: f64 },
    #[error("variant {variant:?} does not match feedback mode {mode:?}")]
    VariantMismatch { variant: Variant, mode: FeedbackMode },
    #[error("invalid factor input: {0}")]
    InvalidInput(String),
    #[error("interval lengths are not constant across cycles")]
    NotPeriodicLengths,
    #[error("off interval {t_even} is shorter than the delay {tau}")]
    OffShorterThanDelay { t_even: f64, tau: f64 },
    #[error("no contraction: d = {d} ≥ 1")]
    NoContraction { d: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstantsSource {
    Calibrated,
    UserSupplied,
}

/// `E_S(t) ≤ C e^{-αt} E_S(0)` for runs without feedback.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayConstants {
    #[serde(rename = "C")]
    pub c: f64,
    pub alpha: f64,
    #[serde(rename = "T0")]
    pub t0: f64,
    /// Coefficient of determination of the log-energy fit (1 for user constants).
    pub fit_r2: f64,
    pub source: ConstantsSource,
}

impl DecayConstants {
    pub fn user_supplied(c: f64, alpha: f64) -> Result<Self, CertificateError> {
        if !(c > 1.0 && c.is_finite()) {
            return Err(CertificateError::InvalidConstants(format!("C = {c} must exceed 1")));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(CertificateError::InvalidConstants(format!(
                "alpha = {alpha} must be positive"
            )));
        }
        Ok(DecayConstants {
            c,
            alpha,
            t0: c.ln() / alpha,
            fit_r2: 1.0,
            source: ConstantsSource::UserSupplied,
        })
    }

    pub fn is_calibrated(&self) -> bool {
        self.source == ConstantsSource::Calibrated
    }
}

/// Fits `ln E_S(t) ≈ a - α t` on `t ≥ burn_in` by least squares and inflates
/// `C` until the envelope covers every sample.
pub fn calibrate_decay(times: &[f64], energies: &[f64], burn_in: f64) -> Result<DecayConstants, CertificateError> {
    assert_eq!(times.len(), energies.len());
    let e0 = *energies.first().ok_or(CertificateError::ZeroInitialEnergy)?;
    if !(e0 > 0.0) {
        return Err(CertificateError::ZeroInitialEnergy);
    }
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(energies)
        .filter(|(t, e)| **t >= burn_in && **e > 0.0)
        .map(|(t, e)| (*t, e.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(CertificateError::TooFewSamples(pts.len()));
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut stt, mut sty, mut syy) = (0.0, 0.0, 0.0);
    for &(t, y) in &pts {
        stt += (t - mt) * (t - mt);
        sty += (t - mt) * (y - my);
        syy += (y - my) * (y - my);
    }
    if stt == 0.0 {
        return Err(CertificateError::TooFewSamples(1));
    }
    let slope = sty / stt;
    if !(slope < 0.0) {
        return Err(CertificateError::NotDecaying { slope });
    }
    let intercept = my - slope * mt;
    let ss_res = syy - slope * sty;
    let fit_r2 = if syy > 0.0 {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    } else {
        1.0
    };

    let alpha = -slope;
    let ln_e0 = e0.ln();
    let mut c = (intercept - ln_e0).exp();
    for (t, e) in times.iter().zip(energies) {
        if *e > 0.0 {
            c = c.max((e.ln() - ln_e0 + alpha * t).exp());
        }
    }
    let c = c.max(1.0 + 1e-9);
    Ok(DecayConstants {
        c,
        alpha,
        t0: c.ln() / alpha,
        fit_r2,
        source: ConstantsSource::Calibrated,
    })
}

/// [`calibrate_decay`] on a run whose feedback is identically zero.
pub fn calibrate_trajectory(trajectory: &Trajectory, burn_in: f64) -> Result<DecayConstants, CertificateError> {
    if !trajectory.is_feedback_free() {
        return Err(CertificateError::FeedbackPresent);
    }
    calibrate_decay(&trajectory.times(), &trajectory.standard_energies(), burn_in)
}

/// `c = C e^{-α T_even}`; errors unless `c < 1`.
pub fn observability_factor(constants: &DecayConstants, t_even: f64) -> Result<f64, CertificateError> {
    if !(t_even > 0.0) {
        return Err(CertificateError::InvalidInput(format!(
            "T_even = {t_even} must be positive"
        )));
    }
    let c = constants.c * (-constants.alpha * t_even).exp();
    if t_even <= constants.t0 || c >= 1.0 {
        return Err(CertificateError::IntervalTooShort {
            t_even,
            t0: constants.t0,
            c,
        });
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// `e^{2bT}(c + bT)`.
    General,
    /// `e^{bT}(c + 1 - e^{-bT})`, for `T ≤ τ`.
    ShortDelay,
    /// `e^{2kT} c`.
    AntiDamp,
}

pub fn cycle_factor(variant: Variant, c: f64, bound: f64, t_odd: f64, tau: f64) -> Result<f64, CertificateError> {
    if !(c > 0.0 && c < 1.0) {
        return Err(CertificateError::InvalidInput(format!("c = {c} is not in (0, 1)")));
    }
    if !(bound >= 0.0 && bound.is_finite()) || !(t_odd >= 0.0 && t_odd.is_finite()) {
        return Err(CertificateError::InvalidInput(format!(
            "bound = {bound}, T_odd = {t_odd} must be finite and non-negative"
        )));
    }
    let bt = bound * t_odd;
    Ok(match variant {
        Variant::General => (2.0 * bt).exp() * (c + bt),
        Variant::ShortDelay => {
            if t_odd > tau {
                return Err(CertificateError::ShortDelayInapplicable { t_odd, tau });
            }
            bt.exp() * (c - (-bt).exp_m1())
        }
        Variant::AntiDamp => (2.0 * bt).exp() * c,
    })
}

/// Variant the schedule supports for one cycle.
pub fn default_variant(mode: FeedbackMode, t_odd: f64, tau: f64) -> Variant {
    match mode {
        FeedbackMode::AntiDamping => Variant::AntiDamp,
        FeedbackMode::DelayedFeedback if t_odd <= tau => Variant::ShortDelay,
        FeedbackMode::DelayedFeedback => Variant::General,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertifyOptions {
    /// Forces one variant for every cycle instead of the automatic choice.
    pub variant: Option<Variant>,
    /// Envelope level a finite schedule must reach.
    pub threshold: f64,
    /// For extended schedules, tabulate cycles until this time.
    pub horizon: Option<f64>,
    /// Window length of the windowed-product column.
    pub window: usize,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        CertifyOptions {
            variant: None,
            threshold: DEFAULT_THRESHOLD,
            horizon: None,
            window: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CycleStatus {
    Ok,
    IntervalTooShort,
    OffShorterThanDelay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRow {
    pub index: usize,
    pub start: f64,
    pub off: f64,
    pub on: f64,
    /// Largest `|b|` (or `k`) on the on interval.
    pub bound: f64,
    pub c: f64,
    pub variant: Variant,
    pub factor: Option<f64>,
    pub log_sum: Option<f64>,
    pub envelope: Option<f64>,
    pub status: CycleStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Certified,
    NotCertified,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticCertificate {
    pub verdict: Verdict,
    pub reason: String,
    pub cycles: Vec<CycleRow>,
    /// Cycles whose off interval gives no contraction or is shorter than the delay.
    pub offending_cycles: Vec<usize>,
}

fn effective_bound(schedule: &ValidatedSchedule, bound: f64) -> f64 {
    match schedule.schedule().profile {
        Profile::ConstantAtBound => bound,
        Profile::Scaled(f) => f.abs() * bound,
    }
}

fn cycle_count(schedule: &ValidatedSchedule, horizon: Option<f64>) -> usize {
    let listed = schedule.listed_cycles();
    match horizon {
        Some(h) if schedule.is_extended() => {
            let mut n = listed;
            while schedule.cycle_start(n).is_some_and(|s| s < h) {
                n += 1;
            }
            n.max(listed)
        }
        _ => listed,
    }
}

/// Per-cycle contraction table with partial log-sums and running products.
pub fn cycle_table(
    schedule: &ValidatedSchedule,
    constants: &DecayConstants,
    options: &CertifyOptions,
) -> Result<Vec<CycleRow>, CertificateError> {
    let mode = schedule.mode();
    let tau = schedule.tau();
    if let Some(v) = options.variant {
        let ok = match mode {
            FeedbackMode::AntiDamping => v == Variant::AntiDamp,
            FeedbackMode::DelayedFeedback => v != Variant::AntiDamp,
        };
        if !ok {
            return Err(CertificateError::VariantMismatch { variant: v, mode });
        }
    }
    let mut rows = Vec::new();
    let mut log_sum = Some(0.0);
    for n in 0..cycle_count(schedule, options.horizon) {
        let cycle = schedule.cycle(n).expect("cycle in range");
        let start = schedule.cycle_start(n).expect("cycle in range");
        let bound = effective_bound(schedule, cycle.bound);
        let variant = options.variant.unwrap_or_else(|| default_variant(mode, cycle.on, tau));
        let c = constants.c * (-constants.alpha * cycle.off).exp();
        let status = if mode == FeedbackMode::DelayedFeedback && cycle.off < tau {
            CycleStatus::OffShorterThanDelay
        } else if observability_factor(constants, cycle.off).is_err() {
            CycleStatus::IntervalTooShort
        } else {
            CycleStatus::Ok
        };
        let factor = match status {
            CycleStatus::Ok => Some(cycle_factor(variant, c, bound, cycle.on, tau)?),
            _ => None,
        };
        log_sum = match (log_sum, factor) {
            (Some(s), Some(f)) => Some(s + f.ln()),
            _ => None,
        };
        rows.push(CycleRow {
            index: n,
            start,
            off: cycle.off,
            on: cycle.on,
            bound,
            c,
            variant,
            factor,
            log_sum,
            envelope: log_sum.map(f64::exp),
            status,
        });
    }
    Ok(rows)
}

/// Verdict on `Σ ln(factor_n) = -∞`.
///
/// Finite schedules are judged by whether the final envelope reaches the
/// threshold; periodic ones by the repeating factor; geometric ones by the
/// summability of `b_{2n+1} T_{2n+1}`.
pub fn check_asymptotic(
    schedule: &ValidatedSchedule,
    constants: &DecayConstants,
    options: &CertifyOptions,
) -> Result<AsymptoticCertificate, CertificateError> {
    let cycles = cycle_table(schedule, constants, options)?;
    let offending: Vec<usize> = cycles
        .iter()
        .filter(|r| r.status != CycleStatus::Ok)
        .map(|r| r.index)
        .collect();
    if !offending.is_empty() {
        return Ok(AsymptoticCertificate {
            verdict: Verdict::Inconclusive,
            reason: format!("no contraction available on cycles {offending:?}"),
            cycles,
            offending_cycles: offending,
        });
    }
    let last = cycles.last().expect("schedule has a cycle");
    let last_factor = last.factor.expect("status ok");
    let periodic_rule = |f: f64| {
        if f < 1.0 - TIE_TOLERANCE {
            (Verdict::Certified, format!("repeating cycle factor {f} < 1"))
        } else {
            (
                Verdict::NotCertified,
                format!("repeating cycle factor {f} is not below 1"),
            )
        }
    };
    let (verdict, reason) = match schedule.extension() {
        Extension::None => {
            let env = last.envelope.expect("status ok");
            if env <= options.threshold {
                (
                    Verdict::Certified,
                    format!("final envelope {env} ≤ threshold {}", options.threshold),
                )
            } else {
                (
                    Verdict::NotCertified,
                    format!("final envelope {env} > threshold {}", options.threshold),
                )
            }
        }
        Extension::Periodic => periodic_rule(last_factor),
        Extension::Geometric(r) if r < 1.0 => (
            Verdict::Certified,
            format!("bounds decay geometrically (ratio {r}) with off intervals longer than T0"),
        ),
        Extension::Geometric(1.0) => periodic_rule(last_factor),
        Extension::Geometric(r) => (Verdict::NotCertified, format!("bounds grow geometrically (ratio {r})")),
    };
    Ok(AsymptoticCertificate {
        verdict,
        reason,
        cycles,
        offending_cycles: Vec::new(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentialCertificate {
    pub d: f64,
    pub beta: f64,
    pub gamma: f64,
    pub period: f64,
    pub variant: Variant,
}

/// `E_S(t) ≤ γ e^{-βt} E_S(0)` for schedules with constant interval lengths.
pub fn check_exponential(
    schedule: &ValidatedSchedule,
    constants: &DecayConstants,
    variant: Option<Variant>,
) -> Result<ExponentialCertificate, CertificateError> {
    let cycles = &schedule.schedule().cycles;
    let (t_star, t_tilde) = (cycles[0].off, cycles[0].on);
    let same = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs());
    if cycles.iter().any(|c| !same(c.off, t_star) || !same(c.on, t_tilde)) {
        return Err(CertificateError::NotPeriodicLengths);
    }
    let mode = schedule.mode();
    let tau = schedule.tau();
    if mode == FeedbackMode::DelayedFeedback && t_star < tau {
        return Err(CertificateError::OffShorterThanDelay { t_even: t_star, tau });
    }
    let c = observability_factor(constants, t_star)?;
    let variant = variant.unwrap_or_else(|| default_variant(mode, t_tilde, tau));

    let b_max = cycles
        .iter()
        .map(|cy| effective_bound(schedule, cy.bound))
        .fold(0.0, f64::max);
    if let Extension::Geometric(r) = schedule.extension() {
        if r > 1.0 {
            return Err(CertificateError::NoContraction { d: f64::INFINITY });
        }
    }
    let mut d = 0.0f64;
    for cy in cycles {
        d = d.max(cycle_factor(
            variant,
            c,
            effective_bound(schedule, cy.bound),
            t_tilde,
            tau,
        )?);
    }
    if !(d < 1.0 - TIE_TOLERANCE) {
        return Err(CertificateError::NoContraction { d });
    }
    let period = t_star + t_tilde;
    Ok(ExponentialCertificate {
        d,
        beta: -d.ln() / period,
        gamma: constants.c * (2.0 * b_max * t_tilde).exp() / d,
        period,
        variant,
    })
}

/// `[1, f_0, f_0 f_1, …]`.
pub fn running_products(factors: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(factors.len() + 1);
    let mut acc = 1.0;
    out.push(acc);
    for f in factors {
        acc *= f;
        out.push(acc);
    }
    out
}

/// Products of `window` consecutive factors, one per starting cycle.
pub fn windowed_products(factors: &[f64], window: usize) -> Vec<f64> {
    if window == 0 || factors.len() < window {
        return Vec::new();
    }
    factors.windows(window).map(|w| w.iter().product()).collect()
}

/// Piecewise-constant bound on `E_S(t) / E_S(0)` over `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopePiece {
    pub start: f64,
    pub end: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    /// `(t, U)` at `t = 0` and at every certified cycle end.
    pub breakpoints: Vec<(f64, f64)>,
    pub pieces: Vec<EnvelopePiece>,
    /// First cycle without a certified factor, if any.
    pub truncated_at: Option<usize>,
}

impl Envelope {
    /// `U_n` at the end of each certified cycle.
    pub fn cycle_end_values(&self) -> Vec<f64> {
        self.breakpoints.iter().skip(1).map(|p| p.1).collect()
    }

    /// Bound at time `t`, if covered.
    pub fn bound_at(&self, t: f64) -> Option<f64> {
        self.pieces.iter().find(|p| t >= p.start && t < p.end).map(|p| p.bound)
    }
}

/// Envelope from a cycle table. Off intervals carry the previous product
/// (energy does not grow without feedback); on intervals carry the product
/// through the current cycle, which bounds the whole on interval.
pub fn envelope_from_rows(rows: &[CycleRow]) -> Envelope {
    let mut breakpoints = vec![(0.0, 1.0)];
    let mut pieces = Vec::new();
    let mut prev = 1.0;
    let mut truncated_at = None;
    for r in rows {
        let Some(f) = r.factor else {
            truncated_at = Some(r.index);
            break;
        };
        let next = prev * f;
        let on_start = r.start + r.off;
        let end = on_start + r.on;
        pieces.push(EnvelopePiece {
            start: r.start,
            end: on_start,
            bound: prev,
        });
        if r.on > 0.0 {
            pieces.push(EnvelopePiece {
                start: on_start,
                end,
                bound: next,
            });
        }
        breakpoints.push((end, next));
        prev = next;
    }
    Envelope {
        breakpoints,
        pieces,
        truncated_at,
    }
}

pub fn decay_envelope(
    schedule: &ValidatedSchedule,
    constants: &DecayConstants,
    options: &CertifyOptions,
) -> Result<Envelope, CertificateError> {
    Ok(envelope_from_rows(&cycle_table(schedule, constants, options)?))
}

/// Everything known about one schedule under one set of constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub constants: DecayConstants,
    /// "calibrated-constants certificate" or "user-supplied constants".
    pub kind: String,
    pub asymptotic: AsymptoticCertificate,
    pub exponential: Option<ExponentialCertificate>,
    pub exponential_note: Option<String>,
    pub envelope: Envelope,
    pub window: usize,
    pub windowed_products: Vec<f64>,
}

pub fn certify(
    schedule: &ValidatedSchedule,
    constants: &DecayConstants,
    options: &CertifyOptions,
) -> Result<CertificateReport, CertificateError> {
    let asymptotic = check_asymptotic(schedule, constants, options)?;
    let (exponential, exponential_note) = match check_exponential(schedule, constants, options.variant) {
        Ok(e) => (Some(e), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let envelope = envelope_from_rows(&asymptotic.cycles);
    let factors: Vec<f64> = asymptotic.cycles.iter().map_while(|r| r.factor).collect();
    let kind = match constants.source {
        ConstantsSource::Calibrated => "calibrated-constants certificate",
        ConstantsSource::UserSupplied => "user-supplied constants",
    };
    Ok(CertificateReport {
        constants: *constants,
        kind: kind.to_string(),
        windowed_products: windowed_products(&factors, options.window),
        window: options.window,
        asymptotic,
        exponential,
        exponential_note,
        envelope,
    })
}
