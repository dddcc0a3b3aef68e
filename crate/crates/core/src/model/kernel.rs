//! Fading-memory kernels.
//!
//! A kernel `μ(s)` weighs the displacement at lag `s` in the viscoelastic
//! restoring force. Admissible kernels are integrable, start at a positive
//! value `μ₀`, carry total mass `μ̃ < 1` and decay at least like `e^{-δs}`.

use serde::{Deserialize, Serialize};

use super::ModelError;

/// Default relative size of the kernel at the truncation horizon.
pub const DEFAULT_TAIL_TOL: f64 = 1e-10;

/// Relative tolerance of the discrete decay-rate check on tabulated kernels.
pub const DECAY_CHECK_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum KernelForm {
    /// `μ(s) = μ₀ e^{-δs}`.
    Exponential,
    /// Piecewise-linear interpolation of `(s, μ(s))` samples, starting at `s = 0`.
    Tabulated(Vec<(f64, f64)>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryKernel {
    pub form: KernelForm,
    /// Density at zero (1/time). Ignored for tabulated kernels, whose first
    /// sample defines it.
    pub mu0: f64,
    /// Decay rate (1/time).
    pub delta: f64,
    /// History truncation horizon; derived from the tail tolerance when absent.
    pub s_max: Option<f64>,
    pub tail_tol: f64,
}

impl MemoryKernel {
    pub fn exponential(mu0: f64, delta: f64) -> Self {
        MemoryKernel {
            form: KernelForm::Exponential,
            mu0,
            delta,
            s_max: None,
            tail_tol: DEFAULT_TAIL_TOL,
        }
    }

    pub fn tabulated(samples: Vec<(f64, f64)>, delta: f64) -> Self {
        let mu0 = samples.first().map(|p| p.1).unwrap_or(0.0);
        MemoryKernel {
            form: KernelForm::Tabulated(samples),
            mu0,
            delta,
            s_max: None,
            tail_tol: DEFAULT_TAIL_TOL,
        }
    }

    pub fn with_s_max(mut self, s_max: f64) -> Self {
        self.s_max = Some(s_max);
        self
    }

    pub fn with_tail_tol(mut self, tail_tol: f64) -> Self {
        self.tail_tol = tail_tol;
        self
    }
}

/// A kernel that passed every admissibility check, annotated with its mass.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidatedKernel {
    kernel: MemoryKernel,
    mu0: f64,
    total_mass: f64,
    s_max: f64,
}

/// Checks positivity, subunit mass, the decay bound and the tail size.
///
/// The mass is `μ₀/δ` in closed form for exponential kernels and a trapezoid
/// sum over the samples for tabulated ones.
pub fn validate_kernel(kernel: &MemoryKernel) -> Result<ValidatedKernel, ModelError> {
    if !(kernel.delta > 0.0) || !kernel.delta.is_finite() {
        return Err(ModelError::NonPositiveDelta(kernel.delta));
    }
    if !(kernel.tail_tol > 0.0) {
        return Err(ModelError::InvalidKernelTable(format!(
            "tail tolerance must be positive, got {}",
            kernel.tail_tol
        )));
    }
    match &kernel.form {
        KernelForm::Exponential => {
            let mu0 = kernel.mu0;
            if !(mu0 > 0.0) || !mu0.is_finite() {
                return Err(ModelError::NonPositiveMu0(mu0));
            }
            let total_mass = mu0 / kernel.delta;
            if total_mass >= 1.0 {
                return Err(ModelError::MassNotLessThanOne(total_mass));
            }
            let s_max = kernel.s_max.unwrap_or_else(|| -kernel.tail_tol.ln() / kernel.delta);
            if !(s_max > 0.0) {
                return Err(ModelError::InvalidKernelTable(format!(
                    "truncation horizon must be positive, got {s_max}"
                )));
            }
            let tail = (-kernel.delta * s_max).exp();
            // A hair of slack so the derived default horizon always passes.
            if tail > kernel.tail_tol * (1.0 + 1e-12) {
                return Err(ModelError::TailTooLarge {
                    value: mu0 * tail,
                    limit: kernel.tail_tol * mu0,
                });
            }
            Ok(ValidatedKernel {
                kernel: kernel.clone(),
                mu0,
                total_mass,
                s_max,
            })
        }
        KernelForm::Tabulated(samples) => validate_table(kernel, samples),
    }
}

fn validate_table(kernel: &MemoryKernel, samples: &[(f64, f64)]) -> Result<ValidatedKernel, ModelError> {
    if samples.len() < 2 {
        return Err(ModelError::InvalidKernelTable("need at least two samples".into()));
    }
    if samples[0].0 != 0.0 {
        return Err(ModelError::InvalidKernelTable("first sample must sit at s = 0".into()));
    }
    let mu0 = samples[0].1;
    if !(mu0 > 0.0) || !mu0.is_finite() {
        return Err(ModelError::NonPositiveMu0(mu0));
    }
    for w in samples.windows(2) {
        let ((s0, m0), (s1, m1)) = (w[0], w[1]);
        if !(s1 > s0) {
            return Err(ModelError::InvalidKernelTable(format!(
                "sample abscissae must increase strictly ({s0} then {s1})"
            )));
        }
        if m1 < 0.0 || !m1.is_finite() {
            return Err(ModelError::InvalidKernelTable(format!(
                "sample value {m1} at s = {s1} is negative or not finite"
            )));
        }
        // μ' ≤ -δμ integrates to μ(s1) ≤ e^{-δ(s1-s0)} μ(s0).
        let allowed = m0 * (-kernel.delta * (s1 - s0)).exp();
        if m1 > allowed * (1.0 + DECAY_CHECK_TOL) {
            return Err(ModelError::DecayViolated { at: s1 });
        }
    }
    let last_s = samples[samples.len() - 1].0;
    let s_max = match kernel.s_max {
        Some(s) if s > 0.0 && s <= last_s => s,
        Some(s) => {
            return Err(ModelError::InvalidKernelTable(format!(
                "truncation horizon {s} must lie in (0, {last_s}]"
            )))
        }
        None => last_s,
    };
    let tail = interpolate(samples, s_max);
    if tail > kernel.tail_tol * mu0 {
        return Err(ModelError::TailTooLarge {
            value: tail,
            limit: kernel.tail_tol * mu0,
        });
    }
    let total_mass: f64 = samples
        .windows(2)
        .map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0))
        .sum();
    if total_mass >= 1.0 {
        return Err(ModelError::MassNotLessThanOne(total_mass));
    }
    Ok(ValidatedKernel {
        kernel: kernel.clone(),
        mu0,
        total_mass,
        s_max,
    })
}

fn interpolate(samples: &[(f64, f64)], s: f64) -> f64 {
    let idx = samples.partition_point(|p| p.0 <= s);
    if idx == 0 {
        return samples[0].1;
    }
    if idx == samples.len() {
        return samples[samples.len() - 1].1;
    }
    let (s0, m0) = samples[idx - 1];
    let (s1, m1) = samples[idx];
    m0 + (m1 - m0) * (s - s0) / (s1 - s0)
}

impl ValidatedKernel {
    pub fn kernel(&self) -> &MemoryKernel {
        &self.kernel
    }

    pub fn mu0(&self) -> f64 {
        self.mu0
    }

    pub fn delta(&self) -> f64 {
        self.kernel.delta
    }

    /// Total mass `μ̃ = ∫₀^∞ μ`.
    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn s_max(&self) -> f64 {
        self.s_max
    }

    pub fn is_exponential(&self) -> bool {
        matches!(self.kernel.form, KernelForm::Exponential)
    }

    /// Density at lag `s`; zero past the truncation horizon.
    pub fn eval(&self, s: f64) -> Result<f64, ModelError> {
        if s < 0.0 || s.is_nan() {
            return Err(ModelError::NegativeArgument(s));
        }
        Ok(self.density(s))
    }

    pub(crate) fn density(&self, s: f64) -> f64 {
        if s > self.s_max {
            return 0.0;
        }
        match &self.kernel.form {
            KernelForm::Exponential => self.mu0 * (-self.kernel.delta * s).exp(),
            KernelForm::Tabulated(samples) => interpolate(samples, s),
        }
    }
}

/// Evaluates a validated kernel at `s ≥ 0`.
pub fn kernel_eval(kernel: &ValidatedKernel, s: f64) -> Result<f64, ModelError> {
    kernel.eval(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trapezoid(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let inner: f64 = (1..n).map(|i| f(a + i as f64 * h)).sum();
        h * (0.5 * f(a) + inner + 0.5 * f(b))
    }

    #[test]
    fn exponential_mass_matches_quadrature() {
        let k = validate_kernel(&MemoryKernel::exponential(0.2, 1.0).with_s_max(30.0)).unwrap();
        assert_eq!(k.total_mass(), 0.2);
        let quad = trapezoid(|s| 0.2 * (-s).exp(), 0.0, 30.0, 1_000_000);
        assert!((quad - k.total_mass()).abs() < 1e-10, "quad = {quad}");
    }

    #[test]
    fn heavy_kernel_is_rejected() {
        let err = validate_kernel(&MemoryKernel::exponential(1.0, 0.5)).unwrap_err();
        assert!(matches!(err, ModelError::MassNotLessThanOne(m) if m == 2.0));
        assert!(err.to_string().contains("assumption iii"));
    }

    #[test]
    fn eval_at_zero_one_and_past_horizon() {
        let k = validate_kernel(&MemoryKernel::exponential(0.2, 1.0).with_s_max(30.0)).unwrap();
        assert_eq!(kernel_eval(&k, 0.0).unwrap(), 0.2);
        assert!((kernel_eval(&k, 1.0).unwrap() - 0.073_575_888_234_288_46).abs() < 1e-15);
        assert_eq!(kernel_eval(&k, 30.5).unwrap(), 0.0);
        assert!(matches!(kernel_eval(&k, -1.0), Err(ModelError::NegativeArgument(_))));
    }

    #[test]
    fn default_horizon_meets_tail_tolerance() {
        let k = validate_kernel(&MemoryKernel::exponential(0.2, 2.0)).unwrap();
        assert!(k.density(k.s_max() - 1e-12) <= 1e-10 * 0.2 * (1.0 + 1e-9));
        assert!((k.s_max() - 10f64.ln() * 10.0 / 2.0).abs() < 1e-12);
    }

    #[test]
    fn short_horizon_is_rejected() {
        let err = validate_kernel(&MemoryKernel::exponential(0.2, 1.0).with_s_max(5.0)).unwrap_err();
        assert!(matches!(err, ModelError::TailTooLarge { .. }));
    }

    #[test]
    fn non_positive_mu0_is_rejected() {
        let err = validate_kernel(&MemoryKernel::exponential(0.0, 1.0)).unwrap_err();
        assert!(matches!(err, ModelError::NonPositiveMu0(_)));
    }

    #[test]
    fn tabulated_kernel_checks_decay() {
        let good: Vec<(f64, f64)> = (0..=300)
            .map(|i| {
                let s = i as f64 * 0.1;
                (s, 0.2 * (-s).exp())
            })
            .collect();
        let k = validate_kernel(&MemoryKernel::tabulated(good.clone(), 1.0)).unwrap();
        assert!((k.total_mass() - 0.2).abs() < 1e-3);
        assert!((k.eval(0.05).unwrap() - 0.5 * (0.2 + 0.2 * (-0.1f64).exp())).abs() < 1e-15);

        // Flat stretch violates μ' ≤ -δμ.
        let mut bad = good;
        bad[10].1 = bad[9].1;
        let err = validate_kernel(&MemoryKernel::tabulated(bad, 1.0)).unwrap_err();
        assert!(matches!(err, ModelError::DecayViolated { .. }));
    }

    #[test]
    fn tabulated_kernel_rejects_negative_samples() {
        let table = vec![(0.0, 0.1), (1.0, -0.01), (2.0, 0.0)];
        assert!(matches!(
            validate_kernel(&MemoryKernel::tabulated(table, 0.5)),
            Err(ModelError::InvalidKernelTable(_))
        ));
    }
}
