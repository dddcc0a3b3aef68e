//! Spectra of the positive self-adjoint operator `A`.
//!
//! The simulator works in the eigenbasis of `A`, so an operator is just its
//! ascending list of eigenvalues.

use serde::{Deserialize, Serialize};

use super::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    /// Dirichlet Laplacian on `(0, L)`: `λ_k = (kπ/L)²`.
    Wave1d,
    /// Hinged beam on `(0, L)`: `λ_k = (kπ/L)⁴`.
    Petrovsky1d,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorSpec {
    pub eigenvalues: Vec<f64>,
    pub label: String,
}

impl OperatorSpec {
    pub fn custom(eigenvalues: Vec<f64>) -> Result<Self, ModelError> {
        let op = OperatorSpec {
            eigenvalues,
            label: "custom".into(),
        };
        op.validate()?;
        Ok(op)
    }

    pub fn modes(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.eigenvalues.is_empty() {
            return Err(ModelError::InvalidSpectrum("no eigenvalues".into()));
        }
        if !(self.eigenvalues[0] > 0.0) {
            return Err(ModelError::InvalidSpectrum(format!(
                "first eigenvalue {} is not positive",
                self.eigenvalues[0]
            )));
        }
        if let Some(w) = self
            .eigenvalues
            .windows(2)
            .find(|w| !(w[1] > w[0]) || !w[1].is_finite())
        {
            return Err(ModelError::InvalidSpectrum(format!(
                "eigenvalues must increase strictly ({} then {})",
                w[0], w[1]
            )));
        }
        Ok(())
    }
}

pub fn build_operator(kind: OperatorKind, modes: usize, length: f64) -> Result<OperatorSpec, ModelError> {
    if modes == 0 {
        return Err(ModelError::InvalidSpectrum("mode count must be at least 1".into()));
    }
    if !(length > 0.0) || !length.is_finite() {
        return Err(ModelError::InvalidSpectrum(format!(
            "domain length must be positive, got {length}"
        )));
    }
    let (power, label) = match kind {
        OperatorKind::Wave1d => (2, "wave-1d"),
        OperatorKind::Petrovsky1d => (4, "petrovsky-1d"),
    };
    let eigenvalues = (1..=modes)
        .map(|k| (k as f64 * std::f64::consts::PI / length).powi(power))
        .collect();
    Ok(OperatorSpec {
        eigenvalues,
        label: label.into(),
    })
}
