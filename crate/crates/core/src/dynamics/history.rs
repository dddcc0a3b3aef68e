//! Discretized Dafermos history.
//!
//! The relative history `η^t(s) = u(t) - u(t - s)` obeys `η_t = -η_s + u_t`
//! with `η(0) = 0`. Writing `η_j = u - U_j` turns this into pure transport of
//! the lagged displacements `U_j ≈ u(t - s_j)` with inflow `U_0 = u(t)`, so
//! each mode stores `U` on the lag grid and the source term drops out.
//!
//! First-order upwind transport with Courant number `c = dt/Δs ≤ 1` is a
//! contraction in any norm with non-increasing weights. At `c = 1` the update
//! is an exact shift and the lines are kept as rings.
//!
//! Two weight sets live on the grid. Energies use the trapezoid weights
//! `w_j μ(s_j)`. The memory force is needed at the half step, where the
//! transported sample `j` sits at lag `s_j - dt/2`, so it uses `w_j μ(s_j - dt/2)`.

use serde::Serialize;

use crate::model::ValidatedKernel;

/// Uniform lag grid `0 = s_0 < … < s_{J-1}` with trapezoid weights `w_j μ(s_j)`.
#[derive(Debug, Clone)]
pub struct LagGrid {
    nodes: usize,
    spacing: f64,
    courant: f64,
    weights: Vec<f64>,
    force_weights: Vec<f64>,
    interior_mass: f64,
    force_mass: f64,
}

impl LagGrid {
    pub fn new(kernel: &ValidatedKernel, nodes: usize, spacing: f64, dt: f64) -> Self {
        assert!(nodes >= 2);
        let width = |j: usize| {
            if j == 0 || j == nodes - 1 {
                0.5 * spacing
            } else {
                spacing
            }
        };
        let weights: Vec<f64> = (0..nodes)
            .map(|j| width(j) * kernel.density(j as f64 * spacing))
            .collect();
        let force_weights: Vec<f64> = (0..nodes)
            .map(|j| {
                if j == 0 {
                    0.0
                } else {
                    width(j) * kernel.density(j as f64 * spacing - 0.5 * dt)
                }
            })
            .collect();
        let interior_mass = weights[1..].iter().sum();
        let force_mass = force_weights[1..].iter().sum();
        let courant = dt / spacing;
        // Snap to the exact shift when the spacing is the time step.
        let courant = if (courant - 1.0).abs() < 1e-12 { 1.0 } else { courant };
        LagGrid {
            nodes,
            spacing,
            courant,
            weights,
            force_weights,
            interior_mass,
            force_mass,
        }
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn courant(&self) -> f64 {
        self.courant
    }

    pub fn is_exact_shift(&self) -> bool {
        self.courant == 1.0
    }

    pub fn lag(&self, j: usize) -> f64 {
        j as f64 * self.spacing
    }

    /// Quadrature weights `w_j μ(s_j)`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weights `w_j μ(s_j - dt/2)` for the half-step memory force; zero at `j = 0`.
    pub fn force_weights(&self) -> &[f64] {
        &self.force_weights
    }

    /// `Σ_{j≥1} w_j μ(s_j)`, the weight seen by a uniform relative history.
    pub fn interior_mass(&self) -> f64 {
        self.interior_mass
    }

    /// `Σ_{j≥1} w_j μ(s_j - dt/2)`.
    pub fn force_mass(&self) -> f64 {
        self.force_mass
    }

    /// `∫ μ f` over the grid by the trapezoid rule.
    pub fn integrate(&self, f: impl Fn(usize) -> f64) -> f64 {
        self.weights.iter().enumerate().map(|(j, w)| w * f(j)).sum()
    }
}

/// Lagged displacements of one mode on the lag grid.
#[derive(Debug, Clone, Serialize)]
pub struct HistoryLine {
    /// Exact-shift lines hold `2J` values (each written twice) so the current
    /// window `data[head..head + J]` is always contiguous.
    data: Vec<f64>,
    head: usize,
    nodes: usize,
    ring: bool,
}

/// `μ`-weighted moments of a relative history: `force = Σ ω^F_j η_j`,
/// `first = Σ ω_j η_j`, `second = Σ ω_j η_j²`, all over `j ≥ 1`.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Moments {
    pub force: f64,
    pub first: f64,
    pub second: f64,
}

impl HistoryLine {
    pub fn new(grid: &LagGrid, lagged: impl Fn(usize) -> f64) -> Self {
        let nodes = grid.nodes();
        let ring = grid.is_exact_shift();
        let mut data = Vec::with_capacity(if ring { 2 * nodes } else { nodes });
        data.extend((0..nodes).map(&lagged));
        if ring {
            data.extend_from_within(..);
        }
        HistoryLine {
            data,
            head: 0,
            nodes,
            ring,
        }
    }

    /// `U_j ≈ u(t - s_j)`, newest first.
    pub fn window(&self) -> &[f64] {
        &self.data[self.head..self.head + self.nodes]
    }

    /// `η_j = u - U_j` for the given current displacement.
    pub fn eta(&self, u: f64) -> Vec<f64> {
        self.window().iter().map(|uj| u - uj).collect()
    }

    /// Transports the line by one time step and returns the moments of
    /// `S η` at displacement `u`. The inflow node is left stale until
    /// [`set_inflow`](Self::set_inflow).
    pub(crate) fn transport(&mut self, grid: &LagGrid, u: f64) -> Moments {
        let w = grid.weights();
        if self.ring {
            // After the shift, node j holds the old node j - 1.
            let old = &self.data[self.head..self.head + self.nodes - 1];
            weighted_moments(&grid.force_weights()[1..], &w[1..], old, u)
        } else {
            let c = grid.courant();
            let line = &mut self.data[..self.nodes];
            for j in (1..line.len()).rev() {
                line[j] = (1.0 - c) * line[j] + c * line[j - 1];
            }
            weighted_moments(&grid.force_weights()[1..], &w[1..], &line[1..], u)
        }
    }

    /// Writes the new displacement into the inflow node.
    pub(crate) fn set_inflow(&mut self, u: f64) {
        if self.ring {
            self.head = (self.head + self.nodes - 1) % self.nodes;
            self.data[self.head] = u;
            self.data[self.head + self.nodes] = u;
        } else {
            self.data[0] = u;
        }
    }

    /// Moments of the current line at displacement `u`.
    pub(crate) fn moments(&self, grid: &LagGrid, u: f64) -> Moments {
        weighted_moments(&grid.force_weights()[1..], &grid.weights()[1..], &self.window()[1..], u)
    }
}

/// Moments of `x_j ↦ u - x_j` with four independent accumulators per sum,
/// so the loop vectorizes while the summation order stays fixed.
fn weighted_moments(force_weights: &[f64], weights: &[f64], lagged: &[f64], u: f64) -> Moments {
    debug_assert_eq!(weights.len(), lagged.len());
    debug_assert_eq!(force_weights.len(), lagged.len());
    let mut f = [0.0f64; 4];
    let mut g = [0.0f64; 4];
    let mut m = [0.0f64; 4];
    let fc = force_weights.chunks_exact(4);
    let wc = weights.chunks_exact(4);
    let lc = lagged.chunks_exact(4);
    let (fr, wr, lr) = (fc.remainder(), wc.remainder(), lc.remainder());
    for ((fq, wq), lq) in fc.zip(wc).zip(lc) {
        for i in 0..4 {
            let x = u - lq[i];
            let wx = wq[i] * x;
            f[i] += fq[i] * x;
            g[i] += wx;
            m[i] += wx * x;
        }
    }
    let mut out = Moments {
        force: (f[0] + f[1]) + (f[2] + f[3]),
        first: (g[0] + g[1]) + (g[2] + g[3]),
        second: (m[0] + m[1]) + (m[2] + m[3]),
    };
    for ((fw, w), l) in fr.iter().zip(wr).zip(lr) {
        let x = u - l;
        out.force += fw * x;
        out.first += w * x;
        out.second += w * x * x;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_kernel, MemoryKernel};

    fn kernel() -> ValidatedKernel {
        validate_kernel(&MemoryKernel::exponential(0.2, 1.0)).unwrap()
    }

    #[test]
    fn ring_shift_is_exact() {
        let k = kernel();
        let grid = LagGrid::new(&k, 6, 0.1, 0.1);
        assert!(grid.is_exact_shift());
        let mut line = HistoryLine::new(&grid, |j| -(j as f64));
        for step in 1..=20 {
            line.transport(&grid, 0.0);
            line.set_inflow(step as f64);
            let want: Vec<f64> = (0..6).map(|j| step as f64 - j as f64).collect();
            assert_eq!(line.window(), &want[..]);
        }
    }

    #[test]
    fn upwind_is_a_weighted_contraction() {
        let k = kernel();
        let grid = LagGrid::new(&k, 50, 0.2, 0.05);
        assert!(!grid.is_exact_shift());
        let mut line = HistoryLine::new(&grid, |j| (j as f64 * 0.7).sin());
        // Consistent state: the inflow node holds the current displacement.
        let u = line.window()[0];
        let before = line.moments(&grid, u).second;
        let after = line.transport(&grid, u).second;
        assert!(after <= before, "{after} > {before}");
    }

    #[test]
    fn moments_match_direct_sums() {
        let k = kernel();
        let grid = LagGrid::new(&k, 37, 0.05, 0.05);
        let line = HistoryLine::new(&grid, |j| (j as f64).cos());
        let u = 0.4;
        let eta = line.eta(u);
        let direct_first: f64 = grid.weights().iter().zip(&eta).skip(1).map(|(w, e)| w * e).sum();
        let direct_second: f64 = grid.weights().iter().zip(&eta).skip(1).map(|(w, e)| w * e * e).sum();
        let direct_force: f64 = grid.force_weights().iter().zip(&eta).map(|(w, e)| w * e).sum();
        let m = line.moments(&grid, u);
        assert!((m.force - direct_force).abs() < 1e-14);
        assert!((m.first - direct_first).abs() < 1e-14);
        assert!((m.second - direct_second).abs() < 1e-14);
        assert_eq!(eta[0], u - 1.0);
    }
}
