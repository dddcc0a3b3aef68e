use serde::Serialize;

use super::DynamicsError;

/// Ring buffer of the last `m + 1` velocity vectors, one per time step,
/// spanning `[t - τ, t]` with `τ = m·dt`.
///
/// This is the exact characteristic solution of the delay transport
/// `τ z_t + z_ρ = 0`: the delayed velocity is read back, never interpolated.
#[derive(Debug, Clone, Serialize)]
pub struct DelayBuffer {
    modes: usize,
    delay_steps: usize,
    dt: f64,
    data: Vec<f64>,
    /// Slot of the oldest entry.
    oldest: usize,
    len: usize,
    /// Step index of the newest entry.
    newest_step: i64,
}

impl DelayBuffer {
    /// Empty buffer whose first pushed entry will carry step index `first_step`.
    pub fn new(modes: usize, delay_steps: usize, dt: f64, first_step: i64) -> Self {
        DelayBuffer {
            modes,
            delay_steps,
            dt,
            data: vec![0.0; (delay_steps + 1) * modes],
            oldest: 0,
            len: 0,
            newest_step: first_step - 1,
        }
    }

    pub fn capacity(&self) -> usize {
        self.delay_steps + 1
    }

    pub fn delay_steps(&self) -> usize {
        self.delay_steps
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn is_full(&self) -> bool {
        self.len == self.capacity()
    }

    /// Appends the velocity of the next step, dropping the oldest entry when full.
    pub fn push(&mut self, v: &[f64]) {
        debug_assert_eq!(v.len(), self.modes);
        let cap = self.capacity();
        let slot = if self.len < cap {
            let s = (self.oldest + self.len) % cap;
            self.len += 1;
            s
        } else {
            let s = self.oldest;
            self.oldest = (self.oldest + 1) % cap;
            s
        };
        self.data[slot * self.modes..(slot + 1) * self.modes].copy_from_slice(v);
        self.newest_step += 1;
    }

    /// Entry `i` counted from the oldest (`0`) to the newest (`len - 1`).
    pub fn entry(&self, i: usize) -> &[f64] {
        assert!(i < self.len, "delay buffer index {i} out of range");
        let slot = (self.oldest + i) % self.capacity();
        &self.data[slot * self.modes..(slot + 1) * self.modes]
    }

    /// Time stamp of entry `i`.
    pub fn time_of(&self, i: usize) -> f64 {
        let step = self.newest_step - (self.len - 1 - i) as i64;
        step as f64 * self.dt
    }

    pub fn newest(&self) -> Option<&[f64]> {
        (self.len > 0).then(|| self.entry(self.len - 1))
    }

    /// `u_t(t - τ)` at the time of the newest entry.
    pub fn delayed_velocity(&self) -> Result<&[f64], DynamicsError> {
        if !self.is_full() {
            return Err(DynamicsError::BufferUnderfilled {
                have: self.len,
                need: self.capacity(),
            });
        }
        Ok(self.entry(0))
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, &[f64])> + '_ {
        (0..self.len).map(move |i| (self.time_of(i), self.entry(i)))
    }
}

/// Reads `u_t(t - τ)` from the state's delay line.
pub fn delayed_velocity(state: &super::ModalState) -> Result<&[f64], DynamicsError> {
    state.delay_buffer().delayed_velocity()
}
