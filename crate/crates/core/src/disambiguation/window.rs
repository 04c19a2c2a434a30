use std::collections::VecDeque;

use num_complex::Complex64;

use crate::dsp::wrap_angle;

/// Number of phase samples the crossing validator looks back over.
pub const PHASE_WINDOW_LEN: usize = 200;

/// Ring buffer of recent phases, kept as unit phasors, with circular statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseWindow {
    buf: VecDeque<Complex64>,
    capacity: usize,
    dt_s: f64,
}

impl PhaseWindow {
    pub fn new(capacity: usize, dt_s: f64) -> Self {
        assert!(capacity >= 2, "phase window needs at least two samples");
        Self {
            buf: VecDeque::with_capacity(capacity),
            capacity,
            dt_s,
        }
    }

    pub fn push(&mut self, phase_rad: f64) {
        if self.buf.len() == self.capacity {
            self.buf.pop_front();
        }
        self.buf.push_back(Complex64::from_polar(1.0, phase_rad));
    }

    pub fn clear(&mut self) {
        self.buf.clear();
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.buf.len() == self.capacity
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    fn resultant<'a>(phasors: impl Iterator<Item = &'a Complex64>) -> (Complex64, usize) {
        phasors.fold((Complex64::new(0.0, 0.0), 0), |(acc, n), p| (acc + p, n + 1))
    }

    /// Direction of the mean unit phasor, or `None` when empty.
    pub fn circular_mean(&self) -> Option<f64> {
        let (sum, n) = Self::resultant(self.buf.iter());
        (n > 0).then(|| sum.arg())
    }

    /// `sqrt(-2 ln R)` with `R` the mean resultant length; infinite when the phasors cancel.
    pub fn circular_std(&self) -> f64 {
        let (sum, n) = Self::resultant(self.buf.iter());
        if n == 0 {
            return f64::INFINITY;
        }
        let r = (sum.norm() / n as f64).min(1.0);
        if r <= 0.0 {
            f64::INFINITY
        } else {
            (-2.0 * r.ln()).sqrt()
        }
    }

    /// Drift in rad/s: circular mean of the newer half minus the older half,
    /// over the time separating the two halves.
    pub fn rate(&self) -> f64 {
        let n = self.buf.len();
        if n < 2 {
            return 0.0;
        }
        let half = n / 2;
        let (old, _) = Self::resultant(self.buf.iter().take(half));
        let (new, _) = Self::resultant(self.buf.iter().skip(n - half));
        wrap_angle(new.arg() - old.arg()) / ((n - half) as f64 * self.dt_s)
    }
}
