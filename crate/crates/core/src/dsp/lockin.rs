//! Digital lock-in amplification of the three beacon tones.
//!
//! Each axis of the input is mixed with `2 sin(wt)` and `2 cos(wt)` and the
//! products are low-passed, giving `a cos(phi)` and `a sin(phi)` for an input
//! `a sin(wt + phi)`. Amplitude and phase follow from the I/Q pair.

use std::f64::consts::PI;

use nalgebra::Vector3;
use num_complex::Complex64;

use super::filter::{design_filter, FilterSpec, IirFilter};
use crate::error::{Error, Result};
use crate::field::Vec3;

/// Amplitude and phase of one coil's tone on each axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoilLock {
    /// Gauss, non-negative.
    pub amp: Vec3,
    /// Radians in (-pi, pi].
    pub phase: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LockInChannel {
    ref_freq_hz: f64,
    in_phase: [IirFilter; 3],
    quadrature: [IirFilter; 3],
    /// Known complex gain applied upstream at the reference frequency; divided out.
    upstream_gain: Complex64,
}

impl LockInChannel {
    pub fn new(ref_freq_hz: f64, lowpass: &FilterSpec) -> Result<Self> {
        if !(ref_freq_hz > 0.0 && ref_freq_hz < lowpass.fs_hz / 2.0) {
            return Err(Error::Config(format!(
                "reference {ref_freq_hz} Hz must lie in (0, {}) Hz",
                lowpass.fs_hz / 2.0
            )));
        }
        let lpf = design_filter(lowpass)?;
        Ok(Self {
            ref_freq_hz,
            in_phase: [lpf.clone(), lpf.clone(), lpf.clone()],
            quadrature: [lpf.clone(), lpf.clone(), lpf],
            upstream_gain: Complex64::new(1.0, 0.0),
        })
    }

    /// Compensate a fixed upstream response (e.g. the band-pass) at the reference frequency.
    pub fn with_upstream_gain(mut self, gain: Complex64) -> Self {
        self.upstream_gain = gain;
        self
    }

    pub fn ref_freq_hz(&self) -> f64 {
        self.ref_freq_hz
    }

    pub fn reset(&mut self) {
        self.in_phase.iter_mut().for_each(IirFilter::reset);
        self.quadrature.iter_mut().for_each(IirFilter::reset);
    }

    /// One-sample advance; `t` is seconds since the reference origin.
    pub fn step(&mut self, sample: &Vec3, t: f64) -> CoilLock {
        let (s, c) = (2.0 * PI * self.ref_freq_hz * t).sin_cos();
        let mut amp = Vector3::zeros();
        let mut phase = Vector3::zeros();
        for axis in 0..3 {
            let i = self.in_phase[axis].step(sample[axis] * 2.0 * s);
            let q = self.quadrature[axis].step(sample[axis] * 2.0 * c);
            let z = Complex64::new(i, q) / self.upstream_gain;
            amp[axis] = z.norm();
            phase[axis] = z.im.atan2(z.re);
        }
        CoilLock { amp, phase }
    }
}

/// Per-coil, per-axis lock-in result for one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LiaOutput {
    pub t: f64,
    pub amp: [Vec3; 3],
    pub phase: [Vec3; 3],
    /// False during the warm-up period after a reset.
    pub settled: bool,
}

impl LiaOutput {
    pub fn max_amplitude(&self) -> f64 {
        self.amp.iter().map(|a| a.max()).fold(0.0, f64::max)
    }
}

/// Three lock-in channels, one per beacon frequency, with a warm-up flag.
#[derive(Debug, Clone, PartialEq)]
pub struct LockInBank {
    channels: [LockInChannel; 3],
    settle_samples: u64,
    seen: u64,
}

impl LockInBank {
    pub fn new(channels: [LockInChannel; 3], fs_hz: f64, settle_s: f64) -> Self {
        Self {
            channels,
            settle_samples: (settle_s * fs_hz).round().max(0.0) as u64,
            seen: 0,
        }
    }

    pub fn channels(&self) -> &[LockInChannel; 3] {
        &self.channels
    }

    pub fn reset(&mut self) {
        self.channels.iter_mut().for_each(LockInChannel::reset);
        self.seen = 0;
    }

    pub fn step(&mut self, sample: &Vec3, t: f64) -> LiaOutput {
        self.seen += 1;
        let locks = [0, 1, 2].map(|i| self.channels[i].step(sample, t));
        LiaOutput {
            t,
            amp: locks.map(|l| l.amp),
            phase: locks.map(|l| l.phase),
            settled: self.seen > self.settle_samples,
        }
    }
}

/// Wrap an angle to (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}
