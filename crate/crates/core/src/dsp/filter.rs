//! Butterworth IIR filters as cascaded second-order sections.
//!
//! The analog prototype is discretized with the bilinear transform after
//! pre-warping the corner frequencies, so corners land exactly where asked.
//! A band-pass of order `N` uses an `N`-pole prototype and has `2N` poles.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FilterKind {
    BandPass { low_hz: f64, high_hz: f64 },
    LowPass { cutoff_hz: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FilterSpec {
    pub kind: FilterKind,
    pub order: usize,
    pub fs_hz: f64,
}

impl FilterSpec {
    pub fn band_pass(low_hz: f64, high_hz: f64, order: usize, fs_hz: f64) -> Self {
        Self {
            kind: FilterKind::BandPass { low_hz, high_hz },
            order,
            fs_hz,
        }
    }

    pub fn low_pass(cutoff_hz: f64, order: usize, fs_hz: f64) -> Self {
        Self {
            kind: FilterKind::LowPass { cutoff_hz },
            order,
            fs_hz,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fs_hz > 0.0 && self.fs_hz.is_finite()) {
            return Err(Error::Config(format!("sample rate must be > 0, got {}", self.fs_hz)));
        }
        if self.order == 0 {
            return Err(Error::Config("filter order must be >= 1".into()));
        }
        let nyquist = self.fs_hz / 2.0;
        let corner_ok = |f: f64| f > 0.0 && f < nyquist;
        match self.kind {
            FilterKind::BandPass { low_hz, high_hz } => {
                if !(corner_ok(low_hz) && corner_ok(high_hz)) {
                    return Err(Error::Config(format!(
                        "band-pass corners {low_hz}..{high_hz} Hz must lie in (0, {nyquist}) Hz"
                    )));
                }
                if low_hz >= high_hz {
                    return Err(Error::Config(format!(
                        "band-pass low corner {low_hz} Hz must be below high corner {high_hz} Hz"
                    )));
                }
            }
            FilterKind::LowPass { cutoff_hz } => {
                if !corner_ok(cutoff_hz) {
                    return Err(Error::Config(format!(
                        "low-pass cutoff {cutoff_hz} Hz must lie in (0, {nyquist}) Hz"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Direct-form II transposed biquad. `a` holds `a1, a2` with `a0 = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
    state: [f64; 2],
}

impl Biquad {
    fn new(b: [f64; 3], a: [f64; 2]) -> Self {
        Self { b, a, state: [0.0; 2] }
    }

    #[inline]
    pub fn step(&mut self, x: f64) -> f64 {
        let y = self.b[0] * x + self.state[0];
        self.state[0] = self.b[1] * x - self.a[0] * y + self.state[1];
        self.state[1] = self.b[2] * x - self.a[1] * y;
        y
    }

    /// Transfer function evaluated at `z^-1`.
    pub fn response_at(&self, zinv: Complex64) -> Complex64 {
        let num = self.b[0] + zinv * (self.b[1] + zinv * self.b[2]);
        let den = 1.0 + zinv * (self.a[0] + zinv * self.a[1]);
        num / den
    }

    pub fn poles(&self) -> [Complex64; 2] {
        // z^2 + a1 z + a2 = 0
        let (a1, a2) = (self.a[0], self.a[1]);
        let disc = Complex64::new(a1 * a1 - 4.0 * a2, 0.0).sqrt();
        [(-a1 + disc) / 2.0, (-a1 - disc) / 2.0]
    }

    fn scale_gain(&mut self, k: f64) {
        for b in &mut self.b {
            *b *= k;
        }
    }
}

/// A cascade of biquads with its own delay lines. One instance per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct IirFilter {
    sections: Vec<Biquad>,
    fs_hz: f64,
}

impl IirFilter {
    #[inline]
    pub fn step(&mut self, x: f64) -> f64 {
        self.sections.iter_mut().fold(x, |acc, s| s.step(acc))
    }

    pub fn reset(&mut self) {
        for s in &mut self.sections {
            s.state = [0.0; 2];
        }
    }

    pub fn sections(&self) -> &[Biquad] {
        &self.sections
    }

    pub fn fs_hz(&self) -> f64 {
        self.fs_hz
    }

    /// Complex frequency response at `freq_hz`.
    pub fn response(&self, freq_hz: f64) -> Complex64 {
        let zinv = Complex64::from_polar(1.0, -2.0 * PI * freq_hz / self.fs_hz);
        self.sections
            .iter()
            .map(|s| s.response_at(zinv))
            .product()
    }

    pub fn gain(&self, freq_hz: f64) -> f64 {
        self.response(freq_hz).norm()
    }

    pub fn poles(&self) -> Vec<Complex64> {
        self.sections.iter().flat_map(|s| s.poles()).collect()
    }

    pub fn is_stable(&self) -> bool {
        self.poles().iter().all(|p| p.norm() < 1.0)
    }
}

/// Analog Butterworth prototype poles with non-negative imaginary part.
fn prototype_poles(order: usize) -> Vec<Complex64> {
    (0..order)
        .map(|k| {
            let theta = PI * (2 * k + order + 1) as f64 / (2 * order) as f64;
            Complex64::from_polar(1.0, theta)
        })
        .filter(|p| p.im >= -1e-12)
        .map(|p| if p.im.abs() < 1e-12 { Complex64::new(p.re, 0.0) } else { p })
        .collect()
}

fn bilinear(s: Complex64) -> Complex64 {
    (1.0 + s) / (1.0 - s)
}

fn pole_pair_denominator(z: Complex64) -> [f64; 2] {
    [-2.0 * z.re, z.norm_sqr()]
}

fn normalized_bandpass_section(a: [f64; 2], zinv_center: Complex64) -> Biquad {
    let mut bq = Biquad::new([1.0, 0.0, -1.0], a);
    let g = bq.response_at(zinv_center).norm();
    bq.scale_gain(1.0 / g);
    bq
}

pub fn design_filter(spec: &FilterSpec) -> Result<IirFilter> {
    spec.validate()?;
    let warp = |f: f64| (PI * f / spec.fs_hz).tan();
    let mut sections = Vec::new();
    match spec.kind {
        FilterKind::LowPass { cutoff_hz } => {
            let wc = warp(cutoff_hz);
            for p in prototype_poles(spec.order) {
                let z = bilinear(p * wc);
                let mut bq = if p.im == 0.0 {
                    // real pole: first-order section
                    Biquad::new([1.0, 1.0, 0.0], [-z.re, 0.0])
                } else {
                    Biquad::new([1.0, 2.0, 1.0], pole_pair_denominator(z))
                };
                let dc = bq.response_at(Complex64::new(1.0, 0.0)).re;
                bq.scale_gain(1.0 / dc);
                sections.push(bq);
            }
        }
        FilterKind::BandPass { low_hz, high_hz } => {
            let (w1, w2) = (warp(low_hz), warp(high_hz));
            let w0_sq = w1 * w2;
            let bw = w2 - w1;
            let center_hz = w0_sq.sqrt().atan() * spec.fs_hz / PI;
            let zinv_center = Complex64::from_polar(1.0, -2.0 * PI * center_hz / spec.fs_hz);
            for p in prototype_poles(spec.order) {
                // s^2 - p B s + w0^2 = 0
                let pb = p * bw;
                let disc = (pb * pb - 4.0 * w0_sq).sqrt();
                let roots = [(pb + disc) / 2.0, (pb - disc) / 2.0];
                if p.im == 0.0 {
                    // both roots form one section (a conjugate pair, or two real poles)
                    let (z1, z2) = (bilinear(roots[0]), bilinear(roots[1]));
                    let a = [-(z1 + z2).re, (z1 * z2).re];
                    sections.push(normalized_bandpass_section(a, zinv_center));
                } else {
                    // the conjugates of these two come from the mirrored prototype pole
                    for s in roots {
                        let a = pole_pair_denominator(bilinear(s));
                        sections.push(normalized_bandpass_section(a, zinv_center));
                    }
                }
            }
        }
    }
    let filter = IirFilter {
        sections,
        fs_hz: spec.fs_hz,
    };
    if !filter.is_stable() {
        return Err(Error::Config(format!("designed filter {spec:?} is unstable")));
    }
    Ok(filter)
}
