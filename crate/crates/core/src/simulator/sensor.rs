use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Attitude, Vec3};

/// Tri-axial magnetometer characteristics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensorSpec {
    pub fs_hz: f64,
    pub resolution_gauss: f64,
    pub full_scale_gauss: f64,
    pub noise_std_gauss: f64,
    pub noise: bool,
    pub quantize: bool,
}

impl Default for SensorSpec {
    fn default() -> Self {
        Self {
            fs_hz: 200.0,
            resolution_gauss: 0.0015,
            full_scale_gauss: 2.5,
            noise_std_gauss: 0.002,
            noise: true,
            quantize: true,
        }
    }
}

impl SensorSpec {
    /// Noise-free, unquantized sensor with the default rate and range.
    pub fn ideal() -> Self {
        Self {
            noise: false,
            quantize: false,
            ..Self::default()
        }
    }

    pub fn validate(&self, max_beacon_freq_hz: f64) -> Result<()> {
        if !(self.fs_hz > 2.0 * max_beacon_freq_hz && self.fs_hz.is_finite()) {
            return Err(Error::Config(format!(
                "sample rate {} Hz must exceed twice the highest beacon frequency {} Hz",
                self.fs_hz, max_beacon_freq_hz
            )));
        }
        if !(self.resolution_gauss > 0.0) {
            return Err(Error::Config("sensor resolution must be > 0".into()));
        }
        if !(self.full_scale_gauss > 0.0) {
            return Err(Error::Config("sensor full scale must be > 0".into()));
        }
        if !(self.noise_std_gauss >= 0.0 && self.noise_std_gauss.is_finite()) {
            return Err(Error::Config("noise std must be >= 0".into()));
        }
        Ok(())
    }

    /// Saturate to full scale, then round to the nearest resolution step.
    pub fn digitize(&self, field: &Vec3) -> Vec3 {
        field.map(|v| {
            let v = v.clamp(-self.full_scale_gauss, self.full_scale_gauss);
            if self.quantize {
                let q = (v / self.resolution_gauss).round() * self.resolution_gauss;
                q.clamp(-self.full_scale_gauss, self.full_scale_gauss)
            } else {
                v
            }
        })
    }
}

/// Model errors unknown to the solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Perturbation {
    pub misalignment_enabled: bool,
    /// Fixed rotation between the true and the reported sensor axes.
    pub misalignment: Attitude,
    pub moment_error_enabled: bool,
    /// The solver's moments are `(1 + frac)` times the true ones.
    pub moment_error_frac: f64,
}

impl Default for Perturbation {
    fn default() -> Self {
        Self {
            misalignment_enabled: false,
            misalignment: Attitude::from_degrees(5.0, 5.0, 5.0),
            moment_error_enabled: false,
            moment_error_frac: 0.10,
        }
    }
}

impl Perturbation {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn moment_error() -> Self {
        Self {
            moment_error_enabled: true,
            ..Self::default()
        }
    }

    pub fn misalignment() -> Self {
        Self {
            misalignment_enabled: true,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.moment_error_frac >= 0.0 && self.moment_error_frac.is_finite()) {
            return Err(Error::Config(format!(
                "moment error fraction must be >= 0, got {}",
                self.moment_error_frac
            )));
        }
        if !self.misalignment.is_finite() {
            return Err(Error::Config("misalignment angles must be finite".into()));
        }
        Ok(())
    }

    /// Scale the solver applies to every coil moment.
    pub fn solver_moment_scale(&self) -> f64 {
        if self.moment_error_enabled {
            1.0 + self.moment_error_frac
        } else {
            1.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digitize_clamps_and_rounds() {
        let s = SensorSpec::default();
        let out = s.digitize(&Vec3::new(3.0, 0.00226, -0.00074));
        assert!(out.x <= 2.5 && out.x > 2.498);
        assert!((out.y - 0.0030).abs() < 1e-15);
        assert!(out.z.abs() < 1e-15);
        let raw = SensorSpec { quantize: false, ..s }.digitize(&Vec3::new(-4.0, 0.00226, 0.0));
        assert_eq!(raw, Vec3::new(-2.5, 0.00226, 0.0));
    }

    #[test]
    fn undersampling_rejected() {
        let s = SensorSpec {
            fs_hz: 40.0,
            ..SensorSpec::default()
        };
        assert!(s.validate(25.0).is_err());
        assert!(SensorSpec::default().validate(25.0).is_ok());
    }

    #[test]
    fn moment_scale() {
        assert_eq!(Perturbation::none().solver_moment_scale(), 1.0);
        assert!((Perturbation::moment_error().solver_moment_scale() - 1.1).abs() < 1e-15);
    }
}
