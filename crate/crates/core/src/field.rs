//! Forward magnetic model of the three-coil beacon.
//!
//! Every coil is treated as a point dipole at the beacon center. Fields are
//! computed in SI and reported in Gauss. Positions are the sensor relative to
//! the beacon center, expressed in the beacon frame.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type RotationMatrix = Matrix3<f64>;
/// Magnetic flux density in Gauss.
pub type FieldVector = Vector3<f64>;

/// Permeability of free space (kg m s^-2 A^-2).
pub const MU0: f64 = 4.0 * PI * 1e-7;
pub const TESLA_TO_GAUSS: f64 = 1e4;

/// Euler angles of a frame. Roll is about x, pitch about y, yaw about z.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Attitude {
    #[serde(default)]
    pub roll_rad: f64,
    #[serde(default)]
    pub pitch_rad: f64,
    #[serde(default)]
    pub yaw_rad: f64,
}

impl Attitude {
    pub fn new(roll_rad: f64, pitch_rad: f64, yaw_rad: f64) -> Self {
        Self {
            roll_rad,
            pitch_rad,
            yaw_rad,
        }
    }

    pub fn from_degrees(roll: f64, pitch: f64, yaw: f64) -> Self {
        Self::new(roll.to_radians(), pitch.to_radians(), yaw.to_radians())
    }

    /// Angle-wise difference `self - origin`, as the navigation system reports it.
    pub fn relative_to(&self, origin: &Attitude) -> Attitude {
        Attitude::new(
            self.roll_rad - origin.roll_rad,
            self.pitch_rad - origin.pitch_rad,
            self.yaw_rad - origin.yaw_rad,
        )
    }

    pub fn rotation(&self) -> RotationMatrix {
        compose_attitude(self)
    }

    pub fn is_finite(&self) -> bool {
        self.roll_rad.is_finite() && self.pitch_rad.is_finite() && self.yaw_rad.is_finite()
    }
}

pub fn rotation_x(angle: f64) -> RotationMatrix {
    let (s, c) = angle.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn rotation_y(angle: f64) -> RotationMatrix {
    let (s, c) = angle.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub fn rotation_z(angle: f64) -> RotationMatrix {
    let (s, c) = angle.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// `R = R_yaw * R_pitch * R_roll`.
pub fn compose_attitude(att: &Attitude) -> RotationMatrix {
    rotation_z(att.yaw_rad) * rotation_y(att.pitch_rad) * rotation_x(att.roll_rad)
}

/// One transmitting coil, modeled as a dipole driven by `I sin(wt + phase)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoilSpec {
    pub area_m2: f64,
    pub turns: u32,
    pub current_a: f64,
    pub freq_hz: f64,
    pub phase_rad: f64,
    /// Unit coil axis in the beacon frame.
    pub axis: Vec3,
}

impl CoilSpec {
    pub fn new(
        area_m2: f64,
        turns: u32,
        current_a: f64,
        freq_hz: f64,
        phase_rad: f64,
        axis: Vec3,
    ) -> Result<Self> {
        let coil = Self {
            area_m2,
            turns,
            current_a,
            freq_hz,
            phase_rad,
            axis,
        };
        coil.validate()?;
        Ok(coil)
    }

    /// Circular coil of the given diameter.
    pub fn circular(
        diameter_m: f64,
        turns: u32,
        current_a: f64,
        freq_hz: f64,
        axis: Vec3,
    ) -> Result<Self> {
        Self::new(
            PI * (diameter_m / 2.0).powi(2),
            turns,
            current_a,
            freq_hz,
            0.0,
            axis,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.area_m2 > 0.0 && self.area_m2.is_finite()) {
            return Err(Error::Config(format!("coil area must be > 0, got {}", self.area_m2)));
        }
        if self.turns < 1 {
            return Err(Error::Config("coil needs at least one turn".into()));
        }
        if !(self.current_a > 0.0 && self.current_a.is_finite()) {
            return Err(Error::Config(format!("coil current must be > 0, got {}", self.current_a)));
        }
        if !(self.freq_hz > 0.0 && self.freq_hz.is_finite()) {
            return Err(Error::Config(format!("coil frequency must be > 0, got {}", self.freq_hz)));
        }
        if !self.phase_rad.is_finite() {
            return Err(Error::Config("coil phase must be finite".into()));
        }
        if (self.axis.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "coil axis must be a unit vector, |axis| = {}",
                self.axis.norm()
            )));
        }
        Ok(())
    }

    /// Peak dipole moment `A N I` in A m^2.
    pub fn peak_moment(&self) -> f64 {
        self.area_m2 * self.turns as f64 * self.current_a
    }

    pub fn peak_moment_vector(&self) -> Vec3 {
        self.axis * self.peak_moment()
    }

    pub fn angular_freq(&self) -> f64 {
        2.0 * PI * self.freq_hz
    }
}

/// Instantaneous dipole moment `A N I sin(wt + phase) n`.
pub fn magnetic_moment(coil: &CoilSpec, t: f64) -> Vec3 {
    coil.peak_moment_vector() * (coil.angular_freq() * t + coil.phase_rad).sin()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BeaconSpec {
    pub coils: [CoilSpec; 3],
    pub core_diameter_m: f64,
    pub permeability_rel: f64,
}

impl BeaconSpec {
    pub fn new(coils: [CoilSpec; 3], core_diameter_m: f64, permeability_rel: f64) -> Result<Self> {
        let beacon = Self {
            coils,
            core_diameter_m,
            permeability_rel,
        };
        beacon.validate()?;
        Ok(beacon)
    }

    /// The prototype beacon: 0.12 m core, 370 turns per coil, 1.53/1.3/1.4 A at 16/20/25 Hz.
    pub fn reference() -> Self {
        let d = 0.12;
        let coils = [
            CoilSpec::circular(d, 370, 1.53, 16.0, Vec3::x()),
            CoilSpec::circular(d, 370, 1.3, 20.0, Vec3::y()),
            CoilSpec::circular(d, 370, 1.4, 25.0, Vec3::z()),
        ]
        .map(|c| c.expect("reference coil is valid"));
        Self::new(coils, d, 1.0).expect("reference beacon is valid")
    }

    pub fn validate(&self) -> Result<()> {
        for coil in &self.coils {
            coil.validate()?;
        }
        if !(self.core_diameter_m > 0.0 && self.core_diameter_m.is_finite()) {
            return Err(Error::Config("beacon core diameter must be > 0".into()));
        }
        if !(self.permeability_rel > 0.0 && self.permeability_rel.is_finite()) {
            return Err(Error::Config("relative permeability must be > 0".into()));
        }
        for i in 0..3 {
            for j in (i + 1)..3 {
                let dot = self.coils[i].axis.dot(&self.coils[j].axis);
                if dot.abs() > 1e-6 {
                    return Err(Error::Config(format!(
                        "coil axes {} and {} are not orthogonal (dot = {dot:e})",
                        i + 1,
                        j + 1
                    )));
                }
                if self.coils[i].freq_hz == self.coils[j].freq_hz {
                    return Err(Error::Config(format!(
                        "coils {} and {} share frequency {} Hz",
                        i + 1,
                        j + 1,
                        self.coils[i].freq_hz
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn frequencies(&self) -> [f64; 3] {
        self.coils.each_ref().map(|c| c.freq_hz)
    }

    /// Copy with every coil current scaled, i.e. every moment scaled by `scale`.
    pub fn with_moment_scale(&self, scale: f64) -> Self {
        let mut out = self.clone();
        for coil in &mut out.coils {
            coil.current_a *= scale;
        }
        out
    }

    pub fn check_range(&self, r: &Vec3) -> Result<()> {
        let range_m = r.norm();
        if range_m <= self.core_diameter_m || !range_m.is_finite() {
            return Err(Error::Domain {
                range_m,
                min_range_m: self.core_diameter_m,
            });
        }
        Ok(())
    }

    /// Envelope (peak-moment) field of each coil at `r`.
    pub fn peak_fields(&self, r: &Vec3) -> Result<[FieldVector; 3]> {
        self.check_range(r)?;
        Ok(self
            .coils
            .each_ref()
            .map(|c| dipole_flux(&c.peak_moment_vector(), r, self.permeability_rel)))
    }

    /// Instantaneous sum of the three coil fields at `r`.
    pub fn field(&self, r: &Vec3, t: f64) -> Result<FieldVector> {
        self.check_range(r)?;
        Ok(self
            .coils
            .iter()
            .map(|c| dipole_flux(&magnetic_moment(c, t), r, self.permeability_rel))
            .sum())
    }
}

/// Dipole flux density (Gauss) of `moment` (A m^2) at `r` (m). No range guard.
pub fn dipole_flux(moment: &Vec3, r: &Vec3, mu_r: f64) -> FieldVector {
    let r2 = r.norm_squared();
    let r5 = r2 * r2 * r2.sqrt();
    let k = MU0 * mu_r / (4.0 * PI) * TESLA_TO_GAUSS;
    (r * (3.0 * moment.dot(r)) - moment * r2) * (k / r5)
}

/// Jacobian `d B_a / d r_b` of [`dipole_flux`] with respect to position.
pub fn dipole_flux_jacobian(moment: &Vec3, r: &Vec3, mu_r: f64) -> Matrix3<f64> {
    let r2 = r.norm_squared();
    let rn = r2.sqrt();
    let r5 = r2 * r2 * rn;
    let r7 = r5 * r2;
    let k = MU0 * mu_r / (4.0 * PI) * TESLA_TO_GAUSS;
    let mr = moment.dot(r);
    let outer = moment * r.transpose() + r * moment.transpose();
    (outer * (3.0 / r5) + Matrix3::identity() * (3.0 * mr / r5) - r * r.transpose() * (15.0 * mr / r7))
        * k
}

/// Field of one coil at time `t`, rejecting points inside the beacon core.
pub fn dipole_field(
    coil: &CoilSpec,
    r: &Vec3,
    t: f64,
    mu_r: f64,
    core_diameter_m: f64,
) -> Result<FieldVector> {
    guard_range(r, core_diameter_m)?;
    Ok(dipole_flux(&magnetic_moment(coil, t), r, mu_r))
}

/// Field of one coil with its peak moment; the envelope the solver fits.
pub fn dipole_peak_field(
    coil: &CoilSpec,
    r: &Vec3,
    mu_r: f64,
    core_diameter_m: f64,
) -> Result<FieldVector> {
    guard_range(r, core_diameter_m)?;
    Ok(dipole_flux(&coil.peak_moment_vector(), r, mu_r))
}

fn guard_range(r: &Vec3, core_diameter_m: f64) -> Result<()> {
    let range_m = r.norm();
    if range_m <= core_diameter_m || !range_m.is_finite() {
        return Err(Error::Domain {
            range_m,
            min_range_m: core_diameter_m,
        });
    }
    Ok(())
}

/// A timestamped magnetometer reading in the sensor frame (Gauss).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MagSample {
    /// Seconds since the handshake.
    pub t: f64,
    pub field: FieldVector,
}

/// `B' = R (B + B_E + noise)` with `R` built from `sensor_attitude`.
pub fn measured_field(
    beacon: &BeaconSpec,
    sensor_attitude: &Attitude,
    r: &Vec3,
    geomag: &FieldVector,
    t: f64,
    noise: Option<&FieldVector>,
) -> Result<MagSample> {
    measured_field_rotated(beacon, &compose_attitude(sensor_attitude), r, geomag, t, noise)
}

/// [`measured_field`] with an explicit beacon-to-sensor rotation.
pub fn measured_field_rotated(
    beacon: &BeaconSpec,
    rotation: &RotationMatrix,
    r: &Vec3,
    geomag: &FieldVector,
    t: f64,
    noise: Option<&FieldVector>,
) -> Result<MagSample> {
    let mut total = beacon.field(r, t)? + geomag;
    if let Some(n) = noise {
        total += n;
    }
    Ok(MagSample {
        t,
        field: rotation * total,
    })
}
