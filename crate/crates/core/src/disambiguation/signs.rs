//! Signs of the nine measured field components.
//!
//! The lock-in only yields magnitudes; the signs are seeded from the model at
//! the handshake position and then flipped whenever a component's phase
//! settles half a turn away from where it last settled.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use super::window::{PhaseWindow, PHASE_WINDOW_LEN};
use crate::dsp::{wrap_angle, LiaOutput};
use crate::error::{Error, Result};
use crate::field::{BeaconSpec, RotationMatrix, Vec3};

/// Model components smaller than this (Gauss) have no usable sign.
pub const SIGN_FLOOR_GAUSS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignState {
    /// Per coil, per axis: +1 or -1.
    pub signs: [Vec3; 3],
    pub initialized: bool,
}

impl SignState {
    pub fn uninitialized() -> Self {
        Self {
            signs: [Vec3::repeat(1.0); 3],
            initialized: false,
        }
    }

    pub fn sign(&self, coil: usize, axis: usize) -> f64 {
        self.signs[coil][axis]
    }

    pub fn flip(&mut self, coil: usize, axis: usize) {
        self.signs[coil][axis] = -self.signs[coil][axis];
    }

    /// Signed amplitudes `s * |B|` per coil.
    pub fn apply(&self, amp: &[Vec3; 3]) -> [Vec3; 3] {
        [0, 1, 2].map(|i| amp[i].component_mul(&self.signs[i]))
    }
}

/// Signs of the model envelope field at the handshake position.
pub fn init_signs_from_position(r0: &Vec3, beacon: &BeaconSpec) -> Result<SignState> {
    init_signs_rotated(r0, beacon, &RotationMatrix::identity())
}

/// As [`init_signs_from_position`], with the model field rotated into the
/// frame the lock-in observes.
pub fn init_signs_rotated(
    r0: &Vec3,
    beacon: &BeaconSpec,
    rotation: &RotationMatrix,
) -> Result<SignState> {
    let fields = beacon.peak_fields(r0)?;
    let mut signs = [Vec3::zeros(); 3];
    for (i, b) in fields.iter().enumerate() {
        let b = rotation * b;
        for axis in 0..3 {
            if b[axis].abs() < SIGN_FLOOR_GAUSS {
                return Err(Error::Degenerate(format!(
                    "coil {} axis {} model field {:.1e} G has no sign",
                    i + 1,
                    ["x", "y", "z"][axis],
                    b[axis]
                )));
            }
            signs[i][axis] = b[axis].signum();
        }
    }
    Ok(SignState {
        signs,
        initialized: true,
    })
}

/// Limits a settled phase window must meet before a crossing is accepted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CrossingThresholds {
    pub max_circular_std_rad: f64,
    pub max_rate_rad_s: f64,
    pub min_amplitude_gauss: f64,
}

impl Default for CrossingThresholds {
    fn default() -> Self {
        Self {
            max_circular_std_rad: 0.5,
            max_rate_rad_s: PI,
            min_amplitude_gauss: 0.03,
        }
    }
}

impl CrossingThresholds {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if !ok(self.max_circular_std_rad) || !ok(self.max_rate_rad_s) || !(self.min_amplitude_gauss >= 0.0) {
            return Err(Error::Config(format!("invalid crossing thresholds {self:?}")));
        }
        Ok(())
    }
}

/// Consecutive wrapped phases that change sign by more than a quarter turn.
pub fn crossing_candidate(prev: f64, cur: f64) -> bool {
    prev * cur < 0.0 && wrap_angle(cur - prev).abs() > FRAC_PI_2
}

#[derive(Debug, Clone, PartialEq)]
struct ComponentTracker {
    window: PhaseWindow,
    prev_phase: Option<f64>,
    /// Settled phase associated with the current sign.
    anchor: Option<f64>,
    pending: bool,
}

/// A validated sign change.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Flip {
    pub coil: usize,
    pub axis: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignTracker {
    components: Vec<ComponentTracker>,
    thresholds: CrossingThresholds,
    flips: u64,
}

impl SignTracker {
    pub fn new(thresholds: CrossingThresholds, fs_hz: f64) -> Self {
        Self::with_window(thresholds, fs_hz, PHASE_WINDOW_LEN)
    }

    pub fn with_window(thresholds: CrossingThresholds, fs_hz: f64, window_len: usize) -> Self {
        let c = ComponentTracker {
            window: PhaseWindow::new(window_len, 1.0 / fs_hz),
            prev_phase: None,
            anchor: None,
            pending: false,
        };
        Self {
            components: vec![c; 9],
            thresholds,
            flips: 0,
        }
    }

    pub fn reset(&mut self) {
        for c in &mut self.components {
            c.window.clear();
            c.prev_phase = None;
            c.anchor = None;
            c.pending = false;
        }
        self.flips = 0;
    }

    pub fn total_flips(&self) -> u64 {
        self.flips
    }

    /// Feed one lock-in output; flips `state` in place and returns what changed.
    pub fn update(&mut self, state: &mut SignState, lia: &LiaOutput) -> Vec<Flip> {
        let th = self.thresholds;
        let mut flipped = Vec::new();
        for coil in 0..3 {
            for axis in 0..3 {
                let c = &mut self.components[coil * 3 + axis];
                let phase = lia.phase[coil][axis];
                let amp = lia.amp[coil][axis];
                c.window.push(phase);
                if let Some(prev) = c.prev_phase {
                    if crossing_candidate(prev, phase) {
                        c.pending = true;
                    }
                }
                if let Some(anchor) = c.anchor {
                    if wrap_angle(phase - anchor).abs() > FRAC_PI_2 {
                        c.pending = true;
                    }
                }
                c.prev_phase = Some(phase);

                let quiet = c.window.is_full()
                    && amp >= th.min_amplitude_gauss
                    && c.window.circular_std() < th.max_circular_std_rad
                    && c.window.rate().abs() < th.max_rate_rad_s;
                if !quiet {
                    continue;
                }
                let mean = c.window.circular_mean().expect("full window");
                if let Some(anchor) = c.anchor {
                    if c.pending && wrap_angle(mean - anchor).abs() > FRAC_PI_2 {
                        state.flip(coil, axis);
                        self.flips += 1;
                        flipped.push(Flip { coil, axis });
                    }
                }
                c.anchor = Some(mean);
                c.pending = false;
            }
        }
        flipped
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::dipole_peak_field;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    const FS: f64 = 200.0;

    fn lia_single(phase: f64, amp: f64) -> LiaOutput {
        let mut out = LiaOutput {
            t: 0.0,
            amp: [Vec3::repeat(amp); 3],
            phase: [Vec3::zeros(); 3],
            settled: true,
        };
        out.phase[0].x = phase;
        out
    }

    #[test]
    fn step_of_half_turn_flips_once() {
        let mut tracker = SignTracker::new(CrossingThresholds::default(), FS);
        let mut state = SignState {
            signs: [Vec3::repeat(1.0); 3],
            initialized: true,
        };
        let mut flips = 0;
        for k in 0..2000 {
            let phase = if k < 1000 { 0.0 } else { PI };
            flips += tracker.update(&mut state, &lia_single(phase, 0.1)).len();
        }
        assert_eq!(flips, 1);
        assert_eq!(state.sign(0, 0), -1.0);
        assert_eq!(state.sign(0, 1), 1.0);
    }

    #[test]
    fn jitter_does_not_flip() {
        let mut tracker = SignTracker::new(CrossingThresholds::default(), FS);
        let mut state = SignState {
            signs: [Vec3::repeat(1.0); 3],
            initialized: true,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let jitter = rand_distr::Uniform::new_inclusive(-0.3, 0.3).unwrap();
        for _ in 0..(60.0 * FS) as usize {
            let f = tracker.update(&mut state, &lia_single(jitter.sample(&mut rng), 0.05));
            assert!(f.is_empty());
        }
    }

    #[test]
    fn jitter_across_branch_cut_does_not_flip() {
        let mut tracker = SignTracker::new(CrossingThresholds::default(), FS);
        let mut state = SignState {
            signs: [Vec3::repeat(-1.0); 3],
            initialized: true,
        };
        let noise = Normal::new(0.0, 0.05).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..(30.0 * FS) as usize {
            let p = wrap_angle(PI + noise.sample(&mut rng));
            assert!(tracker.update(&mut state, &lia_single(p, 0.05)).is_empty());
        }
    }

    #[test]
    fn weak_return_is_not_validated() {
        let mut tracker = SignTracker::new(CrossingThresholds::default(), FS);
        let mut state = SignState {
            signs: [Vec3::repeat(1.0); 3],
            initialized: true,
        };
        for k in 0..2000 {
            let (phase, amp) = if k < 1000 { (0.0, 0.1) } else { (PI, 0.01) };
            tracker.update(&mut state, &lia_single(phase, amp));
        }
        assert_eq!(state.sign(0, 0), 1.0);
    }

    #[test]
    fn slow_drift_does_not_flip() {
        // 0.05 Hz mistune: phase walks a full turn over 20 s.
        let mut tracker = SignTracker::new(CrossingThresholds::default(), FS);
        let mut state = SignState {
            signs: [Vec3::repeat(1.0); 3],
            initialized: true,
        };
        for k in 0..(40.0 * FS) as usize {
            let p = wrap_angle(2.0 * PI * 0.05 * k as f64 / FS);
            assert!(tracker.update(&mut state, &lia_single(p, 0.1)).is_empty());
        }
    }

    #[test]
    fn candidate_primitive() {
        assert!(crossing_candidate(0.1, -3.0));
        assert!(!crossing_candidate(0.1, -0.1));
        assert!(!crossing_candidate(3.1, -3.1));
        assert!(!crossing_candidate(0.1, 3.0));
    }

    #[test]
    fn on_axis_signs() {
        let beacon = BeaconSpec::reference();
        let r0 = Vec3::new(0.01, 0.02, 0.5);
        let s = init_signs_from_position(&r0, &beacon).unwrap();
        assert_eq!(s.signs[2].z, 1.0);
        assert_eq!(s.signs[0].x, -1.0);
        assert_eq!(s.signs[1].y, -1.0);
    }

    #[test]
    fn degenerate_when_on_a_plane() {
        let beacon = BeaconSpec::reference();
        let err = init_signs_from_position(&Vec3::new(0.3, 0.0, 0.5), &beacon).unwrap_err();
        assert!(matches!(err, Error::Degenerate(_)));
    }

    #[test]
    fn inside_core_is_domain_error() {
        let beacon = BeaconSpec::reference();
        let err = init_signs_from_position(&Vec3::new(0.05, 0.05, 0.05), &beacon).unwrap_err();
        assert!(matches!(err, Error::Domain { .. }));
    }

    proptest! {
        #[test]
        fn signs_match_model_and_are_even(
            x in 0.1f64..0.8, y in 0.1f64..0.8, z in 0.1f64..0.8,
            sx in prop::bool::ANY, sy in prop::bool::ANY, sz in prop::bool::ANY,
        ) {
            let f = |b: bool| if b { 1.0 } else { -1.0 };
            let r0 = Vec3::new(f(sx) * x, f(sy) * y, f(sz) * z);
            let beacon = BeaconSpec::reference();
            let model: Vec<Vec3> = beacon.coils.iter()
                .map(|c| dipole_peak_field(c, &r0, 1.0, 0.12).unwrap())
                .collect();
            prop_assume!(model.iter().all(|b| b.iter().all(|v| v.abs() > 1e-9)));
            let s = init_signs_from_position(&r0, &beacon).unwrap();
            let m = init_signs_from_position(&-r0, &beacon).unwrap();
            for i in 0..3 {
                prop_assert_eq!(s.signs[i], model[i].map(f64::signum));
                prop_assert_eq!(m.signs[i], s.signs[i]);
            }
        }
    }
}
