//! Installation-offset estimation, reference mistuning estimation and error reports.

use std::collections::HashMap;

use serde::Serialize;

use crate::dsp::{design_filter, wrap_angle, FilterSpec, LockInBank, LockInChannel};
use crate::error::{Error, Result};
use crate::field::{MagSample, Vec3};
use crate::solver::PipelineConfig;

/// Mistuning below this is treated as stable (Hz).
pub const STABLE_MISTUNE_HZ: f64 = 0.005;
/// Shortest phase record accepted by [`estimate_frequency_offset`] (s).
pub const MIN_PHASE_RECORD_S: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OffsetReport {
    /// Add this to every estimate.
    pub offset_m: Vec3,
    pub count: usize,
    pub errors_before_m: Vec<f64>,
    pub errors_after_m: Vec<f64>,
    pub rmse_before_m: f64,
    pub rmse_after_m: f64,
}

impl OffsetReport {
    pub fn apply(&self, estimate: &Vec3) -> Vec3 {
        estimate + self.offset_m
    }
}

fn check_arity(left: usize, right: usize) -> Result<()> {
    if left != right {
        return Err(Error::Arity { left, right });
    }
    Ok(())
}

fn rms(v: &[f64]) -> f64 {
    (v.iter().map(|e| e * e).sum::<f64>() / v.len() as f64).sqrt()
}

/// Mean of `truth - estimate` over the points, with per-point errors before and after.
pub fn offset_calibration(truth: &[Vec3], estimates: &[Vec3]) -> Result<OffsetReport> {
    check_arity(truth.len(), estimates.len())?;
    if truth.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "offset calibration needs at least 2 points, got {}",
            truth.len()
        )));
    }
    let n = truth.len() as f64;
    let offset_m = truth.iter().zip(estimates).map(|(t, e)| t - e).sum::<Vec3>() / n;
    let errors_before_m: Vec<f64> = truth.iter().zip(estimates).map(|(t, e)| (e - t).norm()).collect();
    let errors_after_m: Vec<f64> = truth
        .iter()
        .zip(estimates)
        .map(|(t, e)| (e + offset_m - t).norm())
        .collect();
    Ok(OffsetReport {
        offset_m,
        count: truth.len(),
        rmse_before_m: rms(&errors_before_m),
        rmse_after_m: rms(&errors_after_m),
        errors_before_m,
        errors_after_m,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrequencyOffset {
    /// Beacon frequency minus reference frequency (Hz).
    pub delta_hz: f64,
    pub slope_rad_s: f64,
    pub stable: bool,
    pub duration_s: f64,
    pub samples: usize,
}

/// Unwrap in place so consecutive differences lie in (-pi, pi].
pub fn unwrap_phase(phase: &mut [f64]) {
    for k in 1..phase.len() {
        let d = wrap_angle(phase[k] - phase[k - 1]);
        phase[k] = phase[k - 1] + d;
    }
}

/// Fit the slope of an unwrapped phase record and convert it to a frequency offset.
pub fn estimate_frequency_offset(series: &[(f64, f64)], stable_below_hz: f64) -> Result<FrequencyOffset> {
    if series.len() < 2 {
        return Err(Error::InsufficientData(format!("{} phase samples", series.len())));
    }
    if series.windows(2).any(|w| !(w[1].0 > w[0].0)) {
        return Err(Error::InsufficientData("phase timestamps must increase".into()));
    }
    let duration_s = series[series.len() - 1].0 - series[0].0;
    if duration_s < MIN_PHASE_RECORD_S - 1e-9 {
        return Err(Error::InsufficientData(format!(
            "{duration_s:.3} s of phase, need {MIN_PHASE_RECORD_S} s"
        )));
    }
    let t: Vec<f64> = series.iter().map(|s| s.0).collect();
    let mut p: Vec<f64> = series.iter().map(|s| s.1).collect();
    unwrap_phase(&mut p);
    let n = t.len() as f64;
    let tm = t.iter().sum::<f64>() / n;
    let pm = p.iter().sum::<f64>() / n;
    let (mut stp, mut stt) = (0.0, 0.0);
    for (ti, pi) in t.iter().zip(&p) {
        stp += (ti - tm) * (pi - pm);
        stt += (ti - tm) * (ti - tm);
    }
    let slope_rad_s = stp / stt;
    let delta_hz = slope_rad_s / std::f64::consts::TAU;
    Ok(FrequencyOffset {
        delta_hz,
        slope_rad_s,
        stable: delta_hz.abs() < stable_below_hz,
        duration_s,
        samples: series.len(),
    })
}

/// Settled lock-in phase of each coil on the axis where that coil is strongest.
///
/// `references_hz` are the demodulation frequencies; the band-pass and
/// low-pass follow `cfg`.
pub fn coil_phase_series(
    samples: &[MagSample],
    references_hz: [f64; 3],
    cfg: &PipelineConfig,
    fs_hz: f64,
) -> Result<[Vec<(f64, f64)>; 3]> {
    cfg.validate(fs_hz)?;
    let mut bp: Vec<_> = (0..3)
        .map(|_| {
            design_filter(&FilterSpec::band_pass(
                cfg.bandpass.low_hz,
                cfg.bandpass.high_hz,
                cfg.bandpass.order,
                fs_hz,
            ))
        })
        .collect::<Result<_>>()?;
    let lp = FilterSpec::low_pass(cfg.lowpass.cutoff_hz, cfg.lowpass.order, fs_hz);
    let channels = references_hz
        .iter()
        .map(|&f| Ok(LockInChannel::new(f, &lp)?.with_upstream_gain(bp[0].response(f))))
        .collect::<Result<Vec<_>>>()?;
    let mut bank = LockInBank::new(channels.try_into().expect("three coils"), fs_hz, cfg.settle_s);

    let mut settled = Vec::new();
    for (k, s) in samples.iter().enumerate() {
        let x = Vec3::new(bp[0].step(s.field.x), bp[1].step(s.field.y), bp[2].step(s.field.z));
        let out = bank.step(&x, k as f64 / fs_hz);
        if out.settled {
            settled.push(out);
        }
    }
    let mut series: [Vec<(f64, f64)>; 3] = Default::default();
    for (coil, s) in series.iter_mut().enumerate() {
        let mean_amp = settled.iter().map(|o| o.amp[coil]).sum::<Vec3>();
        let axis = mean_amp.imax();
        *s = settled.iter().map(|o| (o.t, o.phase[coil][axis])).collect();
    }
    Ok(series)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SegmentError {
    pub from: usize,
    pub to: usize,
    pub true_m: f64,
    pub estimated_m: f64,
    /// Estimated minus true segment length.
    pub error_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorMetrics {
    pub count: usize,
    pub rmse_m: f64,
    pub mean_error_m: f64,
    pub std_error_m: f64,
    pub max_error_m: f64,
    pub axis_rmse_m: [f64; 3],
    pub axis_bias_m: [f64; 3],
    /// Distinct truth positions; estimates sharing a truth position are averaged.
    pub distinct_points: Vec<Vec3>,
    pub segments: Vec<SegmentError>,
    pub segment_rmse_m: f64,
}

fn key(v: &Vec3) -> [u64; 3] {
    [v.x.to_bits(), v.y.to_bits(), v.z.to_bits()]
}

/// Distinct truth positions in first-seen order, with the mean estimate at each.
pub fn average_by_truth(estimates: &[Vec3], truth: &[Vec3]) -> Result<(Vec<Vec3>, Vec<Vec3>)> {
    check_arity(estimates.len(), truth.len())?;
    let mut index: HashMap<[u64; 3], usize> = HashMap::new();
    let mut points: Vec<Vec3> = Vec::new();
    let mut sums: Vec<(Vec3, usize)> = Vec::new();
    for (e, t) in estimates.iter().zip(truth) {
        let i = *index.entry(key(t)).or_insert_with(|| {
            points.push(*t);
            sums.push((Vec3::zeros(), 0));
            points.len() - 1
        });
        sums[i].0 += e;
        sums[i].1 += 1;
    }
    let means = sums.iter().map(|(s, c)| s / *c as f64).collect();
    Ok((points, means))
}

/// Point errors plus adjacent-segment length errors.
///
/// Segments join distinct truth positions whose separation equals the
/// smallest nonzero separation (to 1e-6 relative), i.e. grid neighbours.
pub fn error_metrics(estimates: &[Vec3], truth: &[Vec3]) -> Result<ErrorMetrics> {
    check_arity(estimates.len(), truth.len())?;
    if estimates.is_empty() {
        return Err(Error::InsufficientData("no estimates".into()));
    }
    let n = estimates.len() as f64;
    let diffs: Vec<Vec3> = estimates.iter().zip(truth).map(|(e, t)| e - t).collect();
    let errs: Vec<f64> = diffs.iter().map(|d| d.norm()).collect();
    let mean_error_m = errs.iter().sum::<f64>() / n;
    let std_error_m = (errs.iter().map(|e| (e - mean_error_m).powi(2)).sum::<f64>() / n).sqrt();
    let mut axis_rmse_m = [0.0; 3];
    let mut axis_bias_m = [0.0; 3];
    for a in 0..3 {
        axis_rmse_m[a] = (diffs.iter().map(|d| d[a] * d[a]).sum::<f64>() / n).sqrt();
        axis_bias_m[a] = diffs.iter().map(|d| d[a]).sum::<f64>() / n;
    }

    let (points, means) = average_by_truth(estimates, truth)?;

    let mut min_sep = f64::INFINITY;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let d = (points[j] - points[i]).norm();
            if d > 0.0 && d < min_sep {
                min_sep = d;
            }
        }
    }
    let mut segments = Vec::new();
    if min_sep.is_finite() {
        for i in 0..points.len() {
            for j in i + 1..points.len() {
                let true_m = (points[j] - points[i]).norm();
                if (true_m - min_sep).abs() <= 1e-6 * min_sep {
                    let estimated_m = (means[j] - means[i]).norm();
                    segments.push(SegmentError {
                        from: i,
                        to: j,
                        true_m,
                        estimated_m,
                        error_m: estimated_m - true_m,
                    });
                }
            }
        }
    }
    let segment_rmse_m = if segments.is_empty() {
        0.0
    } else {
        (segments.iter().map(|s| s.error_m * s.error_m).sum::<f64>() / segments.len() as f64).sqrt()
    };

    Ok(ErrorMetrics {
        count: estimates.len(),
        rmse_m: rms(&errs),
        mean_error_m,
        std_error_m,
        max_error_m: errs.iter().cloned().fold(0.0, f64::max),
        axis_rmse_m,
        axis_bias_m,
        distinct_points: points,
        segments,
        segment_rmse_m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn grid() -> Vec<Vec3> {
        let mut g = Vec::new();
        for i in 0..4 {
            for j in 0..4 {
                g.push(Vec3::new(0.2 + 0.1 * i as f64, 0.2 + 0.1 * j as f64, 0.5));
            }
        }
        g
    }

    #[test]
    fn exact_estimates_need_no_offset() {
        let g = grid();
        let r = offset_calibration(&g, &g).unwrap();
        assert_eq!(r.offset_m, Vec3::zeros());
        assert_eq!(r.rmse_after_m, 0.0);
    }

    #[test]
    fn uniform_shift_is_recovered() {
        let g = grid();
        let shift = Vec3::new(0.102, 0.058, 0.003);
        let est: Vec<Vec3> = g.iter().map(|p| p - shift).collect();
        let r = offset_calibration(&g, &est).unwrap();
        assert!((r.offset_m - shift).norm() < 1e-15);
        assert!(r.rmse_after_m < 1e-15);
        assert!((r.rmse_before_m - shift.norm()).abs() < 1e-15);
    }

    #[test]
    fn zero_mean_noise_gives_small_offset() {
        let g = grid();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let nd = Normal::new(0.0, 0.01).unwrap();
        let est: Vec<Vec3> = g
            .iter()
            .map(|p| p + Vec3::new(nd.sample(&mut rng), nd.sample(&mut rng), nd.sample(&mut rng)))
            .collect();
        assert!(offset_calibration(&g, &est).unwrap().offset_m.norm() < 0.01);
    }

    #[test]
    fn mismatched_lengths() {
        let g = grid();
        assert!(matches!(offset_calibration(&g, &g[..3]), Err(Error::Arity { left: 16, right: 3 })));
        assert!(matches!(error_metrics(&g, &g[..3]), Err(Error::Arity { .. })));
        assert!(offset_calibration(&g[..1], &g[..1]).is_err());
    }

    proptest! {
        #[test]
        fn offset_is_translation_equivariant(vx in -1.0..1.0f64, vy in -1.0..1.0f64, vz in -1.0..1.0f64) {
            let g = grid();
            let est: Vec<Vec3> = g.iter().enumerate().map(|(k, p)| p + Vec3::repeat(0.001 * k as f64)).collect();
            let v = Vec3::new(vx, vy, vz);
            let moved: Vec<Vec3> = est.iter().map(|e| e + v).collect();
            let a = offset_calibration(&g, &est).unwrap().offset_m;
            let b = offset_calibration(&g, &moved).unwrap().offset_m;
            prop_assert!((b - (a - v)).norm() < 1e-12);
        }

        #[test]
        fn segment_errors_ignore_translation(vx in -1.0..1.0f64, vy in -1.0..1.0f64, seed in 0u64..100) {
            let g = grid();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let nd = Normal::new(0.0, 0.005).unwrap();
            let est: Vec<Vec3> = g.iter().map(|p| p + Vec3::new(nd.sample(&mut rng), nd.sample(&mut rng), 0.0)).collect();
            let moved: Vec<Vec3> = est.iter().map(|e| e + Vec3::new(vx, vy, 0.0)).collect();
            let a = error_metrics(&est, &g).unwrap();
            let b = error_metrics(&moved, &g).unwrap();
            for (sa, sb) in a.segments.iter().zip(&b.segments) {
                prop_assert!((sa.error_m - sb.error_m).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identical_tracks_have_zero_metrics() {
        let g = grid();
        let m = error_metrics(&g, &g).unwrap();
        assert_eq!(m.rmse_m, 0.0);
        assert_eq!(m.max_error_m, 0.0);
        assert_eq!(m.segment_rmse_m, 0.0);
        // 4 x 4 grid: 12 horizontal plus 12 vertical neighbours.
        assert_eq!(m.segments.len(), 24);
    }

    #[test]
    fn constant_offset_leaves_segments_intact() {
        let g = grid();
        let est: Vec<Vec3> = g.iter().map(|p| p + Vec3::new(0.03, 0.0, 0.0)).collect();
        let m = error_metrics(&est, &g).unwrap();
        assert!((m.rmse_m - 0.03).abs() < 1e-15);
        assert!(m.segment_rmse_m < 1e-14);
        assert!((m.axis_bias_m[0] - 0.03).abs() < 1e-15);
    }

    #[test]
    fn rmse_matches_direct_sum() {
        let g = grid();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let nd = Normal::new(0.0, 0.02).unwrap();
        let est: Vec<Vec3> = g
            .iter()
            .map(|p| p + Vec3::new(nd.sample(&mut rng), nd.sample(&mut rng), nd.sample(&mut rng)))
            .collect();
        let mut acc = 0.0f64;
        for (e, t) in est.iter().zip(&g) {
            for a in 0..3 {
                acc += (e[a] - t[a]).powi(2);
            }
        }
        let oracle = (acc / 16.0).sqrt();
        assert!((error_metrics(&est, &g).unwrap().rmse_m - oracle).abs() < 1e-15);
    }

    fn ramp(delta_hz: f64, secs: f64) -> Vec<(f64, f64)> {
        (0..(secs * 100.0) as usize + 1)
            .map(|k| {
                let t = k as f64 / 100.0;
                (t, wrap_angle(0.7 + std::f64::consts::TAU * delta_hz * t))
            })
            .collect()
    }

    #[test]
    fn constant_phase_is_stable() {
        let f = estimate_frequency_offset(&ramp(0.0, 10.0), STABLE_MISTUNE_HZ).unwrap();
        assert!(f.delta_hz.abs() < 1e-12);
        assert!(f.stable);
    }

    #[test]
    fn wrapped_ramp_slope() {
        let f = estimate_frequency_offset(&ramp(0.05, 30.0), STABLE_MISTUNE_HZ).unwrap();
        assert!((f.delta_hz - 0.05).abs() < 1e-9);
        assert!(!f.stable);
        let f = estimate_frequency_offset(&ramp(-0.096, 30.0), STABLE_MISTUNE_HZ).unwrap();
        assert!((f.delta_hz + 0.096).abs() < 1e-9);
    }

    #[test]
    fn short_record_rejected() {
        assert!(matches!(
            estimate_frequency_offset(&ramp(0.01, 4.0), STABLE_MISTUNE_HZ),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn lock_in_phase_ramp_reveals_mistune() {
        let fs = 200.0;
        let samples: Vec<MagSample> = (0..(40.0 * fs) as usize)
            .map(|k| {
                let t = k as f64 / fs;
                let tone = |f: f64| (std::f64::consts::TAU * f * t).sin();
                MagSample {
                    t,
                    field: Vec3::new(0.2 * tone(16.0), 0.1 * tone(20.0), 0.1 * tone(25.0)),
                }
            })
            .collect();
        let series = coil_phase_series(&samples, [15.95, 20.0, 25.0], &PipelineConfig::default(), fs).unwrap();
        let f = estimate_frequency_offset(&series[0], STABLE_MISTUNE_HZ).unwrap();
        assert!((f.delta_hz - 0.05).abs() < 0.0025, "{}", f.delta_hz);
        let f = estimate_frequency_offset(&series[1], STABLE_MISTUNE_HZ).unwrap();
        assert!(f.stable, "{}", f.delta_hz);
    }
}
