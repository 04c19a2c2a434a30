//! CSV and JSON artifacts: sample logs, estimates, truth and handshakes.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::field::{Attitude, MagSample, Vec3};
use crate::simulator::SimSample;
use crate::solver::{EstimateFlag, HandshakeFrame, PoseEstimate};

pub const SAMPLE_HEADER: [&str; 7] = ["t_s", "bx_gauss", "by_gauss", "bz_gauss", "yaw_rad", "pitch_rad", "roll_rad"];
pub const ESTIMATE_HEADER: [&str; 7] = ["t_s", "x_m", "y_m", "z_m", "beacon_yaw_rad", "residual_gauss", "flag"];
pub const TRUTH_HEADER: [&str; 4] = ["t_s", "x_m", "y_m", "z_m"];

/// Relative slack on the sample period before a step counts as a gap.
const GAP_TOLERANCE: f64 = 0.01;

/// A recorded reading with the navigation attitude at that instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoggedSample {
    pub sample: MagSample,
    pub nav: Attitude,
}

impl From<&SimSample> for LoggedSample {
    fn from(s: &SimSample) -> Self {
        Self {
            sample: s.sample,
            nav: s.nav,
        }
    }
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w)
}

fn check_header(rdr: &mut csv::Reader<impl Read>, expected: &[&str]) -> Result<()> {
    let header = rdr.headers()?;
    if header.iter().ne(expected.iter().copied()) {
        return Err(Error::Malformed {
            row: 0,
            message: format!("header is `{}`, expected `{}`", header.iter().collect::<Vec<_>>().join(","), expected.join(",")),
        });
    }
    Ok(())
}

fn check_len(record: &csv::StringRecord, row: usize, n: usize) -> Result<()> {
    if record.len() != n {
        return Err(Error::Malformed {
            row,
            message: format!("expected {n} fields, found {}", record.len()),
        });
    }
    Ok(())
}

/// Parse the first `n` fields as finite numbers.
fn parse_fields(record: &csv::StringRecord, row: usize, n: usize) -> Result<Vec<f64>> {
    record
        .iter()
        .take(n)
        .enumerate()
        .map(|(col, s)| {
            let v: f64 = s.trim().parse().map_err(|_| Error::Malformed {
                row,
                message: format!("column {} is not a number: `{s}`", col + 1),
            })?;
            if !v.is_finite() {
                return Err(Error::Malformed {
                    row,
                    message: format!("column {} is not finite", col + 1),
                });
            }
            Ok(v)
        })
        .collect()
}

/// Full-precision sample log; values round-trip exactly.
pub fn write_samples<W: Write>(w: W, samples: impl IntoIterator<Item = LoggedSample>) -> Result<()> {
    let mut wtr = writer(w);
    wtr.write_record(SAMPLE_HEADER)?;
    for s in samples {
        let f = s.sample.field;
        wtr.write_record([
            s.sample.t,
            f.x,
            f.y,
            f.z,
            s.nav.yaw_rad,
            s.nav.pitch_rad,
            s.nav.roll_rad,
        ]
        .map(|v| v.to_string()))?;
    }
    wtr.flush()?;
    Ok(())
}

/// Read a sample log recorded at `fs_hz`. Rows are numbered from 1 after the header.
pub fn read_samples<R: Read>(r: R, fs_hz: f64) -> Result<Vec<LoggedSample>> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(r);
    check_header(&mut rdr, &SAMPLE_HEADER)?;
    let period = 1.0 / fs_hz;
    let mut out: Vec<LoggedSample> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Malformed {
            row,
            message: e.to_string(),
        })?;
        check_len(&rec, row, 7)?;
        let v = parse_fields(&rec, row, 7)?;
        if let Some(prev) = out.last() {
            let dt = v[0] - prev.sample.t;
            if (dt - period).abs() > GAP_TOLERANCE * period {
                return Err(Error::Malformed {
                    row,
                    message: format!("time step {dt} s, expected {period} s (gap or disorder)"),
                });
            }
        }
        out.push(LoggedSample {
            sample: MagSample {
                t: v[0],
                field: Vec3::new(v[1], v[2], v[3]),
            },
            nav: Attitude::new(v[6], v[5], v[4]),
        });
    }
    Ok(out)
}

fn sci(v: f64) -> String {
    format!("{v:.8e}")
}

pub fn write_estimates<W: Write>(w: W, estimates: &[PoseEstimate]) -> Result<()> {
    let mut wtr = writer(w);
    wtr.write_record(ESTIMATE_HEADER)?;
    for e in estimates {
        wtr.write_record([
            sci(e.t),
            sci(e.r.x),
            sci(e.r.y),
            sci(e.r.z),
            sci(e.beacon_yaw_rad),
            sci(e.residual_gauss),
            e.flag.as_str().to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_estimates<R: Read>(r: R) -> Result<Vec<PoseEstimate>> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(r);
    check_header(&mut rdr, &ESTIMATE_HEADER)?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Malformed {
            row,
            message: e.to_string(),
        })?;
        check_len(&rec, row, 7)?;
        let v = parse_fields(&rec, row, 6)?;
        let flag = EstimateFlag::parse(&rec[6]).ok_or_else(|| Error::Malformed {
            row,
            message: format!("unknown flag `{}`", &rec[6]),
        })?;
        out.push(PoseEstimate {
            t: v[0],
            r: Vec3::new(v[1], v[2], v[3]),
            beacon_yaw_rad: v[4],
            residual_gauss: v[5],
            flag,
        });
    }
    Ok(out)
}

pub fn write_truth<W: Write>(w: W, t: &[f64], truth: &[Vec3]) -> Result<()> {
    if t.len() != truth.len() {
        return Err(Error::Arity {
            left: t.len(),
            right: truth.len(),
        });
    }
    let mut wtr = writer(w);
    wtr.write_record(TRUTH_HEADER)?;
    for (t, p) in t.iter().zip(truth) {
        wtr.write_record([sci(*t), sci(p.x), sci(p.y), sci(p.z)])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Times and positions from a truth file.
pub fn read_truth<R: Read>(r: R) -> Result<(Vec<f64>, Vec<Vec3>)> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(r);
    check_header(&mut rdr, &TRUTH_HEADER)?;
    let (mut ts, mut ps) = (Vec::new(), Vec::new());
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Malformed {
            row,
            message: e.to_string(),
        })?;
        check_len(&rec, row, 4)?;
        let v = parse_fields(&rec, row, 4)?;
        ts.push(v[0]);
        ps.push(Vec3::new(v[1], v[2], v[3]));
    }
    Ok((ts, ps))
}

pub fn read_handshake<R: Read>(r: R) -> Result<HandshakeFrame> {
    let frame: HandshakeFrame = serde_json::from_reader(r)?;
    frame.validate()?;
    Ok(frame)
}

pub fn write_handshake<W: Write>(mut w: W, frame: &HandshakeFrame) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, frame)?;
    w.write_all(b"\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(t: f64) -> LoggedSample {
        LoggedSample {
            sample: MagSample {
                t,
                field: Vec3::new(0.1 + t, -0.2 / 3.0, 1e-7),
            },
            nav: Attitude::new(0.01, -0.02, 0.3),
        }
    }

    #[test]
    fn samples_round_trip_exactly() {
        let s: Vec<_> = (0..50).map(|k| sample(k as f64 / 200.0)).collect();
        let mut buf = Vec::new();
        write_samples(&mut buf, s.iter().copied()).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t_s,bx_gauss,by_gauss,bz_gauss,yaw_rad,pitch_rad,roll_rad\n"));
        assert!(!text.contains('\r'));
        assert_eq!(read_samples(&buf[..], 200.0).unwrap(), s);
    }

    #[test]
    fn gap_reports_row() {
        let mut s: Vec<_> = (0..10).map(|k| sample(k as f64 / 200.0)).collect();
        s.remove(6);
        let mut buf = Vec::new();
        write_samples(&mut buf, s).unwrap();
        match read_samples(&buf[..], 200.0) {
            Err(Error::Malformed { row, .. }) => assert_eq!(row, 7),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_number_reports_row() {
        let text = "t_s,bx_gauss,by_gauss,bz_gauss,yaw_rad,pitch_rad,roll_rad\n0,1,2,3,0,0,0\n0.005,1,x,3,0,0,0\n";
        match read_samples(text.as_bytes(), 200.0) {
            Err(Error::Malformed { row, message }) => {
                assert_eq!(row, 2);
                assert!(message.contains("column 3"));
            }
            other => panic!("{other:?}"),
        }
        let short = "t_s,bx_gauss,by_gauss,bz_gauss,yaw_rad,pitch_rad,roll_rad\n0,1,2\n";
        assert!(matches!(read_samples(short.as_bytes(), 200.0), Err(Error::Malformed { row: 1, .. })));
    }

    #[test]
    fn wrong_header() {
        let text = "time,bx,by,bz\n0,1,2,3\n";
        assert!(matches!(read_samples(text.as_bytes(), 200.0), Err(Error::Malformed { row: 0, .. })));
    }

    #[test]
    fn estimates_keep_nine_digits() {
        let e = PoseEstimate {
            t: 6.005,
            r: Vec3::new(0.123456789123, -0.2, 0.25),
            beacon_yaw_rad: 0.01,
            residual_gauss: 3.3e-4,
            flag: EstimateFlag::Smoothed,
        };
        let mut buf = Vec::new();
        write_estimates(&mut buf, &[e]).unwrap();
        let back = read_estimates(&buf[..]).unwrap();
        assert_eq!(back.len(), 1);
        assert!((back[0].r.x - e.r.x).abs() <= 1e-9 * e.r.x.abs());
        assert_eq!(back[0].flag, EstimateFlag::Smoothed);
    }

    #[test]
    fn handshake_out_of_range() {
        let text = r#"{"r0_m": [2.0, 2.0, 0.5], "beacon_yaw_rad": 0.0}"#;
        assert!(matches!(read_handshake(text.as_bytes()), Err(Error::Range { .. })));
        let ok = r#"{"r0_m": [0.3, 0.2, 0.25], "nav_attitude": {"yaw_rad": 0.1}}"#;
        assert_eq!(read_handshake(ok.as_bytes()).unwrap().nav_attitude.yaw_rad, 0.1);
    }
}
