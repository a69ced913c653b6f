//! On-disk forms of vibration traces and height trajectories.
//!
//! Binary trace layout (little-endian):
//!
//! | bytes | field |
//! |-------|-------|
//! | 8     | magic `TACT0001` |
//! | 4     | `u32` sample rate |
//! | 8     | `u64` sample count |
//! | 4 × n | `f32` samples |
//!
//! The start time is not stored; decoded traces start at `t = 0`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{VibrationTrace, ZTrajectory};
use crate::error::{Error, Result};

pub const TRACE_MAGIC: &[u8; 8] = b"TACT0001";
const HEADER_LEN: usize = 8 + 4 + 8;

pub fn encode_trace(trace: &VibrationTrace) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * trace.len());
    out.extend_from_slice(TRACE_MAGIC);
    out.extend_from_slice(&trace.sample_rate().to_le_bytes());
    out.extend_from_slice(&(trace.len() as u64).to_le_bytes());
    for s in trace.samples() {
        out.extend_from_slice(&s.to_le_bytes());
    }
    out
}

pub fn decode_trace(bytes: &[u8]) -> Result<VibrationTrace> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Parse(format!(
            "trace header truncated: {} bytes",
            bytes.len()
        )));
    }
    if &bytes[..8] != TRACE_MAGIC {
        return Err(Error::Parse("bad trace magic".into()));
    }
    let rate = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    let count = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
    let body = &bytes[HEADER_LEN..];
    if count.checked_mul(4) != Some(body.len() as u64) {
        return Err(Error::Parse(format!(
            "trace body holds {} bytes, header declares {count} samples",
            body.len()
        )));
    }
    let samples = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    VibrationTrace::new(samples, rate, 0.0)
}

pub fn write_trace(path: &Path, trace: &VibrationTrace) -> Result<()> {
    fs::write(path, encode_trace(trace)).map_err(|e| Error::io(path, e))
}

pub fn read_trace(path: &Path) -> Result<VibrationTrace> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_trace(&bytes)
}

/// CSV form with header `time,amplitude`.
pub fn trace_to_csv(trace: &VibrationTrace) -> String {
    let mut out = String::from("time,amplitude\n");
    for (i, s) in trace.samples().iter().enumerate() {
        let _ = writeln!(out, "{},{}", trace.time_of(i), s);
    }
    out
}

/// Parses the CSV form. The sample rate is inferred from the first two timestamps.
pub fn trace_from_csv(text: &str) -> Result<VibrationTrace> {
    let rows = parse_two_column_csv(text, "time", "amplitude")?;
    let rate = match rows.as_slice() {
        [(t0, _), (t1, _), ..] => (1.0 / (t1 - t0)).round(),
        _ => super::VIBRATION_RATE_HZ as f64,
    };
    if !(rate >= 1.0 && rate <= u32::MAX as f64) {
        return Err(Error::Parse(format!("cannot infer sample rate ({rate})")));
    }
    let start = rows.first().map(|r| r.0).unwrap_or(0.0);
    let samples = rows.iter().map(|r| r.1 as f32).collect();
    VibrationTrace::new(samples, rate as u32, start)
}

/// CSV form with header `time,z_mm`.
pub fn z_to_csv(z: &ZTrajectory) -> String {
    let mut out = String::from("time,z_mm\n");
    for (t, h) in z.samples() {
        let _ = writeln!(out, "{t},{h}");
    }
    out
}

pub fn z_from_csv(text: &str) -> Result<ZTrajectory> {
    ZTrajectory::new(parse_two_column_csv(text, "time", "z_mm")?)
}

pub fn write_z(path: &Path, z: &ZTrajectory) -> Result<()> {
    fs::write(path, z_to_csv(z)).map_err(|e| Error::io(path, e))
}

pub fn read_z(path: &Path) -> Result<ZTrajectory> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    z_from_csv(&text)
}

fn parse_two_column_csv(text: &str, a: &str, b: &str) -> Result<Vec<(f64, f64)>> {
    let mut lines = text.lines().enumerate();
    let header = lines
        .next()
        .map(|(_, l)| l.trim())
        .ok_or_else(|| Error::Parse("empty csv".into()))?;
    if header != format!("{a},{b}") {
        return Err(Error::Parse(format!(
            "line 1: expected header `{a},{b}`, found `{header}`"
        )));
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let (Some(x), Some(y), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::Parse(format!("line {}: expected 2 fields", i + 1)));
        };
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("line {}: {e}", i + 1)))
        };
        rows.push((parse(x)?, parse(y)?));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn binary_round_trip(xs in proptest::collection::vec(-1.0f32..=1.0, 0..500), rate in 1u32..200_000) {
            let t = VibrationTrace::new(xs, rate, 0.0).unwrap();
            prop_assert_eq!(decode_trace(&encode_trace(&t)).unwrap(), t);
        }
    }

    #[test]
    fn binary_header_layout() {
        let t = VibrationTrace::new(vec![0.5, -0.25], 44_100, 0.0).unwrap();
        let b = encode_trace(&t);
        assert_eq!(&b[..8], b"TACT0001");
        assert_eq!(&b[8..12], &44_100u32.to_le_bytes());
        assert_eq!(&b[12..20], &2u64.to_le_bytes());
        assert_eq!(&b[20..24], &0.5f32.to_le_bytes());
        assert_eq!(b.len(), 28);
    }

    #[test]
    fn binary_rejects_corruption() {
        let t = VibrationTrace::new(vec![0.5; 10], 44_100, 0.0).unwrap();
        let b = encode_trace(&t);
        assert!(decode_trace(&b[..b.len() - 1]).is_err());
        assert!(decode_trace(&b[..10]).is_err());
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(decode_trace(&bad).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let t = VibrationTrace::new(vec![0.5, -0.25, 0.125], 100, 0.0).unwrap();
        let back = trace_from_csv(&trace_to_csv(&t)).unwrap();
        assert_eq!(back, t);

        let z = ZTrajectory::new(vec![(0.0, 21.0), (0.5, 18.5)]).unwrap();
        assert_eq!(z_from_csv(&z_to_csv(&z)).unwrap(), z);
        assert!(z_from_csv("t,z\n0,1\n").is_err());
        assert!(z_from_csv("time,z_mm\n0,abc\n").is_err());
    }
}
