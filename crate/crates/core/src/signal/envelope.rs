use super::{SyncedSample, VibrationTrace, ZTrajectory};
use crate::error::{Error, Result};

/// Moving-RMS window for the intensity signal, about 5.8 ms at 44.1 kHz.
pub const DEFAULT_RMS_WINDOW: usize = 256;

/// Causal moving RMS: `out[i]` is the RMS of the `rms_window` samples ending at `i`.
///
/// Samples before the start of the trace count as zeros, which keeps the
/// transform exactly shift-equivariant.
pub fn envelope(trace: &VibrationTrace, rms_window: usize) -> Result<Vec<f64>> {
    if rms_window == 0 {
        return Err(Error::Config("rms_window must be >= 1".into()));
    }
    let x = trace.samples();
    let mut out = Vec::with_capacity(x.len());
    let mut acc = 0.0f64;
    for i in 0..x.len() {
        let v = x[i] as f64;
        acc += v * v;
        if i >= rms_window {
            let old = x[i - rms_window] as f64;
            acc -= old * old;
        }
        out.push((acc.max(0.0) / rms_window as f64).sqrt());
    }
    Ok(out)
}

/// Pairs every intensity sample with the robot height at its timestamp.
///
/// Sample `i` is stamped `start_time + i / sample_rate`.
pub fn synchronize(
    intensity: &[f64],
    sample_rate: f64,
    start_time: f64,
    z: &ZTrajectory,
) -> Result<Vec<SyncedSample>> {
    if !(sample_rate > 0.0) {
        return Err(Error::Config("intensity sample_rate must be positive".into()));
    }
    let mut out = Vec::with_capacity(intensity.len());
    for (i, &value) in intensity.iter().enumerate() {
        let time = start_time + i as f64 / sample_rate;
        let height = z.z_at(time).ok_or(Error::Extrapolation {
            time,
            start: z.start_time(),
            end: z.end_time(),
        })?;
        out.push(SyncedSample {
            time,
            z: height,
            intensity: value,
        });
    }
    Ok(out)
}
