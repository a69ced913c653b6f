//! Signal types shared by every other module: the 44.1 kHz vibration stream,
//! the 15 Hz strain stream, spectrograms and robot height trajectories.

mod envelope;
pub mod io;
mod stft;

pub use envelope::{envelope, synchronize, DEFAULT_RMS_WINDOW};
pub use stft::{stft, Taper};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sample rate of the contact microphone stream.
pub const VIBRATION_RATE_HZ: u32 = 44_100;
/// Sample rate of the strain gauge read-out.
pub const STRAIN_RATE_HZ: f64 = 15.0;

/// A mono vibration recording. Samples are stored as `f32` and clamped to `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VibrationTrace {
    samples: Vec<f32>,
    sample_rate: u32,
    start_time: f64,
}

impl VibrationTrace {
    pub fn new(mut samples: Vec<f32>, sample_rate: u32, start_time: f64) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Config("sample_rate must be positive".into()));
        }
        if !start_time.is_finite() {
            return Err(Error::NonFinite("trace start_time"));
        }
        for s in samples.iter_mut() {
            if !s.is_finite() {
                return Err(Error::NonFinite("trace samples"));
            }
            *s = s.clamp(-1.0, 1.0);
        }
        Ok(Self {
            samples,
            sample_rate,
            start_time,
        })
    }

    /// Builds a trace from `f64` samples, rounding each to `f32` after clamping.
    pub fn from_f64(samples: &[f64], sample_rate: u32, start_time: f64) -> Result<Self> {
        let samples = samples
            .iter()
            .map(|&x| if x.is_finite() { x.clamp(-1.0, 1.0) as f32 } else { f32::NAN })
            .collect();
        Self::new(samples, sample_rate, start_time)
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn start_time(&self) -> f64 {
        self.start_time
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Timestamp of sample `i`.
    pub fn time_of(&self, i: usize) -> f64 {
        self.start_time + i as f64 / self.sample_rate as f64
    }
}

/// One reading of the four strain gauge channels, in raw ADC-like counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrainFrame {
    pub channels: [f64; 4],
    pub timestamp: f64,
}

impl StrainFrame {
    pub fn new(channels: [f64; 4], timestamp: f64) -> Result<Self> {
        if channels.iter().any(|c| !c.is_finite()) || !timestamp.is_finite() {
            return Err(Error::NonFinite("strain frame"));
        }
        Ok(Self {
            channels,
            timestamp,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrainTrace {
    frames: Vec<StrainFrame>,
    sample_rate: f64,
}

impl StrainTrace {
    pub fn new(frames: Vec<StrainFrame>, sample_rate: f64) -> Result<Self> {
        if !(sample_rate > 0.0) {
            return Err(Error::Config("strain sample_rate must be positive".into()));
        }
        if frames.windows(2).any(|w| w[1].timestamp <= w[0].timestamp) {
            return Err(Error::Config(
                "strain frame timestamps must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            frames,
            sample_rate,
        })
    }

    pub fn frames(&self) -> &[StrainFrame] {
        &self.frames
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// STFT magnitudes, stored row-major as `frames × bins`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    magnitudes: Vec<f64>,
    frames: usize,
    bins: usize,
    window_size: usize,
    hop: usize,
    sample_rate: u32,
}

impl Spectrogram {
    pub(crate) fn from_parts(
        magnitudes: Vec<f64>,
        frames: usize,
        window_size: usize,
        hop: usize,
        sample_rate: u32,
    ) -> Self {
        let bins = window_size / 2 + 1;
        debug_assert_eq!(magnitudes.len(), frames * bins);
        Self {
            magnitudes,
            frames,
            bins,
            window_size,
            hop,
            sample_rate,
        }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn window_size(&self) -> usize {
        self.window_size
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        &self.magnitudes[i * self.bins..(i + 1) * self.bins]
    }

    pub fn magnitudes(&self) -> &[f64] {
        &self.magnitudes
    }

    /// Center frequency of bin `k` in Hz.
    pub fn bin_frequency(&self, k: usize) -> f64 {
        k as f64 * self.sample_rate as f64 / self.window_size as f64
    }

    /// Frame rate in frames per second.
    pub fn frame_rate(&self) -> f64 {
        self.sample_rate as f64 / self.hop as f64
    }
}

/// Robot height over time, in seconds and millimetres.
#[derive(Debug, Clone, PartialEq)]
pub struct ZTrajectory {
    samples: Vec<(f64, f64)>,
}

impl ZTrajectory {
    pub fn new(samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Config("z trajectory is empty".into()));
        }
        if samples.iter().any(|(t, z)| !t.is_finite() || !z.is_finite()) {
            return Err(Error::NonFinite("z trajectory"));
        }
        if samples.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::Config(
                "z trajectory timestamps must be strictly increasing".into(),
            ));
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[(f64, f64)] {
        &self.samples
    }

    pub fn start_time(&self) -> f64 {
        self.samples[0].0
    }

    pub fn end_time(&self) -> f64 {
        self.samples[self.samples.len() - 1].0
    }

    /// Linear interpolation of z at `time`; `None` outside the covered span.
    pub fn z_at(&self, time: f64) -> Option<f64> {
        let s = &self.samples;
        if time < s[0].0 || time > s[s.len() - 1].0 {
            return None;
        }
        let idx = s.partition_point(|&(t, _)| t <= time);
        if idx == 0 {
            return Some(s[0].1);
        }
        if idx == s.len() {
            return Some(s[s.len() - 1].1);
        }
        let (t0, z0) = s[idx - 1];
        let (t1, z1) = s[idx];
        let w = (time - t0) / (t1 - t0);
        Some(z0 + w * (z1 - z0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyncedSample {
    pub time: f64,
    pub z: f64,
    pub intensity: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_clamps_and_rejects_nan() {
        let t = VibrationTrace::new(vec![2.0, -3.0, 0.5], 44_100, 0.0).unwrap();
        assert_eq!(t.samples(), &[1.0, -1.0, 0.5]);
        assert!(VibrationTrace::new(vec![f32::NAN], 44_100, 0.0).is_err());
        assert!(VibrationTrace::new(vec![], 0, 0.0).is_err());
    }

    #[test]
    fn strain_trace_requires_increasing_time() {
        let f = |t| StrainFrame::new([0.0; 4], t).unwrap();
        assert!(StrainTrace::new(vec![f(0.0), f(0.0)], 15.0).is_err());
        assert!(StrainTrace::new(vec![f(0.0), f(1.0)], 15.0).is_ok());
        assert!(StrainFrame::new([0.0, f64::INFINITY, 0.0, 0.0], 0.0).is_err());
    }

    #[test]
    fn z_interpolation() {
        let z = ZTrajectory::new(vec![(0.0, 0.0), (1.0, 10.0), (3.0, 10.0)]).unwrap();
        assert_eq!(z.z_at(0.5), Some(5.0));
        assert_eq!(z.z_at(2.0), Some(10.0));
        assert_eq!(z.z_at(3.0), Some(10.0));
        assert_eq!(z.z_at(3.5), None);
        assert!(ZTrajectory::new(vec![(1.0, 0.0), (0.5, 0.0)]).is_err());
    }
}
