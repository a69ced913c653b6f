use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::{Spectrogram, VibrationTrace};
use crate::error::{Error, Result};

/// Window taper applied to each STFT frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Taper {
    Rectangular,
    #[default]
    Hann,
}

impl Taper {
    /// Periodic taper coefficients of length `n`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Taper::Rectangular => vec![1.0; n],
            Taper::Hann => (0..n)
                .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
                .collect(),
        }
    }
}

/// Magnitude STFT with non-centered frames.
///
/// Frame `m` covers samples `[m * hop, m * hop + window_size)`, so the frame
/// count is `(len - window_size) / hop + 1`.
pub fn stft(
    trace: &VibrationTrace,
    window_size: usize,
    hop: usize,
    taper: Taper,
) -> Result<Spectrogram> {
    if window_size < 2 || !window_size.is_power_of_two() {
        return Err(Error::Config(format!(
            "stft window_size must be a power of two >= 2, got {window_size}"
        )));
    }
    if hop == 0 || hop > window_size {
        return Err(Error::Config(format!(
            "stft hop must lie in 1..={window_size}, got {hop}"
        )));
    }
    let samples = trace.samples();
    if samples.len() < window_size {
        return Err(Error::InsufficientSamples {
            needed: window_size,
            got: samples.len(),
        });
    }

    let frames = (samples.len() - window_size) / hop + 1;
    let bins = window_size / 2 + 1;
    let coeffs = taper.coefficients(window_size);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(window_size);
    let mut buf = vec![Complex::new(0.0, 0.0); window_size];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut magnitudes = Vec::with_capacity(frames * bins);

    for m in 0..frames {
        let start = m * hop;
        for (slot, (&x, &w)) in buf
            .iter_mut()
            .zip(samples[start..start + window_size].iter().zip(&coeffs))
        {
            *slot = Complex::new(x as f64 * w, 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        magnitudes.extend(buf[..bins].iter().map(|c| c.norm()));
    }

    Ok(Spectrogram::from_parts(
        magnitudes,
        frames,
        window_size,
        hop,
        trace.sample_rate(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// O(N²) DFT magnitude of one frame.
    fn naive_dft(frame: &[f64]) -> Vec<f64> {
        let n = frame.len();
        (0..n / 2 + 1)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (j, &x) in frame.iter().enumerate() {
                    let phi = -2.0 * PI * (k * j % n) as f64 / n as f64;
                    re += x * phi.cos();
                    im += x * phi.sin();
                }
                (re * re + im * im).sqrt()
            })
            .collect()
    }

    fn trace(samples: Vec<f32>) -> VibrationTrace {
        VibrationTrace::new(samples, 44_100, 0.0).unwrap()
    }

    #[test]
    fn zero_trace_gives_zero_magnitudes() {
        let s = stft(&trace(vec![0.0; 300]), 64, 16, Taper::Hann).unwrap();
        assert!(s.magnitudes().iter().all(|&m| m == 0.0));
    }

    #[test]
    fn frame_count_formula() {
        let s = stft(&trace(vec![0.1; 1000]), 128, 50, Taper::Hann).unwrap();
        assert_eq!(s.frames(), (1000 - 128) / 50 + 1);
        assert_eq!(s.bins(), 65);
    }

    #[test]
    fn bin_centered_sinusoid_peaks_at_its_bin() {
        let n = 256;
        let k = 19;
        let samples: Vec<f32> = (0..n * 3)
            .map(|i| (0.8 * (2.0 * PI * k as f64 * i as f64 / n as f64).cos()) as f32)
            .collect();
        let tr = trace(samples);
        let s = stft(&tr, n, n, Taper::Rectangular).unwrap();
        for f in 0..s.frames() {
            let frame = s.frame(f);
            let oracle = naive_dft(
                &tr.samples()[f * n..(f + 1) * n]
                    .iter()
                    .map(|&x| x as f64)
                    .collect::<Vec<_>>(),
            );
            let peak = frame[k];
            let argmax = (0..frame.len())
                .max_by(|&a, &b| frame[a].total_cmp(&frame[b]))
                .unwrap();
            assert_eq!(argmax, k);
            assert!((peak - oracle[k]).abs() <= 1e-9 * peak);
            // f32 rounding of the input leaves a small leakage floor.
            for (j, &m) in frame.iter().enumerate() {
                if j != k {
                    assert!(m < 1e-5 * peak, "bin {j}: {m} vs peak {peak}");
                }
            }
        }
    }

    #[test]
    fn exact_sinusoid_off_bin_below_1e9() {
        // Values exactly representable in f32: a bin-N/4 cosine is {1, 0, -1, 0}.
        let n = 64;
        let samples: Vec<f32> = (0..n).map(|i| [1.0, 0.0, -1.0, 0.0][i % 4]).collect();
        let s = stft(&trace(samples), n, n, Taper::Rectangular).unwrap();
        let frame = s.frame(0);
        let peak = frame[n / 4];
        assert!((peak - n as f64 / 2.0).abs() < 1e-9);
        for (j, &m) in frame.iter().enumerate() {
            if j != n / 4 {
                assert!(m < 1e-9 * peak);
            }
        }
    }

    #[test]
    fn impulse_gives_flat_spectrum() {
        let mut samples = vec![0.0; 128];
        samples[0] = 0.5;
        let s = stft(&trace(samples), 128, 128, Taper::Rectangular).unwrap();
        for &m in s.frame(0) {
            assert!((m - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn configuration_errors() {
        let t = trace(vec![0.0; 100]);
        assert!(matches!(stft(&t, 48, 8, Taper::Hann), Err(Error::Config(_))));
        assert!(matches!(stft(&t, 64, 0, Taper::Hann), Err(Error::Config(_))));
        assert!(matches!(stft(&t, 64, 65, Taper::Hann), Err(Error::Config(_))));
        assert!(matches!(
            stft(&t, 128, 8, Taper::Hann),
            Err(Error::InsufficientSamples { needed: 128, got: 100 })
        ));
    }

    #[test]
    fn hann_is_periodic() {
        let w = Taper::Hann.coefficients(8);
        assert_eq!(w[0], 0.0);
        assert!((w[4] - 1.0).abs() < 1e-15);
        assert!((w[2] - 0.5).abs() < 1e-15);
    }
}
