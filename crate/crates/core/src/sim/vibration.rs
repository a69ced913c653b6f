use std::f64::consts::PI;

use rand::Rng as _;
use rand_distr::{Distribution, Exp, Normal, Uniform};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{self, Rng};
use crate::signal::{VibrationTrace, ZTrajectory, VIBRATION_RATE_HZ};

/// Edges of the eight log-spaced bands a material's spectral envelope is defined over.
pub const MATERIAL_BAND_EDGES_HZ: [f64; 9] = [
    100.0, 194.0, 376.0, 729.0, 1414.0, 2742.0, 5318.0, 10313.0, 20000.0,
];

/// Sliding speed at which a profile's `impulse_rate` is specified, mm/s.
pub const REFERENCE_SLIDE_SPEED: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialProfile {
    pub name: String,
    /// RMS amplitude contributed by each band of [`MATERIAL_BAND_EDGES_HZ`].
    pub band_gains: [f64; 8],
    /// Texture impulses per second at [`REFERENCE_SLIDE_SPEED`].
    pub impulse_rate: f64,
    /// Relative standard deviation of impulse amplitude.
    pub impulse_jitter: f64,
    /// Peak amplitude of one texture impulse.
    pub impulse_amplitude: f64,
}

impl MaterialProfile {
    fn from_db(name: &str, db: [f64; 8], rate: f64, amplitude: f64) -> Self {
        Self {
            name: name.into(),
            band_gains: db.map(|d| 10f64.powf(d / 20.0)),
            impulse_rate: rate,
            impulse_jitter: 0.3,
            impulse_amplitude: amplitude,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.band_gains.iter().any(|g| !(*g >= 0.0) || !g.is_finite()) {
            return Err(Error::Config(format!("{}: band gains must be >= 0", self.name)));
        }
        if !(self.impulse_rate >= 0.0) || !(self.impulse_jitter >= 0.0) || !(self.impulse_amplitude >= 0.0)
        {
            return Err(Error::Config(format!(
                "{}: impulse parameters must be >= 0",
                self.name
            )));
        }
        Ok(())
    }
}

/// The seven sliding materials. Copper tape and wax paper are a deliberately
/// similar smooth-surface pair that differ mainly in one high band.
pub fn default_material_profiles() -> Vec<MaterialProfile> {
    use MaterialProfile as P;
    vec![
        P::from_db("tpu", [-26.0, -26.0, -28.0, -32.0, -38.0, -44.0, -50.0, -56.0], 8.0, 0.05),
        P::from_db("expanded_plastic", [-46.0, -42.0, -36.0, -28.0, -22.0, -28.0, -38.0, -48.0], 40.0, 0.06),
        P::from_db("copper_tape", [-44.0, -42.0, -40.0, -38.0, -34.0, -30.0, -30.0, -34.0], 4.0, 0.03),
        P::from_db("coarse_fabric", [-34.0, -34.0, -34.0, -34.0, -34.0, -34.0, -36.0, -40.0], 25.0, 0.06),
        P::from_db("flush_fabric", [-50.0, -42.0, -34.0, -28.0, -34.0, -44.0, -54.0, -60.0], 6.0, 0.02),
        P::from_db("wax_paper", [-44.0, -42.0, -40.0, -38.0, -34.0, -30.0, -33.5, -34.0], 5.0, 0.03),
        P::from_db("textured_fabric", [-50.0, -48.0, -46.0, -44.0, -42.0, -38.0, -32.0, -26.0], 15.0, 0.05),
    ]
}

fn sample_count(duration: f64) -> usize {
    (duration * VIBRATION_RATE_HZ as f64).round() as usize
}

/// Sliding contact over one material: band-shaped Gaussian noise plus a
/// Poisson train of broadband texture impulses.
pub fn synthesize_sliding(
    profile: &MaterialProfile,
    duration: f64,
    speed: f64,
    seed: u64,
) -> Result<VibrationTrace> {
    profile.validate()?;
    if !(duration > 0.0) {
        return Err(Error::Config("duration must be positive".into()));
    }
    if !(speed > 0.0) {
        return Err(Error::Config("slide speed must be positive".into()));
    }
    let n = sample_count(duration);
    let mut rng = seed::rng(seed);
    let mut x = band_noise(n, &profile.band_gains, &mut rng);

    let rate = profile.impulse_rate * speed / REFERENCE_SLIDE_SPEED;
    if rate > 0.0 && profile.impulse_amplitude > 0.0 {
        let gap = Exp::new(rate).map_err(|e| Error::Config(e.to_string()))?;
        let jitter = Normal::new(1.0, profile.impulse_jitter)
            .map_err(|e| Error::Config(e.to_string()))?;
        let mut t = gap.sample(&mut rng);
        while t < duration {
            let amp = profile.impulse_amplitude * jitter.sample(&mut rng).max(0.0);
            let onset = (t * VIBRATION_RATE_HZ as f64) as usize;
            add_click(&mut x, onset, amp, 0.5e-3, &mut rng);
            t += gap.sample(&mut rng);
        }
    }
    VibrationTrace::from_f64(&x, VIBRATION_RATE_HZ, 0.0)
}

/// Stationary noise with the given per-band RMS, synthesised in the frequency domain.
fn band_noise(n: usize, gains: &[f64; 8], rng: &mut Rng) -> Vec<f64> {
    if n == 0 || gains.iter().all(|&g| g == 0.0) {
        return vec![0.0; n];
    }
    let fs = VIBRATION_RATE_HZ as f64;
    let band_of = |k: usize| {
        let f = k as f64 * fs / n as f64;
        MATERIAL_BAND_EDGES_HZ
            .windows(2)
            .position(|w| f >= w[0] && f < w[1])
    };
    let half = (n - 1) / 2;
    let mut counts = [0usize; 8];
    for k in 1..=half {
        if let Some(b) = band_of(k) {
            counts[b] += 1;
        }
    }

    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut spec = vec![Complex::new(0.0, 0.0); n];
    for k in 1..=half {
        // Draw for every bin so the stream layout does not depend on the gains.
        let (re, im) = (normal.sample(rng), normal.sample(rng));
        if let Some(b) = band_of(k) {
            // Two conjugate bins of variance v contribute 2v / n² to the mean power.
            let scale = gains[b] * n as f64 / (2.0 * counts[b] as f64).sqrt();
            let c = Complex::new(re, im) * (scale / 2f64.sqrt());
            spec[k] = c;
            spec[n - k] = c.conj();
        }
    }
    FftPlanner::<f64>::new().plan_fft_inverse(n).process(&mut spec);
    spec.iter().map(|c| c.re / n as f64).collect()
}

/// Exponentially decaying white-noise click.
fn add_click(x: &mut [f64], onset: usize, amp: f64, tau_s: f64, rng: &mut Rng) {
    let fs = VIBRATION_RATE_HZ as f64;
    let len = (6.0 * tau_s * fs) as usize;
    let u = Uniform::new_inclusive(-1.0, 1.0).unwrap();
    for j in 0..len {
        let Some(slot) = x.get_mut(onset + j) else { break };
        *slot += amp * (-(j as f64) / (tau_s * fs)).exp() * u.sample(rng);
    }
}

/// Exponentially decaying sinusoid.
fn add_tone_burst(x: &mut [f64], onset: usize, amp: f64, freq: f64, tau_s: f64, len_s: f64, phase: f64) {
    let fs = VIBRATION_RATE_HZ as f64;
    let len = (len_s * fs).round() as usize;
    for j in 0..len {
        let Some(slot) = x.get_mut(onset + j) else { break };
        let t = j as f64 / fs;
        *slot += amp * (-t / tau_s).exp() * (2.0 * PI * freq * t + phase).sin();
    }
}

fn uniform_noise(n: usize, floor: f64, rng: &mut Rng) -> Vec<f64> {
    if floor == 0.0 {
        return vec![0.0; n];
    }
    let u = Uniform::new_inclusive(-floor, floor).unwrap();
    (0..n).map(|_| u.sample(rng)).collect()
}

/// Duration of the burst injected at every cup lip, seconds.
pub const CUP_BURST_S: f64 = 0.020;
/// Burst peak amplitude relative to the noise floor, before ±20 % jitter.
pub const CUP_BURST_GAIN: f64 = 15.0;
/// Rate of the synthetic robot height log, Hz.
pub const Z_LOG_RATE_HZ: f64 = 100.0;

/// A fingernail sliding down a cup stack.
///
/// The hand starts at `z = total_travel` and descends at `slide_speed` to
/// `z = 0`. Crossing the lip at height `e` happens at
/// `t = (total_travel - e) / slide_speed`, where a 20 ms decaying burst with a
/// peak of 12–18× `noise_floor` begins.
pub fn synthesize_cup_slide(
    edge_heights: &[f64],
    slide_speed: f64,
    total_travel: f64,
    noise_floor: f64,
    seed: u64,
) -> Result<(VibrationTrace, ZTrajectory)> {
    if !(slide_speed > 0.0) || !(total_travel > 0.0) {
        return Err(Error::Config("slide speed and travel must be positive".into()));
    }
    if !(noise_floor >= 0.0) {
        return Err(Error::Config("noise floor must be >= 0".into()));
    }
    if edge_heights.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("edge heights must be strictly increasing".into()));
    }
    if let Some(e) = edge_heights.iter().find(|e| !(0.0..=total_travel).contains(*e)) {
        return Err(Error::Config(format!(
            "edge at {e} mm lies outside the {total_travel} mm travel"
        )));
    }

    let duration = total_travel / slide_speed;
    let fs = VIBRATION_RATE_HZ as f64;
    let n = sample_count(duration);
    let mut rng = seed::rng(seed);
    let mut x = uniform_noise(n, noise_floor, &mut rng);

    // Highest lip is met first.
    for &e in edge_heights.iter().rev() {
        let t = (total_travel - e) / slide_speed;
        let onset = (t * fs).round() as usize;
        let amp = CUP_BURST_GAIN * noise_floor * (1.0 + rng.random_range(-0.2..=0.2));
        let freq = rng.random_range(2500.0..4000.0);
        // Phase near the crest so the onset sample already carries energy.
        let phase = rng.random_range(0.25 * PI..0.75 * PI);
        add_tone_burst(&mut x, onset, amp, freq, 0.005, CUP_BURST_S, phase);
    }

    let z_n = (duration * Z_LOG_RATE_HZ).floor() as usize;
    let mut z: Vec<(f64, f64)> = (0..=z_n)
        .map(|i| {
            let t = i as f64 / Z_LOG_RATE_HZ;
            (t, total_travel - slide_speed * t)
        })
        .collect();
    if z.last().map(|p| p.0 < duration).unwrap_or(true) {
        z.push((duration, 0.0));
    }

    Ok((VibrationTrace::from_f64(&x, VIBRATION_RATE_HZ, 0.0)?, ZTrajectory::new(z)?))
}

/// Contents of a shaken box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoxContent {
    RubberBands,
    Screws,
    Empty,
}

impl BoxContent {
    pub const ALL: [BoxContent; 3] = [BoxContent::RubberBands, BoxContent::Screws, BoxContent::Empty];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            BoxContent::RubberBands => "rubber_bands",
            BoxContent::Screws => "screws",
            BoxContent::Empty => "empty",
        }
    }
}

/// Noise floor of the shaking recordings.
pub const SHAKE_NOISE_FLOOR: f64 = 0.003;

/// Horizontal shaking of a grasped box.
///
/// Every half period, at the direction reversals, the content hits the box
/// wall: screws give a rattle of 3–6 broadband clicks, rubber bands a soft
/// low-frequency thud, an empty grasp nothing beyond the noise floor.
pub fn synthesize_shaking(
    content: BoxContent,
    duration: f64,
    shake_freq: f64,
    seed: u64,
) -> Result<VibrationTrace> {
    if !(duration > 0.0) || !(shake_freq > 0.0) {
        return Err(Error::Config("duration and shake frequency must be positive".into()));
    }
    let fs = VIBRATION_RATE_HZ as f64;
    let n = sample_count(duration);
    let mut rng = seed::rng(seed);
    let mut x = uniform_noise(n, SHAKE_NOISE_FLOOR, &mut rng);

    let half = 0.5 / shake_freq;
    let mut k = 0usize;
    loop {
        let t = (k as f64 + 0.25) * half + rng.random_range(-0.02..0.02);
        if t >= duration {
            break;
        }
        let onset = (t.max(0.0) * fs) as usize;
        match content {
            BoxContent::Screws => {
                let clicks = rng.random_range(3..=6);
                for _ in 0..clicks {
                    let dt = rng.random_range(0.0..0.06);
                    let amp = 0.3 * rng.random_range(0.6..1.0);
                    add_click(&mut x, onset + (dt * fs) as usize, amp, 0.4e-3, &mut rng);
                }
            }
            BoxContent::RubberBands => {
                let thuds = rng.random_range(1..=2);
                for _ in 0..thuds {
                    let dt = rng.random_range(0.0..0.04);
                    let amp = 0.06 * rng.random_range(0.7..1.0);
                    let freq = rng.random_range(120.0..250.0);
                    let phase = rng.random_range(0.0..2.0 * PI);
                    add_tone_burst(&mut x, onset + (dt * fs) as usize, amp, freq, 0.025, 0.15, phase);
                }
            }
            BoxContent::Empty => {}
        }
        k += 1;
    }
    VibrationTrace::from_f64(&x, VIBRATION_RATE_HZ, 0.0)
}
