//! Vibrotactile inference: the cup-edge event detector, spectrogram features
//! and the material and shaking classifiers.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learn::{self, format, Dataset, Loss, MlpModel, OutputHead, TrainConfig, TRAIN_FRACTION};
use crate::seed;
use crate::signal::{envelope, stft, synchronize, Spectrogram, Taper, VibrationTrace, ZTrajectory, DEFAULT_RMS_WINDOW};
use crate::sim::{synthesize_shaking, synthesize_sliding, BoxContent, MaterialProfile};

/// `B(t) = 1[I(t) >= tau]`.
pub fn binarize(intensity: &[f64], tau: f64) -> Vec<bool> {
    intensity.iter().map(|&v| v >= tau).collect()
}

/// Multiple of the median noise-floor envelope used as the default threshold.
pub const TAU_NOISE_MULTIPLIER: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectConfig {
    /// Intensity threshold τ on the RMS envelope.
    pub tau: f64,
    pub merge_gap_s: f64,
    pub min_duration_s: f64,
    pub rms_window: usize,
}

impl DetectConfig {
    pub fn new(tau: f64) -> Self {
        Self {
            tau,
            merge_gap_s: 0.010,
            min_duration_s: 0.005,
            rms_window: DEFAULT_RMS_WINDOW,
        }
    }

    /// τ = 6 × the median envelope of a recording that contains only the noise floor.
    pub fn calibrate(noise: &VibrationTrace) -> Result<Self> {
        let mut env = envelope(noise, DEFAULT_RMS_WINDOW)?;
        // The first samples see a partly empty window.
        let settled = env.split_off(DEFAULT_RMS_WINDOW.min(env.len()));
        if settled.is_empty() {
            return Err(Error::InsufficientSamples {
                needed: DEFAULT_RMS_WINDOW + 1,
                got: noise.len(),
            });
        }
        Ok(Self::new(TAU_NOISE_MULTIPLIER * median(settled)))
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v >= 0.0 && v.is_finite();
        if !ok(self.tau) || !ok(self.merge_gap_s) || !ok(self.min_duration_s) {
            return Err(Error::Config("tau, merge_gap and min_duration must be finite and >= 0".into()));
        }
        if self.rms_window == 0 {
            return Err(Error::Config("rms_window must be >= 1".into()));
        }
        Ok(())
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// A detected burst, `[onset, offset)` in samples of the source trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventWindow {
    pub onset: usize,
    pub offset: usize,
    pub onset_time: f64,
    /// Robot height at the onset; set by [`detect_cup_edges`].
    pub z_at_onset: Option<f64>,
}

/// Runs of ones, merged across gaps shorter than `merge_gap_s` and
/// discarded when shorter than `min_duration_s`. Times are relative to sample 0.
pub fn cluster_events(b: &[bool], sample_rate: f64, cfg: &DetectConfig) -> Result<Vec<EventWindow>> {
    cfg.validate()?;
    if !(sample_rate > 0.0) {
        return Err(Error::Config("sample_rate must be positive".into()));
    }
    let merge_gap = cfg.merge_gap_s * sample_rate;
    let min_len = cfg.min_duration_s * sample_rate;

    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut i = 0;
    while i < b.len() {
        if !b[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i < b.len() && b[i] {
            i += 1;
        }
        match runs.last_mut() {
            Some(last) if ((start - last.1) as f64) < merge_gap => last.1 = i,
            _ => runs.push((start, i)),
        }
    }
    Ok(runs
        .into_iter()
        .filter(|(s, e)| ((e - s) as f64) >= min_len)
        .map(|(onset, offset)| EventWindow {
            onset,
            offset,
            onset_time: onset as f64 / sample_rate,
            z_at_onset: None,
        })
        .collect())
}

/// Envelope → binarize → cluster, then reads the robot height at every onset.
pub fn detect_cup_edges(trace: &VibrationTrace, z: &ZTrajectory, cfg: &DetectConfig) -> Result<Vec<EventWindow>> {
    cfg.validate()?;
    let fs = trace.sample_rate() as f64;
    let env = envelope(trace, cfg.rms_window)?;
    let mut events = cluster_events(&binarize(&env, cfg.tau), fs, cfg)?;
    for ev in &mut events {
        ev.onset_time += trace.start_time();
        let synced = synchronize(&env[ev.onset..=ev.onset], fs, ev.onset_time, z)?;
        ev.z_at_onset = Some(synced[0].z);
    }
    Ok(events)
}

/// A block of consecutive spectrogram frames, stored `frames × bins` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureWindow {
    pub frames: usize,
    pub bins: usize,
    pub values: Vec<f64>,
    /// Index of the first spectrogram frame.
    pub offset: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialFeatureConfig {
    pub window_size: usize,
    pub hop: usize,
    /// Spectrogram frames per feature window; windows advance by half of this.
    pub window_frames: usize,
}

impl Default for MaterialFeatureConfig {
    fn default() -> Self {
        Self {
            window_size: 256,
            hop: 128,
            window_frames: 4,
        }
    }
}

impl MaterialFeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_frames < 2 || self.window_frames % 2 != 0 {
            return Err(Error::Config("window_frames must be even and >= 2".into()));
        }
        if self.window_size < 2 || !self.window_size.is_power_of_two() || self.hop == 0 || self.hop > self.window_size {
            return Err(Error::Config(format!(
                "invalid stft geometry {} / {}",
                self.window_size, self.hop
            )));
        }
        Ok(())
    }

    pub fn feature_dim(&self) -> usize {
        self.window_frames * (self.window_size / 2 + 1)
    }

    /// Samples needed for one feature window.
    pub fn min_samples(&self) -> usize {
        self.window_size + (self.window_frames - 1) * self.hop
    }
}

/// Magnitudes below this fraction of a window's peak are clamped (−100 dB).
pub const MAGNITUDE_FLOOR: f64 = 1e-5;

/// Log-magnitude spectrogram windows, each centred to zero mean.
///
/// The floor is relative to the window peak and centring removes overall
/// gain, so scaling a trace leaves the features unchanged.
pub fn extract_material_features(trace: &VibrationTrace, cfg: &MaterialFeatureConfig) -> Result<Vec<FeatureWindow>> {
    cfg.validate()?;
    if trace.len() < cfg.min_samples() {
        return Err(Error::InsufficientSamples {
            needed: cfg.min_samples(),
            got: trace.len(),
        });
    }
    let spec = stft(trace, cfg.window_size, cfg.hop, Taper::Hann)?;
    let bins = spec.bins();
    let step = cfg.window_frames / 2;
    let mut out = Vec::new();
    let mut start = 0;
    while start + cfg.window_frames <= spec.frames() {
        let raw = &spec.magnitudes()[start * bins..(start + cfg.window_frames) * bins];
        let floor = raw.iter().copied().fold(0.0f64, f64::max) * MAGNITUDE_FLOOR;
        let mut values: Vec<f64> = raw.iter().map(|m| m.max(floor).max(1e-300).ln()).collect();
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        values.iter_mut().for_each(|v| *v -= mean);
        out.push(FeatureWindow {
            frames: cfg.window_frames,
            bins,
            values,
            offset: start,
        });
        start += step;
    }
    Ok(out)
}

/// Recordings grouped by class; `traces[c]` belong to `classes[c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceCorpus {
    pub classes: Vec<String>,
    pub traces: Vec<Vec<VibrationTrace>>,
}

impl TraceCorpus {
    pub fn validate(&self) -> Result<()> {
        if self.classes.len() < 2 || self.classes.len() != self.traces.len() {
            return Err(Error::Config("corpus needs >= 2 classes with one trace list each".into()));
        }
        if let Some(c) = self.traces.iter().position(|t| t.len() < 2) {
            return Err(Error::Config(format!("class `{}` needs >= 2 traces", self.classes[c])));
        }
        Ok(())
    }

    /// Per class, a seeded 80/20 split of trace indices (at least one trace on each side).
    pub fn split(&self, seed: u64) -> Vec<(Vec<usize>, Vec<usize>)> {
        self.traces
            .iter()
            .enumerate()
            .map(|(c, traces)| {
                let mut idx: Vec<usize> = (0..traces.len()).collect();
                idx.shuffle(&mut seed::rng(seed::derive(seed, &format!("corpus/split/{c}"))));
                let n_train = ((traces.len() as f64 * TRAIN_FRACTION).round() as usize).clamp(1, traces.len() - 1);
                let test = idx.split_off(n_train);
                (idx, test)
            })
            .collect()
    }
}

/// Sliding recordings of every profile: `per_class` traces of `duration` seconds each.
pub fn material_corpus(
    profiles: &[MaterialProfile],
    per_class: usize,
    duration: f64,
    speed: f64,
    seed: u64,
) -> Result<TraceCorpus> {
    let mut traces = Vec::with_capacity(profiles.len());
    for p in profiles {
        let list = (0..per_class)
            .map(|i| synthesize_sliding(p, duration, speed, trace_seed(seed, &p.name, i)))
            .collect::<Result<Vec<_>>>()?;
        traces.push(list);
    }
    Ok(TraceCorpus {
        classes: profiles.iter().map(|p| p.name.clone()).collect(),
        traces,
    })
}

/// Shaking recordings of every box content.
pub fn shake_corpus(per_class: usize, duration: f64, shake_freq: f64, seed: u64) -> Result<TraceCorpus> {
    let mut traces = Vec::new();
    for c in BoxContent::ALL {
        let list = (0..per_class)
            .map(|i| synthesize_shaking(c, duration, shake_freq, trace_seed(seed, c.name(), i)))
            .collect::<Result<Vec<_>>>()?;
        traces.push(list);
    }
    Ok(TraceCorpus {
        classes: BoxContent::ALL.iter().map(|c| c.name().to_string()).collect(),
        traces,
    })
}

/// Seed of the `i`-th recording of class `name` in a generated corpus.
pub fn trace_seed(seed: u64, name: &str, i: usize) -> u64 {
    seed::derive(seed, &format!("corpus/{name}/{i}"))
}

/// Held-out classification summary; `confusion[true][predicted]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierReport {
    pub classes: Vec<String>,
    pub accuracy: f64,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub confusion: Vec<Vec<usize>>,
}

impl ClassifierReport {
    pub fn from_predictions(classes: &[String], truth: &[usize], predicted: &[usize]) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::DimensionMismatch {
                expected: truth.len(),
                got: predicted.len(),
            });
        }
        if truth.is_empty() {
            return Err(Error::InsufficientSamples { needed: 1, got: 0 });
        }
        let k = classes.len();
        let mut confusion = vec![vec![0usize; k]; k];
        for (&t, &p) in truth.iter().zip(predicted) {
            if t >= k || p >= k {
                return Err(Error::Contract(format!("class index {} out of range", t.max(p))));
            }
            confusion[t][p] += 1;
        }
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let correct: usize = (0..k).map(|c| confusion[c][c]).sum();
        let precision = (0..k)
            .map(|c| ratio(confusion[c][c], (0..k).map(|t| confusion[t][c]).sum()))
            .collect();
        let recall = (0..k).map(|c| ratio(confusion[c][c], confusion[c].iter().sum())).collect();
        Ok(Self {
            classes: classes.to_vec(),
            accuracy: ratio(correct, truth.len()),
            precision,
            recall,
            confusion,
        })
    }

    /// Unordered class pair with the largest combined off-diagonal count, or `None` if there are no errors.
    pub fn most_confused_pair(&self) -> Option<(usize, usize)> {
        let k = self.classes.len();
        let mut best = None;
        let mut best_count = 0;
        for i in 0..k {
            for j in i + 1..k {
                let n = self.confusion[i][j] + self.confusion[j][i];
                if n > best_count {
                    best_count = n;
                    best = Some((i, j));
                }
            }
        }
        best
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is plain data")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaterialClassifier {
    pub model: MlpModel,
    pub features: MaterialFeatureConfig,
    pub classes: Vec<String>,
}

impl MaterialClassifier {
    pub fn classify_window(&self, window: &FeatureWindow) -> Result<usize> {
        self.model.predict_class(&window.values)
    }

    /// Writes the model file and a `.meta.json` sidecar with feature settings and class names.
    pub fn save(&self, model_path: &Path) -> Result<()> {
        format::save_model(model_path, &self.model)?;
        write_json(&meta_path(model_path), &MaterialMeta {
            features: self.features,
            classes: self.classes.clone(),
        })
    }

    pub fn load(model_path: &Path) -> Result<Self> {
        let model = format::load_model(model_path)?;
        let meta: MaterialMeta = read_json(&meta_path(model_path))?;
        if model.input_dim() != meta.features.feature_dim() || model.output_dim() != meta.classes.len() {
            return Err(Error::DimensionMismatch {
                expected: meta.features.feature_dim(),
                got: model.input_dim(),
            });
        }
        Ok(Self {
            model,
            features: meta.features,
            classes: meta.classes,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct MaterialMeta {
    features: MaterialFeatureConfig,
    classes: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct ShakeMeta {
    features: ShakeFeatureConfig,
    mean: Vec<f64>,
    scale: Vec<f64>,
}

pub fn meta_path(model_path: &Path) -> PathBuf {
    model_path.with_extension("meta.json")
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone)]
pub struct MaterialFit {
    pub classifier: MaterialClassifier,
    pub report: ClassifierReport,
    pub loss_history: Vec<f64>,
}

pub const MATERIAL_HIDDEN: usize = 128;

pub fn default_material_train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        learning_rate: 0.005,
        epochs: 12,
        batch_size: 32,
        seed,
        loss: Loss::CrossEntropy,
        momentum: 0.9,
        lr_decay: 0.9,
    }
}

fn windows_dataset<F>(corpus: &TraceCorpus, rows: &[Vec<usize>], dim: usize, mut featurize: F) -> Result<Dataset>
where
    F: FnMut(&VibrationTrace) -> Result<Vec<Vec<f64>>>,
{
    let mut inputs = Vec::new();
    let mut labels = Vec::new();
    for (c, idx) in rows.iter().enumerate() {
        for &i in idx {
            for w in featurize(&corpus.traces[c][i])? {
                if w.len() != dim {
                    return Err(Error::DimensionMismatch { expected: dim, got: w.len() });
                }
                inputs.extend(w);
                labels.push(c);
            }
        }
    }
    Dataset::classification(inputs, dim, &labels, corpus.classes.len())
}

/// Splits the corpus by trace, trains a flattened-spectrogram → 128 → classes MLP
/// and reports window-level accuracy on the held-out traces.
pub fn train_material_classifier(
    corpus: &TraceCorpus,
    features: &MaterialFeatureConfig,
    cfg: &TrainConfig,
) -> Result<MaterialFit> {
    corpus.validate()?;
    features.validate()?;
    let split = corpus.split(seed::derive(cfg.seed, "material/split"));
    let dim = features.feature_dim();
    let featurize = |t: &VibrationTrace| {
        Ok(extract_material_features(t, features)?
            .into_iter()
            .map(|w| w.values)
            .collect())
    };
    let train_rows: Vec<Vec<usize>> = split.iter().map(|s| s.0.clone()).collect();
    let test_rows: Vec<Vec<usize>> = split.iter().map(|s| s.1.clone()).collect();
    let train = windows_dataset(corpus, &train_rows, dim, featurize)?;
    let test = windows_dataset(corpus, &test_rows, dim, featurize)?;

    let init = MlpModel::new(
        &[dim, MATERIAL_HIDDEN, corpus.classes.len()],
        OutputHead::Softmax,
        seed::derive(cfg.seed, "material/init"),
    )?;
    let trained = learn::train(&init, &train, cfg)?;
    let report = evaluate(&trained.model, &test, &corpus.classes)?;
    Ok(MaterialFit {
        classifier: MaterialClassifier {
            model: trained.model,
            features: *features,
            classes: corpus.classes.clone(),
        },
        report,
        loss_history: trained.loss_history,
    })
}

fn evaluate(model: &MlpModel, test: &Dataset, classes: &[String]) -> Result<ClassifierReport> {
    let truth: Vec<usize> = (0..test.len()).map(|i| test.label(i)).collect();
    let predicted = (0..test.len())
        .map(|i| model.predict_class(test.input(i)))
        .collect::<Result<Vec<_>>>()?;
    ClassifierReport::from_predictions(classes, &truth, &predicted)
}

/// Window length of the shaking pipeline, spectrogram frames.
pub const SHAKE_WINDOW_FRAMES: usize = 86;
/// Rate at which the stream classifier starts a new window, Hz.
pub const DEFAULT_WINDOW_RATE_HZ: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShakeFeatureConfig {
    pub window_size: usize,
    pub hop: usize,
    pub window_frames: usize,
    /// Log-spaced bands between `low_hz` and Nyquist.
    pub bands: usize,
    pub low_hz: f64,
}

impl Default for ShakeFeatureConfig {
    fn default() -> Self {
        Self {
            window_size: 1024,
            hop: 512,
            window_frames: SHAKE_WINDOW_FRAMES,
            bands: 16,
            low_hz: 60.0,
        }
    }
}

impl ShakeFeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_size < 2 || !self.window_size.is_power_of_two() || self.hop == 0 || self.hop > self.window_size {
            return Err(Error::Config(format!(
                "invalid stft geometry {} / {}",
                self.window_size, self.hop
            )));
        }
        if self.window_frames < 2 || self.bands == 0 || !(self.low_hz > 0.0) {
            return Err(Error::Config("window_frames >= 2, bands >= 1 and low_hz > 0 required".into()));
        }
        Ok(())
    }

    /// Mean, max and standard deviation of every band's log energy.
    pub fn feature_dim(&self) -> usize {
        3 * self.bands
    }

    /// Bin ranges `[lo, hi)` of the bands; every band holds at least one bin.
    fn band_bins(&self, sample_rate: u32) -> Vec<(usize, usize)> {
        let bins = self.window_size / 2 + 1;
        let nyquist = sample_rate as f64 / 2.0;
        let bin_hz = sample_rate as f64 / self.window_size as f64;
        let ratio = (nyquist / self.low_hz).powf(1.0 / self.bands as f64);
        let mut out = Vec::with_capacity(self.bands);
        let mut lo = ((self.low_hz / bin_hz).floor() as usize).max(1);
        for b in 0..self.bands {
            let edge = self.low_hz * ratio.powi(b as i32 + 1);
            let hi = if b + 1 == self.bands {
                bins
            } else {
                ((edge / bin_hz).round() as usize).clamp(lo + 1, bins)
            };
            out.push((lo, hi.max(lo + 1).min(bins)));
            lo = hi.min(bins - 1);
        }
        out
    }
}

/// Spectrogram-window summary fed to the shaking classifier.
pub fn shake_window_features(spec: &Spectrogram, start: usize, cfg: &ShakeFeatureConfig) -> Result<Vec<f64>> {
    if start + cfg.window_frames > spec.frames() {
        return Err(Error::InsufficientSamples {
            needed: start + cfg.window_frames,
            got: spec.frames(),
        });
    }
    let bands = cfg.band_bins(spec.sample_rate());
    let mut out = vec![0.0; cfg.feature_dim()];
    let mut energies = vec![0.0; cfg.window_frames];
    for (b, &(lo, hi)) in bands.iter().enumerate() {
        for (f, e) in energies.iter_mut().enumerate() {
            let frame = spec.frame(start + f);
            *e = (frame[lo..hi].iter().map(|m| m * m).sum::<f64>() + 1e-12).log10();
        }
        let n = energies.len() as f64;
        let mean = energies.iter().sum::<f64>() / n;
        let max = energies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let std = (energies.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n).sqrt();
        out[3 * b] = mean;
        out[3 * b + 1] = max;
        out[3 * b + 2] = std;
    }
    Ok(out)
}

/// First frames of the stream windows: one window every `1 / window_rate` seconds
/// for as long as a full window fits.
pub fn stream_window_starts(frames: usize, frame_rate: f64, window_frames: usize, window_rate: f64) -> Vec<usize> {
    let mut out = Vec::new();
    if frames < window_frames {
        return out;
    }
    for k in 0.. {
        let start = (k as f64 * frame_rate / window_rate + 1e-9).floor() as usize;
        if start + window_frames > frames {
            break;
        }
        out.push(start);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteResult {
    pub predictions: Vec<usize>,
    pub final_class: usize,
    pub counts: Vec<usize>,
    /// Another class reached the same top count; the lowest index won.
    pub tie: bool,
}

pub fn majority_vote(predictions: &[usize], classes: usize) -> Result<VoteResult> {
    if predictions.is_empty() {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }
    let mut counts = vec![0usize; classes];
    for &p in predictions {
        *counts
            .get_mut(p)
            .ok_or_else(|| Error::Contract(format!("prediction {p} outside {classes} classes")))? += 1;
    }
    let top = *counts.iter().max().unwrap();
    let final_class = counts.iter().position(|&c| c == top).unwrap();
    Ok(VoteResult {
        predictions: predictions.to_vec(),
        final_class,
        tie: counts.iter().filter(|&&c| c == top).count() > 1,
        counts,
    })
}

/// Shaking classifier with the feature standardisation learned on its training windows.
#[derive(Debug, Clone, PartialEq)]
pub struct ShakeClassifier {
    pub model: MlpModel,
    pub features: ShakeFeatureConfig,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl ShakeClassifier {
    fn check(&self) -> Result<()> {
        let d = self.features.feature_dim();
        if self.model.input_dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: self.model.input_dim(),
            });
        }
        if self.mean.len() != d || self.scale.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: self.mean.len().min(self.scale.len()),
            });
        }
        Ok(())
    }

    fn standardize(&self, mut x: Vec<f64>) -> Vec<f64> {
        for ((v, m), s) in x.iter_mut().zip(&self.mean).zip(&self.scale) {
            *v = (*v - m) / s;
        }
        x
    }

    pub fn save(&self, model_path: &Path) -> Result<()> {
        self.check()?;
        format::save_model(model_path, &self.model)?;
        write_json(&meta_path(model_path), &ShakeMeta {
            features: self.features,
            mean: self.mean.clone(),
            scale: self.scale.clone(),
        })
    }

    pub fn load(model_path: &Path) -> Result<Self> {
        let model = format::load_model(model_path)?;
        let meta: ShakeMeta = read_json(&meta_path(model_path))?;
        let clf = Self {
            model,
            features: meta.features,
            mean: meta.mean,
            scale: meta.scale,
        };
        clf.check()?;
        Ok(clf)
    }

    /// Raw (unstandardised) window features at the stream start frames.
    pub fn stream_features(&self, trace: &VibrationTrace, window_rate: f64) -> Result<Vec<Vec<f64>>> {
        stream_features(trace, &self.features, window_rate)
    }
}

fn stream_features(trace: &VibrationTrace, cfg: &ShakeFeatureConfig, window_rate: f64) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    if !(window_rate > 0.0) {
        return Err(Error::Config("window_rate must be positive".into()));
    }
    let needed = cfg.window_size + (cfg.window_frames - 1) * cfg.hop;
    if trace.len() < needed {
        return Err(Error::InsufficientSamples {
            needed,
            got: trace.len(),
        });
    }
    let spec = stft(trace, cfg.window_size, cfg.hop, Taper::Hann)?;
    stream_window_starts(spec.frames(), spec.frame_rate(), cfg.window_frames, window_rate)
        .into_iter()
        .map(|s| shake_window_features(&spec, s, cfg))
        .collect()
}

/// Classifies windows started every `1 / window_rate` s and takes a majority vote.
pub fn classify_stream(clf: &ShakeClassifier, trace: &VibrationTrace, window_rate: f64) -> Result<VoteResult> {
    clf.check()?;
    let predictions = clf
        .stream_features(trace, window_rate)?
        .into_iter()
        .map(|x| clf.model.predict_class(&clf.standardize(x)))
        .collect::<Result<Vec<_>>>()?;
    majority_vote(&predictions, clf.model.output_dim())
}

#[derive(Debug, Clone)]
pub struct ShakeFit {
    pub classifier: ShakeClassifier,
    pub report: ClassifierReport,
    pub loss_history: Vec<f64>,
}

pub const SHAKE_HIDDEN: [usize; 2] = [128, 64];

pub fn default_shake_train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        learning_rate: 0.01,
        epochs: 30,
        batch_size: 32,
        seed,
        loss: Loss::CrossEntropy,
        momentum: 0.9,
        lr_decay: 0.95,
    }
}

/// Trains the window → 128 → 64 → classes shaking classifier on stream windows
/// of the train traces and reports window accuracy on the held-out traces.
pub fn train_shake_classifier(
    corpus: &TraceCorpus,
    features: &ShakeFeatureConfig,
    cfg: &TrainConfig,
) -> Result<ShakeFit> {
    corpus.validate()?;
    features.validate()?;
    let split = corpus.split(seed::derive(cfg.seed, "shake/split"));
    let dim = features.feature_dim();
    let featurize = |t: &VibrationTrace| stream_features(t, features, DEFAULT_WINDOW_RATE_HZ);
    let train_rows: Vec<Vec<usize>> = split.iter().map(|s| s.0.clone()).collect();
    let test_rows: Vec<Vec<usize>> = split.iter().map(|s| s.1.clone()).collect();
    let train = windows_dataset(corpus, &train_rows, dim, featurize)?;
    let test = windows_dataset(corpus, &test_rows, dim, featurize)?;

    let n = train.len() as f64;
    let mut mean = vec![0.0; dim];
    let mut scale = vec![0.0; dim];
    for i in 0..train.len() {
        for (m, x) in mean.iter_mut().zip(train.input(i)) {
            *m += x / n;
        }
    }
    for i in 0..train.len() {
        for ((s, x), m) in scale.iter_mut().zip(train.input(i)).zip(&mean) {
            *s += (x - m).powi(2) / n;
        }
    }
    for s in &mut scale {
        *s = if *s > 1e-12 { s.sqrt() } else { 1.0 };
    }
    let standardize = |d: &Dataset| {
        let mut inputs = Vec::with_capacity(d.len() * dim);
        for i in 0..d.len() {
            inputs.extend(d.input(i).iter().zip(&mean).zip(&scale).map(|((x, m), s)| (x - m) / s));
        }
        let labels: Vec<usize> = (0..d.len()).map(|i| d.label(i)).collect();
        Dataset::classification(inputs, dim, &labels, corpus.classes.len())
    };
    let train = standardize(&train)?;
    let test = standardize(&test)?;

    let init = MlpModel::new(
        &[dim, SHAKE_HIDDEN[0], SHAKE_HIDDEN[1], corpus.classes.len()],
        OutputHead::Softmax,
        seed::derive(cfg.seed, "shake/init"),
    )?;
    let trained = learn::train(&init, &train, cfg)?;
    let report = evaluate(&trained.model, &test, &corpus.classes)?;
    Ok(ShakeFit {
        classifier: ShakeClassifier {
            model: trained.model,
            features: *features,
            mean,
            scale,
        },
        report,
        loss_history: trained.loss_history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::synthesize_cup_slide;
    use proptest::prelude::*;

    /// Independent oracle: list runs, merge adjacent pairs until nothing
    /// changes, then filter by length.
    fn oracle(b: &[bool], fs: f64, cfg: &DetectConfig) -> Vec<(usize, usize)> {
        let mut runs: Vec<(usize, usize)> = Vec::new();
        for (i, &v) in b.iter().enumerate() {
            if v {
                if i > 0 && b[i - 1] {
                    runs.last_mut().unwrap().1 = i + 1;
                } else {
                    runs.push((i, i + 1));
                }
            }
        }
        loop {
            let pos = runs
                .windows(2)
                .position(|w| ((w[1].0 - w[0].1) as f64) < cfg.merge_gap_s * fs);
            match pos {
                Some(p) => {
                    let next = runs.remove(p + 1);
                    runs[p].1 = next.1;
                }
                None => break,
            }
        }
        runs.retain(|(s, e)| ((e - s) as f64) >= cfg.min_duration_s * fs);
        runs
    }

    fn spans(ev: &[EventWindow]) -> Vec<(usize, usize)> {
        ev.iter().map(|e| (e.onset, e.offset)).collect()
    }

    #[test]
    fn binarize_is_inclusive() {
        assert_eq!(binarize(&[0.0; 4], 0.1), vec![false; 4]);
        assert_eq!(binarize(&[0.5], 0.5), vec![true]);
        let ramp: Vec<f64> = (0..11).map(|i| i as f64 / 10.0).collect();
        let b = binarize(&ramp, 0.5);
        assert_eq!(b.iter().position(|&v| v), Some(5));
        assert_eq!(b.windows(2).filter(|w| w[0] != w[1]).count(), 1);
    }

    #[test]
    fn merge_rule_examples() {
        let fs = 1000.0;
        let cfg = DetectConfig {
            merge_gap_s: 0.005,
            min_duration_s: 0.001,
            ..DetectConfig::new(0.0)
        };
        let mut b = vec![false; 100];
        b[10..20].fill(true);
        b[22..32].fill(true);
        assert_eq!(spans(&cluster_events(&b, fs, &cfg).unwrap()), vec![(10, 32)]);
        let mut b = vec![false; 200];
        b[10..20].fill(true);
        b[70..80].fill(true);
        assert_eq!(spans(&cluster_events(&b, fs, &cfg).unwrap()), vec![(10, 20), (70, 80)]);
    }

    #[test]
    fn exhaustive_short_sequences_match_oracle() {
        let fs = 1000.0;
        let cfgs = [
            (0.0, 0.0),
            (0.002, 0.0),
            (0.003, 0.002),
            (0.001, 0.004),
        ];
        for (gap, min) in cfgs {
            let cfg = DetectConfig {
                merge_gap_s: gap,
                min_duration_s: min,
                ..DetectConfig::new(0.0)
            };
            for len in 0..=20usize {
                for bits in 0u32..(1 << len) {
                    let b: Vec<bool> = (0..len).map(|i| bits >> i & 1 == 1).collect();
                    assert_eq!(spans(&cluster_events(&b, fs, &cfg).unwrap()), oracle(&b, fs, &cfg));
                }
            }
        }
    }

    proptest! {
        #[test]
        fn long_sequences_match_oracle(
            b in prop::collection::vec(prop::bool::weighted(0.3), 21..400),
            gap in 0.0f64..0.01,
            min in 0.0f64..0.01,
        ) {
            let cfg = DetectConfig { merge_gap_s: gap, min_duration_s: min, ..DetectConfig::new(0.0) };
            prop_assert_eq!(spans(&cluster_events(&b, 1000.0, &cfg).unwrap()), oracle(&b, 1000.0, &cfg));
        }

        #[test]
        fn raising_tau_never_adds_ones(x in prop::collection::vec(0.0f64..1.0, 1..200), a in 0.0f64..1.0, d in 0.0f64..1.0) {
            let lo = binarize(&x, a).iter().filter(|&&v| v).count();
            let hi = binarize(&x, a + d).iter().filter(|&&v| v).count();
            prop_assert!(hi <= lo);
        }

        #[test]
        fn vote_ignores_window_order(mut p in prop::collection::vec(0usize..3, 1..60), s in any::<u64>()) {
            let a = majority_vote(&p, 3).unwrap();
            p.shuffle(&mut seed::rng(s));
            let b = majority_vote(&p, 3).unwrap();
            prop_assert_eq!((a.final_class, a.counts, a.tie), (b.final_class, b.counts, b.tie));
        }
    }

    #[test]
    fn thirty_separated_bursts_are_thirty_events() {
        let fs = 1000.0;
        let cfg = DetectConfig::new(0.0);
        let mut rng = seed::rng(4);
        let mut b = Vec::new();
        for _ in 0..30 {
            use rand::Rng as _;
            b.extend(std::iter::repeat_n(false, rng.random_range(11..40)));
            b.extend(std::iter::repeat_n(true, rng.random_range(6..30)));
        }
        assert_eq!(cluster_events(&b, fs, &cfg).unwrap().len(), 30);
    }

    fn noise_cfg(floor: f64) -> DetectConfig {
        let (noise, _) = synthesize_cup_slide(&[], 5.0, 5.0, floor, 99).unwrap();
        DetectConfig::calibrate(&noise).unwrap()
    }

    #[test]
    fn three_edges_found_at_their_heights() {
        let cfg = noise_cfg(0.01);
        let edges = [4.0, 11.0, 18.0];
        let (trace, z) = synthesize_cup_slide(&edges, 5.0, 21.0, 0.01, 5).unwrap();
        let ev = detect_cup_edges(&trace, &z, &cfg).unwrap();
        assert_eq!(ev.len(), 3);
        for (e, truth) in ev.iter().zip(edges.iter().rev()) {
            assert!((e.z_at_onset.unwrap() - truth).abs() < 0.2, "{e:?} vs {truth}");
        }
        let (quiet, z) = synthesize_cup_slide(&[], 5.0, 21.0, 0.01, 6).unwrap();
        assert!(detect_cup_edges(&quiet, &z, &cfg).unwrap().is_empty());
    }

    #[test]
    fn edge_count_independent_of_speed() {
        let cfg = noise_cfg(0.01);
        for speed in [2.0, 3.5, 5.0, 7.5, 10.0] {
            let (trace, z) = synthesize_cup_slide(&[2.0, 9.0, 16.0], speed, 21.0, 0.01, 8).unwrap();
            assert_eq!(detect_cup_edges(&trace, &z, &cfg).unwrap().len(), 3, "speed {speed}");
        }
    }

    #[test]
    fn calibrated_tau_is_six_medians() {
        let noise = VibrationTrace::from_f64(&vec![0.5; 1000], 1000, 0.0).unwrap();
        assert!((DetectConfig::calibrate(&noise).unwrap().tau - 3.0).abs() < 1e-9);
    }

    #[test]
    fn one_window_trace_gives_one_window() {
        let cfg = MaterialFeatureConfig::default();
        let x: Vec<f64> = (0..cfg.min_samples()).map(|i| (i as f64 * 0.3).sin()).collect();
        let t = VibrationTrace::from_f64(&x, 44_100, 0.0).unwrap();
        let w = extract_material_features(&t, &cfg).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].values.len(), cfg.feature_dim());
        let short = VibrationTrace::from_f64(&x[1..], 44_100, 0.0).unwrap();
        assert!(matches!(
            extract_material_features(&short, &cfg),
            Err(Error::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn window_count_follows_hop_formula() {
        let cfg = MaterialFeatureConfig::default();
        let profile = &crate::sim::default_material_profiles()[0];
        let a = synthesize_sliding(profile, 0.1, 20.0, 1).unwrap();
        let doubled: Vec<f32> = a.samples().iter().chain(a.samples()).copied().collect();
        let b = VibrationTrace::new(doubled, a.sample_rate(), 0.0).unwrap();
        let count = |n: usize| {
            let frames = (n - cfg.window_size) / cfg.hop + 1;
            (frames - cfg.window_frames) / (cfg.window_frames / 2) + 1
        };
        assert_eq!(extract_material_features(&a, &cfg).unwrap().len(), count(a.len()));
        assert_eq!(extract_material_features(&b, &cfg).unwrap().len(), count(b.len()));
    }

    #[test]
    fn features_ignore_gain() {
        let cfg = MaterialFeatureConfig::default();
        let profile = &crate::sim::default_material_profiles()[2];
        let raw = synthesize_sliding(profile, 0.05, 20.0, 3).unwrap();
        // Attenuated to stay inside the clamp and snapped to a 2^-16 grid so
        // that ×10 is exact in f32 storage.
        let quiet: Vec<f64> = raw
            .samples()
            .iter()
            .map(|&v| (0.05 * v as f64 * 65536.0).round() / 65536.0)
            .collect();
        let loud: Vec<f64> = quiet.iter().map(|v| 10.0 * v).collect();
        let a = VibrationTrace::from_f64(&quiet, raw.sample_rate(), 0.0).unwrap();
        let b = VibrationTrace::from_f64(&loud, raw.sample_rate(), 0.0).unwrap();
        let (fa, fb) = (
            extract_material_features(&a, &cfg).unwrap(),
            extract_material_features(&b, &cfg).unwrap(),
        );
        for (x, y) in fa.iter().zip(&fb) {
            for (u, v) in x.values.iter().zip(&y.values) {
                assert!((u - v).abs() < 1e-6, "{u} vs {v}");
            }
        }
    }

    #[test]
    fn vote_examples() {
        let v = majority_vote(&[2; 7], 3).unwrap();
        assert_eq!((v.final_class, v.counts.clone(), v.tie), (2, vec![0, 0, 7], false));
        let v = majority_vote(&[1, 0, 1, 0, 0, 1], 3).unwrap();
        assert_eq!((v.final_class, v.tie), (0, true));
        assert!(majority_vote(&[], 3).is_err());
        assert!(majority_vote(&[3], 3).is_err());
    }

    #[test]
    fn stream_of_5_6_seconds_has_46_windows() {
        let frames = (246_960 - 1024) / 512 + 1;
        let starts = stream_window_starts(frames, 44_100.0 / 512.0, SHAKE_WINDOW_FRAMES, 10.0);
        assert_eq!(starts.len(), 46);
        assert_eq!(starts[..3], [0, 8, 17]);
    }

    #[test]
    fn bands_cover_distinct_bins() {
        let bands = ShakeFeatureConfig::default().band_bins(44_100);
        assert_eq!(bands.len(), 16);
        for (lo, hi) in &bands {
            assert!(lo < hi);
        }
        for w in bands.windows(2) {
            assert_eq!(w[0].1, w[1].0);
        }
        assert_eq!(bands.last().unwrap().1, 513);
    }

    #[test]
    fn classifiers_round_trip_through_files() {
        let dir = tempfile::tempdir().unwrap();
        let features = ShakeFeatureConfig::default();
        let shake = ShakeClassifier {
            model: MlpModel::new(&[features.feature_dim(), 8, 3], OutputHead::Softmax, 1).unwrap(),
            features,
            mean: vec![0.5; features.feature_dim()],
            scale: vec![2.0; features.feature_dim()],
        };
        let p = dir.path().join("shake.mlpm");
        shake.save(&p).unwrap();
        assert!(dir.path().join("shake.meta.json").exists());
        assert_eq!(ShakeClassifier::load(&p).unwrap(), shake);

        let mf = MaterialFeatureConfig::default();
        let material = MaterialClassifier {
            model: MlpModel::new(&[mf.feature_dim(), 4, 2], OutputHead::Softmax, 2).unwrap(),
            features: mf,
            classes: vec!["a".into(), "b".into()],
        };
        let p = dir.path().join("material.mlpm");
        material.save(&p).unwrap();
        assert_eq!(MaterialClassifier::load(&p).unwrap(), material);
    }

    #[test]
    fn report_counts_and_rates() {
        let classes: Vec<String> = ["a", "b", "c"].map(String::from).to_vec();
        let r = ClassifierReport::from_predictions(&classes, &[0, 0, 1, 1, 2, 2], &[0, 1, 1, 0, 2, 2]).unwrap();
        assert_eq!(r.confusion, vec![vec![1, 1, 0], vec![1, 1, 0], vec![0, 0, 2]]);
        assert!((r.accuracy - 4.0 / 6.0).abs() < 1e-12);
        assert_eq!(r.precision, vec![0.5, 0.5, 1.0]);
        assert_eq!(r.recall, vec![0.5, 0.5, 1.0]);
        assert_eq!(r.most_confused_pair(), Some((0, 1)));
        let back: ClassifierReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
    }
}
