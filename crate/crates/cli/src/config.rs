//! Experiment configuration: a TOML file with one table per pipeline stage.
//! Every key is optional and falls back to the defaults below.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use tactile_core::control::{CupScenario, PinchPlant, ShakeTaskConfig};
use tactile_core::force::CalibrationGrid;
use tactile_core::learn::{Loss, TrainConfig};
use tactile_core::seed;
use tactile_core::sim::FingertipModel;
use tactile_core::vibro::{MaterialFeatureConfig, ShakeFeatureConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub momentum: f64,
    pub lr_decay: f64,
}

impl TrainSection {
    fn from_core(c: TrainConfig) -> Self {
        Self {
            learning_rate: c.learning_rate,
            epochs: c.epochs,
            batch_size: c.batch_size,
            momentum: c.momentum,
            lr_decay: c.lr_decay,
        }
    }

    pub fn to_core(&self, seed: u64, loss: Loss) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed,
            loss,
            momentum: self.momentum,
            lr_decay: self.lr_decay,
        }
    }
}

impl Default for TrainSection {
    fn default() -> Self {
        Self::from_core(tactile_core::force::default_force_train_config(0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FingertipSection {
    pub noise_sigma: f64,
    pub hysteresis_ratio: f64,
    pub anisotropy: f64,
    pub height_sensitivity: f64,
}

impl Default for FingertipSection {
    fn default() -> Self {
        let m = FingertipModel::default();
        Self {
            noise_sigma: m.noise_sigma,
            hysteresis_ratio: m.hysteresis_ratio,
            anisotropy: m.anisotropy,
            height_sensitivity: m.height_sensitivity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSection {
    pub angles_deg: Vec<f64>,
    pub heights_mm: Vec<f64>,
    pub step_size_mm: f64,
    pub max_displacement_mm: f64,
    pub dwell_s: f64,
    pub randomize: bool,
    pub train: TrainSection,
}

impl Default for CalibrationSection {
    fn default() -> Self {
        let g = CalibrationGrid::default();
        Self {
            angles_deg: g.angles_deg,
            heights_mm: g.heights_mm,
            step_size_mm: g.step_size_mm,
            max_displacement_mm: g.max_displacement_mm,
            dwell_s: g.dwell_s,
            randomize: g.randomize,
            train: TrainSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaterialSection {
    pub traces_per_class: usize,
    pub duration_s: f64,
    pub speed_mm_s: f64,
    pub window_size: usize,
    pub hop: usize,
    pub window_frames: usize,
    pub train: TrainSection,
}

impl Default for MaterialSection {
    fn default() -> Self {
        let f = MaterialFeatureConfig::default();
        Self {
            traces_per_class: 10,
            // 16 mm of travel at 20 mm/s.
            duration_s: 0.8,
            speed_mm_s: 20.0,
            window_size: f.window_size,
            hop: f.hop,
            window_frames: f.window_frames,
            train: TrainSection::from_core(tactile_core::vibro::default_material_train_config(0)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShakeSection {
    pub traces_per_class: usize,
    pub duration_s: f64,
    pub shake_freq_hz: f64,
    pub window_rate_hz: f64,
    pub train: TrainSection,
}

impl Default for ShakeSection {
    fn default() -> Self {
        let t = ShakeTaskConfig::default();
        Self {
            traces_per_class: 20,
            duration_s: t.duration_s,
            shake_freq_hz: t.shake_freq,
            window_rate_hz: t.window_rate,
            train: TrainSection::from_core(tactile_core::vibro::default_shake_train_config(0)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CupsSection {
    pub lip_spacing_mm: f64,
    pub travel_mm: f64,
    pub slide_speed_mm_s: f64,
    pub noise_floor: f64,
    /// Fixed τ; when absent τ is calibrated on a contact-free recording.
    pub tau: Option<f64>,
    /// Example slides written by `gen-data`.
    pub sample_slides: usize,
}

impl Default for CupsSection {
    fn default() -> Self {
        let s = CupScenario::default();
        Self {
            lip_spacing_mm: s.lip_spacing_mm,
            travel_mm: s.travel_mm,
            slide_speed_mm_s: s.slide_speed,
            noise_floor: s.noise_floor,
            tau: None,
            sample_slides: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PinchSection {
    pub tofu_threshold_n: f64,
    pub chip_threshold_n: f64,
}

impl Default for PinchSection {
    fn default() -> Self {
        Self {
            tofu_threshold_n: PinchPlant::tofu().force_threshold,
            chip_threshold_n: PinchPlant::chip().force_threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub fingertip: FingertipSection,
    pub calibration: CalibrationSection,
    pub material: MaterialSection,
    pub shake: ShakeSection,
    pub cups: CupsSection,
    pub pinch: PinchSection,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn fingertip(&self) -> FingertipModel {
        FingertipModel {
            noise_sigma: self.fingertip.noise_sigma,
            hysteresis_ratio: self.fingertip.hysteresis_ratio,
            anisotropy: self.fingertip.anisotropy,
            height_sensitivity: self.fingertip.height_sensitivity,
            ..FingertipModel::default()
        }
    }

    pub fn grid(&self, seed: u64) -> CalibrationGrid {
        let c = &self.calibration;
        CalibrationGrid {
            angles_deg: c.angles_deg.clone(),
            heights_mm: c.heights_mm.clone(),
            step_size_mm: c.step_size_mm,
            max_displacement_mm: c.max_displacement_mm,
            dwell_s: c.dwell_s,
            randomize: c.randomize,
            seed,
        }
    }

    pub fn material_features(&self) -> MaterialFeatureConfig {
        MaterialFeatureConfig {
            window_size: self.material.window_size,
            hop: self.material.hop,
            window_frames: self.material.window_frames,
        }
    }

    pub fn shake_features(&self) -> ShakeFeatureConfig {
        ShakeFeatureConfig::default()
    }

    pub fn shake_task(&self) -> ShakeTaskConfig {
        ShakeTaskConfig {
            duration_s: self.shake.duration_s,
            shake_freq: self.shake.shake_freq_hz,
            window_rate: self.shake.window_rate_hz,
        }
    }

    pub fn cup_scenario(&self) -> CupScenario {
        let c = &self.cups;
        let d = CupScenario::default();
        CupScenario {
            lip_spacing_mm: c.lip_spacing_mm,
            travel_mm: c.travel_mm,
            slide_speed: c.slide_speed_mm_s,
            noise_floor: c.noise_floor,
            // Keeps three lips inside the travel for any spacing/travel pair.
            top_lip_mm: (2.0 * c.lip_spacing_mm + 1.0, (3.0 * c.lip_spacing_mm - 0.5).min(c.travel_mm - 0.5)),
            ..d
        }
    }

    pub fn plants(&self) -> [PinchPlant; 2] {
        [
            PinchPlant {
                force_threshold: self.pinch.tofu_threshold_n,
                ..PinchPlant::tofu()
            },
            PinchPlant {
                force_threshold: self.pinch.chip_threshold_n,
                ..PinchPlant::chip()
            },
        ]
    }

    /// Checks every section without touching the filesystem.
    pub fn validate(&self) -> Result<()> {
        self.fingertip().validate()?;
        self.grid(0).trials()?;
        for (name, t, loss) in [
            ("calibration.train", &self.calibration.train, Loss::MeanSquaredError),
            ("material.train", &self.material.train, Loss::CrossEntropy),
            ("shake.train", &self.shake.train, Loss::CrossEntropy),
        ] {
            t.to_core(0, loss).validate().with_context(|| format!("[{name}]"))?;
        }
        self.material_features().validate()?;
        if self.material.traces_per_class < 2 || self.shake.traces_per_class < 2 {
            bail!("traces_per_class must be >= 2");
        }
        let min = self.material_features().min_samples() as f64 / tactile_core::signal::VIBRATION_RATE_HZ as f64;
        if !(self.material.duration_s >= min) || !(self.material.speed_mm_s > 0.0) {
            bail!("[material] duration_s must be >= {min:.4} s and speed_mm_s > 0");
        }
        let t = self.shake_task();
        if !(t.duration_s > 0.0) || !(t.shake_freq > 0.0) || !(t.window_rate > 0.0) {
            bail!("[shake] duration_s, shake_freq_hz and window_rate_hz must be positive");
        }
        self.cup_scenario().validate()?;
        if let Some(tau) = self.cups.tau {
            if !(tau >= 0.0) {
                bail!("[cups] tau must be >= 0");
            }
        }
        for p in self.plants() {
            p.config().with_context(|| format!("[pinch] {}", p.name))?;
        }
        Ok(())
    }
}

/// Config with the seed and output directory settled.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub out: PathBuf,
}

impl Resolved {
    /// Command-line values win over the file. There is no default seed.
    pub fn new(mut config: ExperimentConfig, seed: Option<u64>, out: Option<PathBuf>) -> Result<Self> {
        let Some(seed) = seed.or(config.seed) else {
            bail!("no seed given: pass --seed or set `seed` in the config file");
        };
        let out = out.or(config.out.clone()).unwrap_or_else(|| PathBuf::from("tactile-out"));
        config.seed = Some(seed);
        config.out = None;
        config.validate()?;
        Ok(Self { config, seed, out })
    }

    /// SHA-256 of the resolved config (output directory excluded), hex.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(&self.config).expect("config is plain data");
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Per-stage seed derived from the top-level one.
    pub fn sub_seed(&self, stage: &str) -> u64 {
        seed::derive(self.seed, stage)
    }
}
