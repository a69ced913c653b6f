//! Strain gauge calibration: the characterisation grid, a linear
//! least-squares baseline and the MLP force estimator used by the controllers.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, SVD};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learn::{self, format, Dataset, Loss, MlpModel, OutputHead, TrainConfig, TRAIN_FRACTION};
use crate::seed;
use crate::signal::StrainFrame;
use crate::sim::{simulate_indentation, Branch, FingertipModel, PlanarForce, RigTrajectory};

/// Hidden layer widths of the force regressor (4 → 32 → 32 → 2).
pub const FORCE_HIDDEN: [usize; 2] = [32, 32];
/// Declared validity range of the estimator, newtons.
pub const FORCE_RANGE_N: (f64, f64) = (0.0, 5.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationGrid {
    pub angles_deg: Vec<f64>,
    pub heights_mm: Vec<f64>,
    pub step_size_mm: f64,
    pub max_displacement_mm: f64,
    pub dwell_s: f64,
    /// Visit trials in a seeded random order.
    pub randomize: bool,
    pub seed: u64,
}

impl Default for CalibrationGrid {
    /// −50°..50° in 10° steps, heights 0..5 mm in 1 mm steps, 1.5 mm steps to 30 mm, 8 s dwell.
    fn default() -> Self {
        Self {
            angles_deg: (0..=10).map(|i| -50.0 + 10.0 * i as f64).collect(),
            heights_mm: (0..=5).map(|h| h as f64).collect(),
            step_size_mm: 1.5,
            max_displacement_mm: 30.0,
            dwell_s: 8.0,
            randomize: true,
            seed: 0,
        }
    }
}

impl CalibrationGrid {
    /// Trial trajectories in visiting order.
    pub fn trials(&self) -> Result<Vec<RigTrajectory>> {
        if self.angles_deg.is_empty() || self.heights_mm.is_empty() {
            return Err(Error::Config("calibration grid has no angles or heights".into()));
        }
        let mut out = Vec::with_capacity(self.angles_deg.len() * self.heights_mm.len());
        for &a in &self.angles_deg {
            for &h in &self.heights_mm {
                let t = RigTrajectory {
                    angle_deg: a,
                    contact_height_mm: h,
                    step_size_mm: self.step_size_mm,
                    max_displacement_mm: self.max_displacement_mm,
                    dwell_s: self.dwell_s,
                };
                t.validate()?;
                out.push(t);
            }
        }
        if self.randomize {
            out.shuffle(&mut seed::rng(seed::derive(self.seed, "grid/order")));
        }
        Ok(out)
    }
}

/// Provenance of one calibration row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RowMeta {
    pub angle_deg: f64,
    pub height_mm: f64,
    pub depth_mm: f64,
    pub branch: Branch,
}

/// Calibration rows: 4 strain channels → (fx, fy), with per-row metadata.
#[derive(Debug, Clone)]
pub struct CalibrationSet {
    pub data: Dataset,
    pub meta: Vec<RowMeta>,
}

impl CalibrationSet {
    /// CSV with header `ch0,ch1,ch2,ch3,fx,fy,angle_deg,height_mm,branch`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("ch0,ch1,ch2,ch3,fx,fy,angle_deg,height_mm,branch\n");
        for (i, m) in self.meta.iter().enumerate() {
            let x = self.data.input(i);
            let t = self.data.target(i);
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                x[0],
                x[1],
                x[2],
                x[3],
                t[0],
                t[1],
                m.angle_deg,
                m.height_mm,
                m.branch.as_str()
            ));
        }
        out
    }

    /// Inverse of [`CalibrationSet::to_csv`]. Depth is not stored and reads back as NaN.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let header = lines.next().map(|(_, l)| l.trim()).unwrap_or("");
        if header != "ch0,ch1,ch2,ch3,fx,fy,angle_deg,height_mm,branch" {
            return Err(Error::Parse(format!("line 1: unexpected calibration header `{header}`")));
        }
        let mut inputs = Vec::new();
        let mut targets = Vec::new();
        let mut meta = Vec::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 9 {
                return Err(Error::Parse(format!("line {}: expected 9 fields, found {}", i + 1, fields.len())));
            }
            let num = |k: usize| {
                fields[k]
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: field {}: {e}", i + 1, k + 1)))
            };
            for k in 0..4 {
                inputs.push(num(k)?);
            }
            targets.push(num(4)?);
            targets.push(num(5)?);
            let branch = match fields[8] {
                "rest" => Branch::Rest,
                "loading" => Branch::Loading,
                "unloading" => Branch::Unloading,
                other => return Err(Error::Parse(format!("line {}: unknown branch `{other}`", i + 1))),
            };
            meta.push(RowMeta {
                angle_deg: num(6)?,
                height_mm: num(7)?,
                depth_mm: f64::NAN,
                branch,
            });
        }
        Ok(Self {
            data: Dataset::new(inputs, targets, 4, 2)?,
            meta,
        })
    }
}

/// Runs every trial of the grid and reduces each dwell to one row.
///
/// A dwell is summarised by the mean of its last half of frames. The rest
/// pose before the first step is not emitted, so each trial yields
/// `steps` loading rows and `steps` unloading rows.
pub fn build_calibration_dataset(model: &FingertipModel, grid: &CalibrationGrid) -> Result<CalibrationSet> {
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    let mut meta = Vec::new();
    for traj in grid.trials()? {
        // Keyed by content, so visiting order never changes a trial's noise.
        let label = format!("grid/trial/{}/{}", traj.angle_deg, traj.contact_height_mm);
        let run = simulate_indentation(model, &traj, seed::derive(grid.seed, &label))?;
        for step in run.steps.iter().filter(|s| s.branch != Branch::Rest) {
            let keep = step.frame_count.div_ceil(2);
            let start = step.first_frame + step.frame_count - keep;
            let frames = &run.trace.frames()[start..start + keep];
            for c in 0..4 {
                inputs.push(frames.iter().map(|f| f.channels[c]).sum::<f64>() / keep as f64);
            }
            let f = run.forces[step.first_frame];
            targets.extend_from_slice(&[f.fx, f.fy]);
            meta.push(RowMeta {
                angle_deg: traj.angle_deg,
                height_mm: traj.contact_height_mm,
                depth_mm: step.depth_mm,
                branch: step.branch,
            });
        }
    }
    Ok(CalibrationSet {
        data: Dataset::new(inputs, targets, 4, 2)?,
        meta,
    })
}

/// Affine strain → force map `F = matrix · s + offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearBaseline {
    pub matrix: [[f64; 4]; 2],
    pub offset: [f64; 2],
}

impl LinearBaseline {
    /// Minimum-norm least-squares fit over all rows of `data`.
    ///
    /// Collinear channels are tolerated (a noise-free linear fingertip spans
    /// only a 2-D subspace of strain space); the fit is refused when the
    /// centred strain rows span fewer than two dimensions, since a planar
    /// force cannot be resolved from them.
    pub fn fit(data: &Dataset) -> Result<Self> {
        if data.input_dim() != 4 || data.target_dim() != 2 {
            return Err(Error::DimensionMismatch {
                expected: 4,
                got: data.input_dim(),
            });
        }
        let n = data.len();
        if n < 8 {
            return Err(Error::InsufficientSamples { needed: 8, got: n });
        }
        let mut mean = [0.0; 4];
        for i in 0..n {
            for (m, x) in mean.iter_mut().zip(data.input(i)) {
                *m += x / n as f64;
            }
        }
        let mut scale = [0.0f64; 4];
        for i in 0..n {
            for c in 0..4 {
                scale[c] += (data.input(i)[c] - mean[c]).powi(2) / n as f64;
            }
        }
        let scale = scale.map(|v| if v > 0.0 { v.sqrt() } else { 1.0 });

        let x = DMatrix::from_fn(n, 5, |i, j| {
            if j < 4 {
                (data.input(i)[j] - mean[j]) / scale[j]
            } else {
                1.0
            }
        });
        let y = DMatrix::from_fn(n, 2, |i, j| data.target(i)[j]);
        let svd = SVD::new(x, true, true);
        let tol = 1e-10 * svd.singular_values.max() * (n as f64).sqrt();
        // The intercept column is orthogonal to the centred channels.
        let channel_rank = svd.rank(tol).saturating_sub(1);
        if channel_rank < 2 {
            return Err(Error::RankDeficient(format!(
                "centred strain rows span {channel_rank} dimension(s); at least 2 are needed to resolve a planar force"
            )));
        }
        let coef = svd
            .solve(&y, tol)
            .map_err(|e| Error::RankDeficient(e.to_string()))?;

        let mut matrix = [[0.0; 4]; 2];
        let mut offset = [0.0; 2];
        for k in 0..2 {
            offset[k] = coef[(4, k)];
            for c in 0..4 {
                matrix[k][c] = coef[(c, k)] / scale[c];
                offset[k] -= matrix[k][c] * mean[c];
            }
        }
        Ok(Self { matrix, offset })
    }

    pub fn predict(&self, channels: &[f64]) -> [f64; 2] {
        let mut out = self.offset;
        for k in 0..2 {
            out[k] += self.matrix[k].iter().zip(channels).map(|(a, b)| a * b).sum::<f64>();
        }
        out
    }

    /// Mean over rows of the squared 2-vector force error, N².
    pub fn mse(&self, data: &Dataset) -> f64 {
        (0..data.len())
            .map(|i| {
                let p = self.predict(data.input(i));
                let t = data.target(i);
                (p[0] - t[0]).powi(2) + (p[1] - t[1]).powi(2)
            })
            .sum::<f64>()
            / data.len() as f64
    }
}

#[derive(Debug, Clone)]
pub struct BaselineFit {
    pub baseline: LinearBaseline,
    pub train_mse: f64,
    pub test_mse: f64,
}

/// Fits the baseline on the train part of a seeded 80/20 split and scores it on the rest.
pub fn fit_linear_baseline(data: &Dataset, split_seed: u64) -> Result<BaselineFit> {
    if data.len() < 8 {
        return Err(Error::InsufficientSamples { needed: 8, got: data.len() });
    }
    let (train, test) = data.split(TRAIN_FRACTION, split_seed)?;
    let baseline = LinearBaseline::fit(&train)?;
    Ok(BaselineFit {
        train_mse: baseline.mse(&train),
        test_mse: baseline.mse(&test),
        baseline,
    })
}

/// Per-channel z-scoring of raw strain counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: [f64; 4],
    pub scale: [f64; 4],
}

impl Normalization {
    pub fn from_data(data: &Dataset) -> Result<Self> {
        let n = data.len() as f64;
        let mut mean = [0.0; 4];
        let mut var = [0.0; 4];
        for i in 0..data.len() {
            for c in 0..4 {
                mean[c] += data.input(i)[c] / n;
            }
        }
        for i in 0..data.len() {
            for c in 0..4 {
                var[c] += (data.input(i)[c] - mean[c]).powi(2) / n;
            }
        }
        let scale = var.map(|v| if v > 0.0 { v.sqrt() } else { 1.0 });
        let norm = Self { mean, scale };
        norm.validate()?;
        Ok(norm)
    }

    pub fn validate(&self) -> Result<()> {
        if self.mean.iter().chain(&self.scale).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("normalization constants"));
        }
        if self.scale.iter().any(|s| *s <= 0.0) {
            return Err(Error::Config("normalization scale must be positive".into()));
        }
        Ok(())
    }

    pub fn apply(&self, channels: &[f64]) -> [f64; 4] {
        std::array::from_fn(|c| (channels[c] - self.mean[c]) / self.scale[c])
    }
}

/// Trained strain → planar force map.
#[derive(Debug, Clone, PartialEq)]
pub struct ForceEstimator {
    pub model: MlpModel,
    pub norm: Normalization,
    pub force_range: (f64, f64),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Sidecar {
    mean: [f64; 4],
    scale: [f64; 4],
    force_range: (f64, f64),
}

impl ForceEstimator {
    pub fn new(model: MlpModel, norm: Normalization) -> Result<Self> {
        norm.validate()?;
        if model.input_dim() != 4 || model.output_dim() != 2 || model.head() != OutputHead::Linear {
            return Err(Error::Config("force model must be a 4 → … → 2 regressor".into()));
        }
        Ok(Self {
            model,
            norm,
            force_range: FORCE_RANGE_N,
        })
    }

    pub fn estimate(&self, frame: &StrainFrame) -> Result<PlanarForce> {
        self.estimate_channels(&frame.channels)
    }

    pub fn estimate_channels(&self, channels: &[f64; 4]) -> Result<PlanarForce> {
        if channels.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("strain channels"));
        }
        let y = self.model.forward(&self.norm.apply(channels))?;
        PlanarForce::new(y[0], y[1])
    }

    /// Mean squared 2-vector error over `data`, N².
    pub fn mse(&self, data: &Dataset) -> Result<f64> {
        let mut total = 0.0;
        for i in 0..data.len() {
            let x: [f64; 4] = data.input(i).try_into().map_err(|_| Error::DimensionMismatch {
                expected: 4,
                got: data.input_dim(),
            })?;
            let f = self.estimate_channels(&x)?;
            let t = data.target(i);
            total += (f.fx - t[0]).powi(2) + (f.fy - t[1]).powi(2);
        }
        Ok(total / data.len() as f64)
    }

    /// Writes `<stem>.mlpm` (model) and `<stem>.norm.json` (normalisation sidecar).
    pub fn save(&self, model_path: &Path) -> Result<()> {
        format::save_model(model_path, &self.model)?;
        let side = Sidecar {
            mean: self.norm.mean,
            scale: self.norm.scale,
            force_range: self.force_range,
        };
        let path = sidecar_path(model_path);
        let text = serde_json::to_string_pretty(&side).map_err(|e| Error::Parse(e.to_string()))?;
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn load(model_path: &Path) -> Result<Self> {
        let model = format::load_model(model_path)?;
        let path = sidecar_path(model_path);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let side: Sidecar =
            serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        let mut est = Self::new(
            model,
            Normalization {
                mean: side.mean,
                scale: side.scale,
            },
        )?;
        est.force_range = side.force_range;
        Ok(est)
    }
}

pub fn estimate_force(est: &ForceEstimator, frame: &StrainFrame) -> Result<PlanarForce> {
    est.estimate(frame)
}

pub fn sidecar_path(model_path: &Path) -> std::path::PathBuf {
    model_path.with_extension("norm.json")
}

/// Default hyper-parameters for the force regressor.
pub fn default_force_train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        learning_rate: 0.01,
        epochs: 300,
        batch_size: 32,
        seed,
        loss: Loss::MeanSquaredError,
        momentum: 0.9,
        lr_decay: 0.99,
    }
}

#[derive(Debug, Clone)]
pub struct ForceFit {
    pub estimator: ForceEstimator,
    pub train_mse: f64,
    pub test_mse: f64,
    pub loss_history: Vec<f64>,
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
}

/// Splits 80/20, normalises on the train rows only and fits a 4 → 32 → 32 → 2 MLP.
pub fn train_force_estimator(data: &Dataset, cfg: &TrainConfig) -> Result<ForceFit> {
    let (train_rows, test_rows) = data.split_indices(TRAIN_FRACTION, seed::derive(cfg.seed, "force/split"))?;
    let train = data.subset(&train_rows)?;
    let test = data.subset(&test_rows)?;
    let norm = Normalization::from_data(&train)?;

    let mut normalized = Vec::with_capacity(train.len() * 4);
    for i in 0..train.len() {
        normalized.extend(norm.apply(train.input(i)));
    }
    let targets = (0..train.len()).flat_map(|i| train.target(i).to_vec()).collect();
    let train_n = Dataset::new(normalized, targets, 4, 2)?;

    let sizes = [4, FORCE_HIDDEN[0], FORCE_HIDDEN[1], 2];
    let init = MlpModel::new(&sizes, OutputHead::Linear, seed::derive(cfg.seed, "force/init"))?;
    let trained = learn::train(&init, &train_n, cfg)?;
    let estimator = ForceEstimator::new(trained.model, norm)?;
    Ok(ForceFit {
        train_mse: estimator.mse(&train)?,
        test_mse: estimator.mse(&test)?,
        estimator,
        loss_history: trained.loss_history,
        train_rows,
        test_rows,
    })
}
