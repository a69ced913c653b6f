use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::signal::{StrainFrame, StrainTrace, STRAIN_RATE_HZ};

/// Planar contact force in the fingertip frame, newtons.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlanarForce {
    pub fx: f64,
    pub fy: f64,
}

impl PlanarForce {
    pub fn new(fx: f64, fy: f64) -> Result<Self> {
        if !fx.is_finite() || !fy.is_finite() {
            return Err(Error::NonFinite("planar force"));
        }
        Ok(Self { fx, fy })
    }

    /// Force of `magnitude` newtons pointing at `angle_deg` from +x.
    pub fn from_polar(magnitude: f64, angle_deg: f64) -> Self {
        let a = angle_deg.to_radians();
        Self {
            fx: magnitude * a.cos(),
            fy: magnitude * a.sin(),
        }
    }

    pub fn magnitude(&self) -> f64 {
        self.fx.hypot(self.fy)
    }
}

/// Static response of the four strain gauges to a planar contact force.
///
/// Gauge `c` reads
///
/// ```text
/// lever(h) * (1 + a * cos 2θ) * (G[c] · F + k[c] * |F_perp(c)|) + offset + noise
/// ```
///
/// where `G` is the 4×2 projection matrix, `F_perp(c)` the force component
/// perpendicular to the gauge's bending axis, `θ` the force direction, `a` the
/// elastomer anisotropy and `lever(h) = 1 + s * (h - 2.5)` scales the response
/// with contact height. At a fixed angle and height the response is exactly
/// linear in force magnitude; across angles the map is non-linear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FingertipModel {
    /// Counts per newton; rows are gauges on the +x, +y, −x, −y faces.
    pub channel_gains: [[f64; 2]; 4],
    /// Indenter force per millimetre of indentation, N/mm.
    pub stiffness: f64,
    /// Retraction-branch offset as a fraction of the trial's peak strain.
    pub hysteresis_ratio: f64,
    /// Per-frame Gaussian noise, counts.
    pub noise_sigma: f64,
    /// Counts per newton of perpendicular force magnitude.
    pub perpendicular_coupling: [f64; 4],
    /// Fractional gain change per millimetre of contact height.
    pub height_sensitivity: f64,
    /// Relative gain swing between the x and y loading directions.
    #[serde(default)]
    pub anisotropy: f64,
}

/// Reference contact height at which `lever(h) == 1`.
const LEVER_REFERENCE_MM: f64 = 2.5;

impl Default for FingertipModel {
    fn default() -> Self {
        let s = [950.0, 1080.0, 1010.0, 920.0];
        Self {
            channel_gains: [[s[0], 0.0], [0.0, s[1]], [-s[2], 0.0], [0.0, -s[3]]],
            // 30 mm of travel maps onto the 0–5 N characterisation range.
            stiffness: 5.0 / 30.0,
            hysteresis_ratio: 0.03,
            noise_sigma: 12.0,
            perpendicular_coupling: [0.45 * s[0], 0.45 * s[1], 0.45 * s[2], 0.45 * s[3]],
            height_sensitivity: 0.01,
            anisotropy: 0.3,
        }
    }
}

impl FingertipModel {
    /// Noise-free, hysteresis-free model whose strain is a single linear map of force.
    pub fn ideal_linear() -> Self {
        Self {
            hysteresis_ratio: 0.0,
            noise_sigma: 0.0,
            perpendicular_coupling: [0.0; 4],
            height_sensitivity: 0.0,
            anisotropy: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.stiffness > 0.0) || !self.stiffness.is_finite() {
            return Err(Error::Config("fingertip stiffness must be positive".into()));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::Config("noise_sigma must be >= 0".into()));
        }
        if !(0.0..=0.2).contains(&self.hysteresis_ratio) {
            return Err(Error::Config("hysteresis_ratio must lie in [0, 0.2]".into()));
        }
        if !(self.anisotropy.abs() < 1.0) {
            return Err(Error::Config("anisotropy must lie in (-1, 1)".into()));
        }
        let finite = self
            .channel_gains
            .iter()
            .flatten()
            .chain(&self.perpendicular_coupling)
            .chain([&self.height_sensitivity])
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("fingertip model constants"));
        }
        Ok(())
    }

    /// Noise-free loading-branch strain for `force` applied at `height_mm`.
    pub fn strain(&self, force: PlanarForce, height_mm: f64) -> [f64; 4] {
        let lever = 1.0 + self.height_sensitivity * (height_mm - LEVER_REFERENCE_MM);
        let m2 = force.fx * force.fx + force.fy * force.fy;
        let lever = if m2 > 0.0 {
            lever * (1.0 + self.anisotropy * (force.fx * force.fx - force.fy * force.fy) / m2)
        } else {
            lever
        };
        let mut out = [0.0; 4];
        for (c, o) in out.iter_mut().enumerate() {
            let [gx, gy] = self.channel_gains[c];
            // Gauges 0 and 2 bend about x, 1 and 3 about y.
            let perp = if c % 2 == 0 { force.fy } else { force.fx };
            *o = lever * (gx * force.fx + gy * force.fy + self.perpendicular_coupling[c] * perp.abs());
        }
        out
    }
}

/// One press-and-retract trial of the indentation rig.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigTrajectory {
    /// Indentation direction in the XY plane, degrees in [−50, 50].
    pub angle_deg: f64,
    /// Contact height below the fingernail tip, mm in [0, 5].
    pub contact_height_mm: f64,
    pub step_size_mm: f64,
    pub max_displacement_mm: f64,
    /// Pause at every step, seconds.
    pub dwell_s: f64,
}

impl RigTrajectory {
    pub fn new(angle_deg: f64, contact_height_mm: f64) -> Self {
        Self {
            angle_deg,
            contact_height_mm,
            step_size_mm: 1.5,
            max_displacement_mm: 30.0,
            dwell_s: 8.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(-50.0..=50.0).contains(&self.angle_deg) {
            return Err(Error::Config(format!(
                "rig angle {} outside [-50, 50] degrees",
                self.angle_deg
            )));
        }
        if !(0.0..=5.0).contains(&self.contact_height_mm) {
            return Err(Error::Config(format!(
                "contact height {} outside [0, 5] mm",
                self.contact_height_mm
            )));
        }
        if !(self.step_size_mm > 0.0) {
            return Err(Error::Config("step_size must be positive".into()));
        }
        if !(self.max_displacement_mm >= self.step_size_mm) {
            return Err(Error::Config("max_displacement must be >= step_size".into()));
        }
        if !(self.dwell_s * STRAIN_RATE_HZ >= 1.0) {
            return Err(Error::Config("dwell must cover at least one strain frame".into()));
        }
        Ok(())
    }

    /// Number of indentation steps to reach the maximum displacement.
    pub fn steps(&self) -> usize {
        (self.max_displacement_mm / self.step_size_mm + 1e-9).floor() as usize
    }

    pub fn frames_per_dwell(&self) -> usize {
        (self.dwell_s * STRAIN_RATE_HZ).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// The untouched pose before the first step.
    Rest,
    Loading,
    Unloading,
}

impl Branch {
    pub fn as_str(self) -> &'static str {
        match self {
            Branch::Rest => "rest",
            Branch::Loading => "loading",
            Branch::Unloading => "unloading",
        }
    }
}

/// One dwell of the rig: a fixed depth held for `frame_count` strain frames.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndentStep {
    pub depth_mm: f64,
    pub branch: Branch,
    pub first_frame: usize,
    pub frame_count: usize,
}

#[derive(Debug, Clone)]
pub struct Indentation {
    pub trace: StrainTrace,
    /// Ground-truth force for each frame of `trace`.
    pub forces: Vec<PlanarForce>,
    pub steps: Vec<IndentStep>,
}

/// Simulates one press-then-retract trial at 15 Hz.
///
/// The rig rests at depth 0, steps in to `steps × step_size`, then retracts
/// along the same path back to 0. Every retraction frame carries an extra
/// `hysteresis_ratio × peak strain` on each channel.
pub fn simulate_indentation(
    model: &FingertipModel,
    traj: &RigTrajectory,
    seed: u64,
) -> Result<Indentation> {
    model.validate()?;
    traj.validate()?;
    let n = traj.steps();
    let per_dwell = traj.frames_per_dwell();

    let mut schedule = vec![(0.0, Branch::Rest)];
    schedule.extend((1..=n).map(|k| (k as f64 * traj.step_size_mm, Branch::Loading)));
    schedule.extend((0..n).rev().map(|k| (k as f64 * traj.step_size_mm, Branch::Unloading)));

    let force_at = |depth: f64| PlanarForce::from_polar(model.stiffness * depth, traj.angle_deg);
    let peak = model.strain(force_at(n as f64 * traj.step_size_mm), traj.contact_height_mm);

    let mut rng = seed::rng(seed);
    let noise = Normal::new(0.0, model.noise_sigma)
        .map_err(|e| Error::Config(format!("noise_sigma: {e}")))?;

    let total = schedule.len() * per_dwell;
    let mut frames = Vec::with_capacity(total);
    let mut forces = Vec::with_capacity(total);
    let mut steps = Vec::with_capacity(schedule.len());
    for (depth, branch) in schedule {
        let force = force_at(depth);
        let mut clean = model.strain(force, traj.contact_height_mm);
        if branch == Branch::Unloading {
            for (c, p) in clean.iter_mut().zip(peak) {
                *c += model.hysteresis_ratio * p;
            }
        }
        steps.push(IndentStep {
            depth_mm: depth,
            branch,
            first_frame: frames.len(),
            frame_count: per_dwell,
        });
        for _ in 0..per_dwell {
            let mut ch = clean;
            if model.noise_sigma > 0.0 {
                for c in ch.iter_mut() {
                    *c += noise.sample(&mut rng);
                }
            }
            let t = frames.len() as f64 / STRAIN_RATE_HZ;
            frames.push(StrainFrame::new(ch, t)?);
            forces.push(force);
        }
    }

    Ok(Indentation {
        trace: StrainTrace::new(frames, STRAIN_RATE_HZ)?,
        forces,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet() -> FingertipModel {
        FingertipModel {
            noise_sigma: 0.0,
            hysteresis_ratio: 0.0,
            ..FingertipModel::default()
        }
    }

    #[test]
    fn rest_step_is_zero_force_and_noise_only() {
        let run = simulate_indentation(&FingertipModel::default(), &RigTrajectory::new(20.0, 1.0), 5)
            .unwrap();
        let rest = run.steps[0];
        assert_eq!(rest.branch, Branch::Rest);
        assert_eq!(rest.depth_mm, 0.0);
        for i in rest.first_frame..rest.first_frame + rest.frame_count {
            assert_eq!(run.forces[i], PlanarForce::default());
            // Pure noise: well inside 6 sigma.
            assert!(run.trace.frames()[i].channels.iter().all(|c| c.abs() < 6.0 * 12.0));
        }
    }

    #[test]
    fn force_follows_stiffness_and_angle() {
        let model = FingertipModel {
            stiffness: 1.0,
            ..quiet()
        };
        let traj = RigTrajectory {
            step_size_mm: 1.0,
            max_displacement_mm: 3.0,
            ..RigTrajectory::new(0.0, 2.0)
        };
        let run = simulate_indentation(&model, &traj, 0).unwrap();
        let deepest = run.steps.iter().find(|s| s.depth_mm == 3.0).unwrap();
        let f = run.forces[deepest.first_frame];
        assert!((f.fx - 3.0).abs() < 1e-12 && f.fy.abs() < 1e-12);
    }

    #[test]
    fn schedule_shape() {
        let run = simulate_indentation(&quiet(), &RigTrajectory::new(0.0, 0.0), 0).unwrap();
        assert_eq!(run.steps.len(), 41);
        assert_eq!(run.steps.iter().filter(|s| s.branch == Branch::Loading).count(), 20);
        assert_eq!(run.steps.iter().filter(|s| s.branch == Branch::Unloading).count(), 20);
        assert_eq!(run.trace.len(), 41 * 120);
        assert_eq!(run.steps.last().unwrap().depth_mm, 0.0);
    }

    #[test]
    fn noise_free_strain_is_linear_in_force_per_trial() {
        for angle in [-50.0, -20.0, 0.0, 30.0, 50.0] {
            for height in [0.0, 2.0, 5.0] {
                let run = simulate_indentation(&quiet(), &RigTrajectory::new(angle, height), 1).unwrap();
                let mags: Vec<f64> = run.forces.iter().map(|f| f.magnitude()).collect();
                for c in 0..4 {
                    let ys: Vec<f64> = run.trace.frames().iter().map(|f| f.channels[c]).collect();
                    let (slope, icpt) = fit_line(&mags, &ys);
                    let scale = ys.iter().fold(1.0f64, |m, y| m.max(y.abs()));
                    for (x, y) in mags.iter().zip(&ys) {
                        assert!((slope * x + icpt - y).abs() < 1e-9 * scale);
                    }
                }
            }
        }
    }

    #[test]
    fn hysteresis_offset_is_ratio_times_peak() {
        let model = FingertipModel {
            noise_sigma: 0.0,
            hysteresis_ratio: 0.1,
            ..FingertipModel::default()
        };
        let traj = RigTrajectory::new(-30.0, 3.0);
        let run = simulate_indentation(&model, &traj, 2).unwrap();
        let peak = model.strain(PlanarForce::from_polar(5.0, -30.0), 3.0);
        let frame = |s: &IndentStep| run.trace.frames()[s.first_frame].channels;
        for load in run.steps.iter().filter(|s| s.branch != Branch::Unloading) {
            let Some(unload) = run
                .steps
                .iter()
                .find(|s| s.branch == Branch::Unloading && s.depth_mm == load.depth_mm)
            else {
                continue;
            };
            let (a, b) = (frame(load), frame(unload));
            for c in 0..4 {
                assert!((b[c] - a[c] - 0.1 * peak[c]).abs() < 1e-9 * peak[c].abs().max(1.0));
            }
        }
    }

    #[test]
    fn seeded_runs_are_bit_identical() {
        let m = FingertipModel::default();
        let t = RigTrajectory::new(10.0, 4.0);
        let a = simulate_indentation(&m, &t, 77).unwrap();
        let b = simulate_indentation(&m, &t, 77).unwrap();
        let c = simulate_indentation(&m, &t, 78).unwrap();
        assert_eq!(a.trace, b.trace);
        assert_ne!(a.trace, c.trace);
    }

    #[test]
    fn invalid_trajectories_rejected() {
        let m = FingertipModel::default();
        assert!(simulate_indentation(&m, &RigTrajectory::new(60.0, 0.0), 0).is_err());
        assert!(simulate_indentation(&m, &RigTrajectory::new(0.0, 6.0), 0).is_err());
        let t = RigTrajectory {
            max_displacement_mm: 1.0,
            ..RigTrajectory::new(0.0, 0.0)
        };
        assert!(simulate_indentation(&m, &t, 0).is_err());
        let bad = FingertipModel {
            stiffness: 0.0,
            ..FingertipModel::default()
        };
        assert!(simulate_indentation(&bad, &RigTrajectory::new(0.0, 0.0), 0).is_err());
    }

    fn fit_line(x: &[f64], y: &[f64]) -> (f64, f64) {
        let n = x.len() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
        let slope = sxy / sxx;
        (slope, my - slope * mx)
    }
}
