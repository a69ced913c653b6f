//! Task pipelines over simulated plants: force-threshold pinching, cup
//! counting and unstacking, and shake-classify-select.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::force::ForceEstimator;
use crate::seed::{self, Rng};
use crate::signal::StrainFrame;
use crate::sim::{synthesize_cup_slide, synthesize_shaking, BoxContent, FingertipModel, PlanarForce};
use crate::vibro::{classify_stream, detect_cup_edges, DetectConfig, EventWindow, ShakeClassifier, VoteResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PinchPhase {
    Approaching,
    Closing,
    Holding,
    Lifting,
    Done,
    Failed,
}

impl PinchPhase {
    pub fn is_terminal(self) -> bool {
        matches!(self, PinchPhase::Done | PinchPhase::Failed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PinchConfig {
    /// F_th, newtons.
    pub force_threshold: f64,
    pub step_size_mm: f64,
    pub damage_force: f64,
    pub hold_force_min: f64,
    /// Control ticks spent lifting before the grasp counts as done.
    pub lift_ticks: u32,
}

impl PinchConfig {
    pub fn new(force_threshold: f64, step_size_mm: f64, damage_force: f64, hold_force_min: f64) -> Result<Self> {
        let cfg = Self {
            force_threshold,
            step_size_mm,
            damage_force,
            hold_force_min,
            lift_ticks: 15,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.force_threshold, self.step_size_mm, self.damage_force, self.hold_force_min]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("pinch config"));
        }
        if !(0.0 < self.hold_force_min && self.hold_force_min <= self.force_threshold && self.force_threshold < self.damage_force) {
            return Err(Error::Config(format!(
                "pinch config needs 0 < hold_force_min ({}) <= force_threshold ({}) < damage_force ({})",
                self.hold_force_min, self.force_threshold, self.damage_force
            )));
        }
        if !(self.step_size_mm > 0.0) {
            return Err(Error::Config("step_size_mm must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PinchState {
    pub phase: PinchPhase,
    pub aperture_mm: f64,
    /// Last measured force magnitude, newtons.
    pub force: f64,
    pub ticks_in_phase: u32,
}

impl PinchState {
    pub fn new(aperture_mm: f64) -> Self {
        Self {
            phase: PinchPhase::Approaching,
            aperture_mm,
            force: 0.0,
            ticks_in_phase: 0,
        }
    }

    fn enter(self, phase: PinchPhase) -> Self {
        Self {
            phase,
            ticks_in_phase: 0,
            ..self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PinchCommand {
    /// Close the aperture by this many millimetres.
    Close(f64),
    Hold,
    Lift,
    Abort,
}

/// One 15 Hz controller update given the measured force magnitude.
pub fn pinch_step(state: PinchState, force: f64, cfg: &PinchConfig) -> Result<(PinchState, PinchCommand)> {
    if state.phase.is_terminal() {
        return Err(Error::Contract(format!("pinch_step called in terminal phase {:?}", state.phase)));
    }
    if !force.is_finite() {
        return Err(Error::NonFinite("measured pinch force"));
    }
    let s = PinchState {
        force,
        ticks_in_phase: state.ticks_in_phase + 1,
        ..state
    };
    if force > cfg.damage_force {
        return Ok((s.enter(PinchPhase::Failed), PinchCommand::Abort));
    }
    let close = |mut s: PinchState| {
        s.aperture_mm -= cfg.step_size_mm;
        (s, PinchCommand::Close(cfg.step_size_mm))
    };
    Ok(match state.phase {
        PinchPhase::Approaching => close(s.enter(PinchPhase::Closing)),
        PinchPhase::Closing if force >= cfg.force_threshold => (s.enter(PinchPhase::Holding), PinchCommand::Hold),
        PinchPhase::Closing => close(s),
        PinchPhase::Holding => (s.enter(PinchPhase::Lifting), PinchCommand::Lift),
        PinchPhase::Lifting if force < cfg.hold_force_min => (s.enter(PinchPhase::Failed), PinchCommand::Abort),
        PinchPhase::Lifting if s.ticks_in_phase >= cfg.lift_ticks => (s.enter(PinchPhase::Done), PinchCommand::Hold),
        PinchPhase::Lifting => (s, PinchCommand::Lift),
        PinchPhase::Done | PinchPhase::Failed => unreachable!(),
    })
}

/// A deformable object squeezed between two fingers: `force = stiffness × max(0, width − aperture)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PinchPlant {
    pub name: String,
    /// N/mm.
    pub stiffness: f64,
    pub damage_force: f64,
    pub hold_force_min: f64,
    pub width_mm: (f64, f64),
    /// F_th used for this object.
    pub force_threshold: f64,
    pub step_size_mm: f64,
}

impl PinchPlant {
    pub fn tofu() -> Self {
        Self {
            name: "tofu".into(),
            stiffness: 0.8,
            damage_force: 1.0,
            hold_force_min: 0.2,
            width_mm: (20.0, 30.0),
            force_threshold: 0.5,
            step_size_mm: 0.05,
        }
    }

    pub fn chip() -> Self {
        Self {
            name: "chip".into(),
            stiffness: 2.0,
            damage_force: 0.3,
            hold_force_min: 0.04,
            width_mm: (1.0, 3.0),
            force_threshold: 0.1,
            step_size_mm: 0.01,
        }
    }

    pub fn config(&self) -> Result<PinchConfig> {
        PinchConfig::new(self.force_threshold, self.step_size_mm, self.damage_force, self.hold_force_min)
    }

    pub fn force_at(&self, width_mm: f64, aperture_mm: f64) -> f64 {
        self.stiffness * (width_mm - aperture_mm).max(0.0)
    }
}

/// Turns the true contact force into what the controller sees.
pub trait ForceSensor {
    fn measure(&self, force: PlanarForce, contact_height_mm: f64, rng: &mut Rng) -> Result<PlanarForce>;
}

/// Reports the true force.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleSensor;

impl ForceSensor for OracleSensor {
    fn measure(&self, force: PlanarForce, _: f64, _: &mut Rng) -> Result<PlanarForce> {
        Ok(force)
    }
}

/// Simulated strain frame (with gauge noise) fed through a trained estimator.
#[derive(Debug, Clone, Copy)]
pub struct StrainSensor<'a> {
    pub fingertip: &'a FingertipModel,
    pub estimator: &'a ForceEstimator,
}

impl ForceSensor for StrainSensor<'_> {
    fn measure(&self, force: PlanarForce, contact_height_mm: f64, rng: &mut Rng) -> Result<PlanarForce> {
        let mut channels = self.fingertip.strain(force, contact_height_mm);
        if self.fingertip.noise_sigma > 0.0 {
            let n = Normal::new(0.0, self.fingertip.noise_sigma).map_err(|e| Error::Config(e.to_string()))?;
            channels.iter_mut().for_each(|c| *c += n.sample(rng));
        }
        self.estimator.estimate(&StrainFrame::new(channels, 0.0)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PinchOutcome {
    Success,
    Crushed,
    Dropped,
}

/// Frames averaged with the fingers open to zero the sensor before closing.
pub const TARE_FRAMES: usize = 8;
/// Closing budget per trial, control ticks.
pub const MAX_PINCH_TICKS: u32 = 3000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PinchTrial {
    pub object: String,
    pub seed: u64,
    pub width_mm: f64,
    pub contact_angle_deg: f64,
    pub contact_height_mm: f64,
    pub ticks: u32,
    pub final_phase: PinchPhase,
    pub final_force: f64,
    pub peak_force: f64,
    pub outcome: PinchOutcome,
}

/// Closes the loop at the strain rate until the controller lifts, aborts or runs out of ticks.
///
/// Success iff the object was lifted with `hold_force_min <= force <= damage_force`;
/// any tick above `damage_force` is a crush.
pub fn run_pinch_trial(plant: &PinchPlant, sensor: &dyn ForceSensor, cfg: &PinchConfig, seed: u64) -> Result<PinchTrial> {
    cfg.validate()?;
    let mut rng = seed::rng(seed);
    let width = rng.random_range(plant.width_mm.0..=plant.width_mm.1);
    let gap = rng.random_range(1.0..3.0);
    let angle = rng.random_range(-20.0..20.0);
    let height = rng.random_range(1.0..4.0);

    let mut tare = (0.0, 0.0);
    for _ in 0..TARE_FRAMES {
        let f = sensor.measure(PlanarForce::default(), height, &mut rng)?;
        tare.0 += f.fx / TARE_FRAMES as f64;
        tare.1 += f.fy / TARE_FRAMES as f64;
    }

    let mut state = PinchState::new(width + gap);
    let mut peak = 0.0f64;
    let mut ticks = 0;
    let mut true_force = 0.0;
    while !state.phase.is_terminal() && ticks < MAX_PINCH_TICKS {
        true_force = plant.force_at(width, state.aperture_mm);
        peak = peak.max(true_force);
        let f = sensor.measure(PlanarForce::from_polar(true_force, angle), height, &mut rng)?;
        let measured = (f.fx - tare.0).hypot(f.fy - tare.1);
        state = pinch_step(state, measured, cfg)?.0;
        ticks += 1;
    }
    true_force = if state.phase.is_terminal() {
        true_force
    } else {
        plant.force_at(width, state.aperture_mm)
    };
    let outcome = if peak > plant.damage_force {
        PinchOutcome::Crushed
    } else if state.phase == PinchPhase::Done && (plant.hold_force_min..=plant.damage_force).contains(&true_force) {
        PinchOutcome::Success
    } else {
        PinchOutcome::Dropped
    };
    Ok(PinchTrial {
        object: plant.name.clone(),
        seed,
        width_mm: width,
        contact_angle_deg: angle,
        contact_height_mm: height,
        ticks,
        final_phase: state.phase,
        final_force: true_force,
        peak_force: peak,
        outcome,
    })
}

/// Grasp depth below the detected lip, mm.
pub const ENGAGE_OFFSET_MM: f64 = 2.0;
pub const UNSTACK_GRASP_FORCE_N: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnstackPlan {
    pub target: usize,
    pub grasp_height_mm: f64,
    pub grasp_force_n: f64,
    pub edges_used: Vec<f64>,
}

/// Grasp `ENGAGE_OFFSET_MM` below the `target`-th detected lip (counted from the top).
pub fn plan_unstack(edges: &[EventWindow], target: usize) -> Result<UnstackPlan> {
    if target == 0 {
        return Err(Error::Contract("unstack target must be >= 1".into()));
    }
    if target > edges.len() {
        return Err(Error::InsufficientEdges {
            target,
            detected: edges.len(),
        });
    }
    let heights = edges
        .iter()
        .map(|e| e.z_at_onset.ok_or_else(|| Error::Contract("edge has no height".into())))
        .collect::<Result<Vec<f64>>>()?;
    Ok(UnstackPlan {
        target,
        grasp_height_mm: heights[target - 1] - ENGAGE_OFFSET_MM,
        grasp_force_n: UNSTACK_GRASP_FORCE_N,
        edges_used: heights[..target].to_vec(),
    })
}

/// A nested stack slid over from above; lip `k` (from the top) sits at
/// `top_lip − k × lip_spacing`, heights measured from the end of the slide.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CupScenario {
    pub cups: usize,
    pub lip_spacing_mm: f64,
    pub travel_mm: f64,
    pub slide_speed: f64,
    pub noise_floor: f64,
    /// Range the top lip height is drawn from.
    pub top_lip_mm: (f64, f64),
}

impl Default for CupScenario {
    fn default() -> Self {
        Self {
            cups: 5,
            lip_spacing_mm: 7.0,
            travel_mm: 21.0,
            slide_speed: 5.0,
            noise_floor: 0.01,
            top_lip_mm: (15.0, 20.5),
        }
    }
}

impl CupScenario {
    pub fn validate(&self) -> Result<()> {
        if self.cups == 0 || !(self.lip_spacing_mm > 0.0) || !(self.travel_mm > 0.0) || !(self.slide_speed > 0.0) {
            return Err(Error::Config("cup scenario needs cups >= 1 and positive spacing, travel, speed".into()));
        }
        let (lo, hi) = self.top_lip_mm;
        if !(0.0 <= lo && lo <= hi && hi <= self.travel_mm) {
            return Err(Error::Config("top lip range must lie inside the travel".into()));
        }
        if !(self.noise_floor >= 0.0) {
            return Err(Error::Config("noise floor must be >= 0".into()));
        }
        Ok(())
    }

    /// All lip heights, top first; lips below the slide end are negative.
    pub fn lips(&self, top_lip: f64) -> Vec<f64> {
        (0..self.cups).map(|k| top_lip - k as f64 * self.lip_spacing_mm).collect()
    }

    /// Threshold calibrated on a contact-free recording at this noise floor.
    pub fn calibrate_detector(&self, seed: u64) -> Result<DetectConfig> {
        let (noise, _) = synthesize_cup_slide(&[], self.slide_speed, self.travel_mm, self.noise_floor, seed)?;
        DetectConfig::calibrate(&noise)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CupTrial {
    pub seed: u64,
    pub target: usize,
    pub top_lip_mm: f64,
    pub true_edges_mm: Vec<f64>,
    pub detected_edges_mm: Vec<f64>,
    pub grasp_height_mm: Option<f64>,
    pub lifted: usize,
    pub counting_ok: bool,
    pub planning_ok: bool,
    pub lift_ok: bool,
    pub success: bool,
}

/// Detected lip must be this close to the true one for the plan to count as correct, mm.
pub const PLAN_TOLERANCE_MM: f64 = 1.0;

/// Slide → detect → plan → lift. A lift takes every cup whose lip is above the grasp.
pub fn run_cup_trial(scenario: &CupScenario, target: usize, cfg: &DetectConfig, seed: u64) -> Result<CupTrial> {
    scenario.validate()?;
    cfg.validate()?;
    let mut rng = seed::rng(seed);
    let top = rng.random_range(scenario.top_lip_mm.0..=scenario.top_lip_mm.1);
    let lips = scenario.lips(top);
    let in_travel: Vec<f64> = lips.iter().copied().filter(|z| (0.0..=scenario.travel_mm).contains(z)).collect();
    let mut ascending = in_travel.clone();
    ascending.reverse();
    let (trace, z) = synthesize_cup_slide(
        &ascending,
        scenario.slide_speed,
        scenario.travel_mm,
        scenario.noise_floor,
        rng.random(),
    )?;
    let events = detect_cup_edges(&trace, &z, cfg)?;
    let detected: Vec<f64> = events.iter().filter_map(|e| e.z_at_onset).collect();

    let plan = plan_unstack(&events, target).ok();
    let grasp = plan.as_ref().map(|p| p.grasp_height_mm);
    let lifted = grasp.map_or(0, |g| lips.iter().filter(|&&l| l > g).count());
    let counting_ok = detected.len() == in_travel.len();
    let planning_ok = plan.is_some()
        && lips
            .get(target - 1)
            .is_some_and(|l| (detected[target - 1] - l).abs() < PLAN_TOLERANCE_MM);
    let lift_ok = lifted == target;
    Ok(CupTrial {
        seed,
        target,
        top_lip_mm: top,
        true_edges_mm: in_travel,
        detected_edges_mm: detected,
        grasp_height_mm: grasp,
        lifted,
        counting_ok,
        planning_ok,
        lift_ok,
        success: counting_ok && lift_ok,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShakeTaskConfig {
    pub duration_s: f64,
    pub shake_freq: f64,
    pub window_rate: f64,
}

impl Default for ShakeTaskConfig {
    fn default() -> Self {
        Self {
            duration_s: 5.6,
            shake_freq: 0.67,
            window_rate: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    Selected(usize),
    /// No box voted for the target.
    Absent,
    /// More than one box voted for the target.
    Ambiguous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxDecision {
    pub votes: Vec<VoteResult>,
    pub target: BoxContent,
    pub selection: Selection,
}

impl BoxDecision {
    /// A box matches when its vote is untied and its final class is the target.
    pub fn from_votes(votes: Vec<VoteResult>, target: BoxContent) -> Self {
        let matches: Vec<usize> = votes
            .iter()
            .enumerate()
            .filter(|(_, v)| !v.tie && v.final_class == target.index())
            .map(|(i, _)| i)
            .collect();
        let selection = match matches.as_slice() {
            [] => Selection::Absent,
            [one] => Selection::Selected(*one),
            _ => Selection::Ambiguous,
        };
        Self {
            votes,
            target,
            selection,
        }
    }

    pub fn selected(&self) -> Option<usize> {
        match self.selection {
            Selection::Selected(i) => Some(i),
            _ => None,
        }
    }
}

/// Shakes every box in turn, votes over its stream, and picks the one holding `target`.
pub fn run_shake_trial(
    boxes: &[BoxContent],
    target: BoxContent,
    clf: &ShakeClassifier,
    cfg: &ShakeTaskConfig,
    seed: u64,
) -> Result<BoxDecision> {
    let mut votes = Vec::with_capacity(boxes.len());
    for (i, &content) in boxes.iter().enumerate() {
        let trace = synthesize_shaking(content, cfg.duration_s, cfg.shake_freq, seed::derive(seed, &format!("box/{i}")))?;
        votes.push(classify_stream(clf, &trace, cfg.window_rate)?);
    }
    Ok(BoxDecision::from_votes(votes, target))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShakeTrial {
    pub seed: u64,
    pub boxes: Vec<BoxContent>,
    pub target: BoxContent,
    pub final_classes: Vec<usize>,
    pub selection: Selection,
    pub correct: bool,
}

/// Trial `i` of a batch: the first half targets rubber bands, the second
/// screws; the other content goes in the second box, box order drawn from the seed.
pub fn shake_trial_setup(i: usize, n: usize, seed: u64) -> ([BoxContent; 2], BoxContent) {
    let (target, other) = if i < n.div_ceil(2) {
        (BoxContent::RubberBands, BoxContent::Screws)
    } else {
        (BoxContent::Screws, BoxContent::RubberBands)
    };
    let swap = seed::rng(seed::derive(seed, "box/order")).random_bool(0.5);
    (if swap { [other, target] } else { [target, other] }, target)
}

pub fn run_shake_batch_trial(i: usize, n: usize, clf: &ShakeClassifier, cfg: &ShakeTaskConfig, seed: u64) -> Result<ShakeTrial> {
    let (boxes, target) = shake_trial_setup(i, n, seed);
    let decision = run_shake_trial(&boxes, target, clf, cfg, seed)?;
    let truth = boxes.iter().position(|&b| b == target);
    Ok(ShakeTrial {
        seed,
        boxes: boxes.to_vec(),
        target,
        final_classes: decision.votes.iter().map(|v| v.final_class).collect(),
        selection: decision.selection,
        correct: decision.selected() == truth,
    })
}

/// One JSON object per line.
pub fn to_json_lines<T: Serialize>(records: &[T]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("trial records are plain data"));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vibro::majority_vote;

    fn tofu_cfg() -> PinchConfig {
        PinchConfig::new(0.5, 0.05, 1.0, 0.2).unwrap()
    }

    fn closing(aperture: f64) -> PinchState {
        PinchState {
            phase: PinchPhase::Closing,
            ..PinchState::new(aperture)
        }
    }

    #[test]
    fn pinch_step_examples() {
        let cfg = tofu_cfg();
        let (s, c) = pinch_step(closing(10.0), 0.3, &cfg).unwrap();
        assert_eq!(c, PinchCommand::Close(0.05));
        assert!((s.aperture_mm - 9.95).abs() < 1e-12);
        let (s, c) = pinch_step(closing(10.0), 0.5, &cfg).unwrap();
        assert_eq!((s.phase, c), (PinchPhase::Holding, PinchCommand::Hold));
        for phase in [PinchPhase::Approaching, PinchPhase::Closing, PinchPhase::Holding, PinchPhase::Lifting] {
            let st = PinchState { phase, ..PinchState::new(5.0) };
            let (s, c) = pinch_step(st, 2.0, &cfg).unwrap();
            assert_eq!((s.phase, c), (PinchPhase::Failed, PinchCommand::Abort));
        }
    }

    #[test]
    fn terminal_phase_is_a_contract_error() {
        for phase in [PinchPhase::Done, PinchPhase::Failed] {
            let st = PinchState { phase, ..PinchState::new(5.0) };
            assert!(matches!(pinch_step(st, 0.0, &tofu_cfg()), Err(Error::Contract(_))));
        }
    }

    #[test]
    fn never_closes_at_or_above_threshold() {
        let cfg = tofu_cfg();
        for phase in [PinchPhase::Approaching, PinchPhase::Closing, PinchPhase::Holding, PinchPhase::Lifting] {
            for i in 0..=2000 {
                let f = i as f64 * 0.001;
                let st = PinchState { phase, ..PinchState::new(5.0) };
                let (_, c) = pinch_step(st, f, &cfg).unwrap();
                if phase != PinchPhase::Approaching && f >= cfg.force_threshold {
                    assert!(!matches!(c, PinchCommand::Close(_)), "{phase:?} {f}");
                }
            }
        }
    }

    #[test]
    fn transitions_follow_the_chain() {
        let cfg = tofu_cfg();
        let legal = |a: PinchPhase, b: PinchPhase| {
            a == b
                || b == PinchPhase::Failed
                || matches!(
                    (a, b),
                    (PinchPhase::Approaching, PinchPhase::Closing)
                        | (PinchPhase::Closing, PinchPhase::Holding)
                        | (PinchPhase::Holding, PinchPhase::Lifting)
                        | (PinchPhase::Lifting, PinchPhase::Done)
                )
        };
        let mut rng = seed::rng(1);
        for _ in 0..200 {
            let mut s = PinchState::new(10.0);
            for _ in 0..100 {
                if s.phase.is_terminal() {
                    break;
                }
                let next = pinch_step(s, rng.random_range(0.0..1.2), &cfg).unwrap().0;
                assert!(legal(s.phase, next.phase), "{:?} -> {:?}", s.phase, next.phase);
                s = next;
            }
        }
    }

    #[test]
    fn config_invariant_is_enforced() {
        assert!(PinchConfig::new(1.5, 0.05, 1.0, 0.2).is_err());
        assert!(PinchConfig::new(0.5, 0.05, 1.0, 0.6).is_err());
        assert!(PinchConfig::new(0.5, 0.05, 1.0, 0.0).is_err());
        assert!(PinchConfig::new(0.5, 0.0, 1.0, 0.2).is_err());
    }

    #[test]
    fn oracle_pinch_never_crushes() {
        for plant in [PinchPlant::tofu(), PinchPlant::chip()] {
            let cfg = plant.config().unwrap();
            for s in 0..100 {
                let t = run_pinch_trial(&plant, &OracleSensor, &cfg, s).unwrap();
                assert_eq!(t.outcome, PinchOutcome::Success, "{t:?}");
            }
        }
    }

    fn edge(z: f64) -> EventWindow {
        EventWindow {
            onset: 0,
            offset: 1,
            onset_time: 0.0,
            z_at_onset: Some(z),
        }
    }

    #[test]
    fn unstack_plan_examples() {
        let edges = [edge(19.0), edge(12.0), edge(5.0)];
        let p = plan_unstack(&edges, 2).unwrap();
        assert_eq!(p.grasp_height_mm, 10.0);
        assert_eq!(p.grasp_force_n, 0.5);
        assert_eq!(p.edges_used, vec![19.0, 12.0]);
        assert!(matches!(plan_unstack(&edges, 0), Err(Error::Contract(_))));
        assert!(matches!(
            plan_unstack(&edges, 4),
            Err(Error::InsufficientEdges { target: 4, detected: 3 })
        ));
    }

    #[test]
    fn default_scenario_has_three_lips_in_travel() {
        let sc = CupScenario::default();
        for top in [15.0, 17.3, 20.5] {
            let n = sc.lips(top).iter().filter(|z| (0.0..=21.0).contains(*z)).count();
            assert_eq!(n, 3);
        }
    }

    #[test]
    fn cup_trials_succeed_and_blind_detector_fails_gracefully() {
        let sc = CupScenario::default();
        let cfg = sc.calibrate_detector(0).unwrap();
        for s in 0..6 {
            let t = run_cup_trial(&sc, 1 + s as usize % 3, &cfg, s).unwrap();
            assert!(t.success, "{t:?}");
        }
        let blind = DetectConfig::new(10.0);
        let t = run_cup_trial(&sc, 2, &blind, 1).unwrap();
        assert!(t.detected_edges_mm.is_empty());
        assert!(!t.counting_ok && !t.planning_ok && !t.success);
        assert_eq!(t.grasp_height_mm, None);
    }

    fn vote(p: &[usize]) -> VoteResult {
        majority_vote(p, 3).unwrap()
    }

    #[test]
    fn selection_rules() {
        let d = BoxDecision::from_votes(vec![vote(&[1, 1, 0]), vote(&[0, 0, 0])], BoxContent::RubberBands);
        assert_eq!(d.selection, Selection::Selected(1));
        let d = BoxDecision::from_votes(vec![vote(&[2, 2]), vote(&[2])], BoxContent::Screws);
        assert_eq!(d.selection, Selection::Absent);
        let d = BoxDecision::from_votes(vec![vote(&[1]), vote(&[1, 1])], BoxContent::Screws);
        assert_eq!(d.selection, Selection::Ambiguous);
        // A tied vote is not evidence for either class.
        let d = BoxDecision::from_votes(vec![vote(&[0, 1]), vote(&[2])], BoxContent::RubberBands);
        assert_eq!(d.selection, Selection::Absent);
    }

    #[test]
    fn selection_is_sound() {
        let mut rng = seed::rng(3);
        for _ in 0..500 {
            let votes: Vec<VoteResult> = (0..2)
                .map(|_| {
                    let n = rng.random_range(1..8);
                    vote(&(0..n).map(|_| rng.random_range(0..3)).collect::<Vec<_>>())
                })
                .collect();
            let target = BoxContent::from_index(rng.random_range(0..3)).unwrap();
            let d = BoxDecision::from_votes(votes, target);
            if let Some(i) = d.selected() {
                assert_eq!(d.votes[i].final_class, target.index());
            }
        }
    }

    #[test]
    fn shake_setup_balances_targets() {
        let targets: Vec<BoxContent> = (0..56).map(|i| shake_trial_setup(i, 56, i as u64).1).collect();
        assert_eq!(targets.iter().filter(|&&t| t == BoxContent::RubberBands).count(), 28);
        for i in 0..56 {
            let (boxes, target) = shake_trial_setup(i, 56, i as u64);
            assert_eq!(boxes.iter().filter(|&&b| b == target).count(), 1);
        }
    }

    #[test]
    fn json_lines_one_record_per_line() {
        let recs = vec![Selection::Selected(1), Selection::Absent];
        assert_eq!(to_json_lines(&recs), "{\"selected\":1}\n\"absent\"\n");
    }
}
