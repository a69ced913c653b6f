use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use tactile_core::control::{
    run_cup_trial, run_pinch_trial, run_shake_batch_trial, to_json_lines, CupTrial, PinchOutcome, PinchTrial,
    Selection, ShakeTrial, StrainSensor,
};
use tactile_core::force::{
    build_calibration_dataset, fit_linear_baseline, train_force_estimator, CalibrationSet, ForceEstimator,
};
use tactile_core::learn::Loss;
use tactile_core::seed::derive;
use tactile_core::signal::io::{write_trace, write_z};
use tactile_core::sim::{default_material_profiles, synthesize_cup_slide, BoxContent};
use tactile_core::vibro::{
    material_corpus, shake_corpus, train_material_classifier, train_shake_classifier, DetectConfig,
    ShakeClassifier,
};

use crate::config::Resolved;
use crate::corpus::{read_corpus, write_corpus};
use crate::report::{ForcePoint, RunReport};

/// Where every command reads and writes under the output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: &Path) -> Self {
        Self { root: root.to_path_buf() }
    }

    pub fn calibration_csv(&self) -> PathBuf {
        self.root.join("calibration").join("calibration.csv")
    }

    pub fn material_dir(&self) -> PathBuf {
        self.root.join("material")
    }

    pub fn shake_dir(&self) -> PathBuf {
        self.root.join("shake")
    }

    pub fn cups_dir(&self) -> PathBuf {
        self.root.join("cups")
    }

    pub fn model(&self, name: &str) -> PathBuf {
        self.root.join("models").join(format!("{name}.mlpm"))
    }

    pub fn report(&self, experiment: &str) -> PathBuf {
        self.root.join("reports").join(format!("{experiment}.json"))
    }

    pub fn trials(&self, task: Task) -> PathBuf {
        self.root.join("trials").join(format!("{}.jsonl", task.name()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Pinch,
    Cups,
    Shake,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Pinch => "pinch",
            Task::Cups => "cups",
            Task::Shake => "shake",
        }
    }

    /// Trials run when `--trials` is absent (per object for pinch).
    pub fn default_trials(self) -> usize {
        match self {
            Task::Pinch => 25,
            Task::Cups => 36,
            Task::Shake => 56,
        }
    }
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    create_parent(path)?;
    fs::write(path, body).with_context(|| format!("writing {}", path.display()))
}

fn save_report(layout: &Layout, report: &RunReport) -> Result<()> {
    let path = layout.report(&report.experiment);
    create_parent(&path)?;
    report.write(&path)
}

fn rel(layout: &Layout, path: &Path) -> String {
    path.strip_prefix(&layout.root).unwrap_or(path).display().to_string()
}

fn require(path: &Path, what: &str, hint: &str) -> Result<()> {
    if !path.is_file() {
        bail!("{what} not found at {} ({hint})", path.display());
    }
    Ok(())
}

/// Uniform in [0, 1) from a derived seed.
fn unit(seed: u64) -> f64 {
    (seed >> 11) as f64 / (1u64 << 53) as f64
}

pub fn gen_data(r: &Resolved) -> Result<RunReport> {
    let c = &r.config;
    let layout = Layout::new(&r.out);
    let mut report = RunReport::new("gen-data", r.digest(), r.seed);

    let set = build_calibration_dataset(&c.fingertip(), &c.grid(r.sub_seed("calibration")))?;
    write_file(&layout.calibration_csv(), &set.to_csv())?;
    report.metric("calibration_trials", c.grid(0).trials()?.len() as f64, "");
    report.metric("calibration_rows", set.data.len() as f64, "");
    report.artifacts.push(rel(&layout, &layout.calibration_csv()));

    let m = &c.material;
    let seed = r.sub_seed("material");
    let corpus = material_corpus(&default_material_profiles(), m.traces_per_class, m.duration_s, m.speed_mm_s, seed)?;
    write_corpus(&layout.material_dir(), &corpus, seed)?;
    report.metric("material_traces", corpus.traces.iter().map(Vec::len).sum::<usize>() as f64, "");
    report.artifacts.push(rel(&layout, &layout.material_dir().join("manifest.csv")));

    let s = &c.shake;
    let seed = r.sub_seed("shake");
    let corpus = shake_corpus(s.traces_per_class, s.duration_s, s.shake_freq_hz, seed)?;
    write_corpus(&layout.shake_dir(), &corpus, seed)?;
    report.metric("shake_traces", corpus.traces.iter().map(Vec::len).sum::<usize>() as f64, "");
    report.artifacts.push(rel(&layout, &layout.shake_dir().join("manifest.csv")));

    let sc = c.cup_scenario();
    let dir = layout.cups_dir();
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut edges = String::from("slide,edge_mm\n");
    for i in 0..c.cups.sample_slides {
        let s = derive(r.sub_seed("cups/samples"), &format!("slide/{i}"));
        let (lo, hi) = sc.top_lip_mm;
        let top = lo + (hi - lo) * unit(derive(s, "top"));
        let mut lips: Vec<f64> = sc.lips(top).into_iter().filter(|z| (0.0..=sc.travel_mm).contains(z)).collect();
        lips.reverse();
        let (trace, z) = synthesize_cup_slide(&lips, sc.slide_speed, sc.travel_mm, sc.noise_floor, derive(s, "trace"))?;
        let stem = format!("slide_{i:03}");
        write_trace(&dir.join(format!("{stem}.tact")), &trace)?;
        write_z(&dir.join(format!("{stem}.z.csv")), &z)?;
        for e in lips {
            let _ = writeln!(edges, "{stem},{e}");
        }
    }
    write_file(&dir.join("edges.csv"), &edges)?;
    report.metric("cup_slides", c.cups.sample_slides as f64, "");
    report.artifacts.push(rel(&layout, &dir.join("edges.csv")));

    save_report(&layout, &report)?;
    Ok(report)
}

pub fn calibrate(r: &Resolved) -> Result<RunReport> {
    let layout = Layout::new(&r.out);
    let csv = layout.calibration_csv();
    require(&csv, "calibration corpus", "run gen-data first")?;
    let text = fs::read_to_string(&csv).with_context(|| format!("reading {}", csv.display()))?;
    let set = CalibrationSet::from_csv(&text).with_context(|| format!("parsing {}", csv.display()))?;

    let cfg = r.config.calibration.train.to_core(r.sub_seed("force/train"), Loss::MeanSquaredError);
    let fit = train_force_estimator(&set.data, &cfg)?;
    let base = fit_linear_baseline(&set.data, derive(cfg.seed, "force/split"))?;
    let ratio = base.test_mse / fit.test_mse;

    let model = layout.model("force");
    create_parent(&model)?;
    fit.estimator.save(&model)?;

    let mut report = RunReport::new("calibrate", r.digest(), r.seed);
    report.metric("test_mse", fit.test_mse, "N^2");
    report.metric("train_mse", fit.train_mse, "N^2");
    report.metric("baseline_test_mse", base.test_mse, "N^2");
    report.metric("baseline_ratio", ratio, "");
    report.metric("train_rows", fit.train_rows.len() as f64, "");
    report.metric("test_rows", fit.test_rows.len() as f64, "");
    report.passed = Some(fit.test_mse <= 0.15 && ratio >= 2.0);
    report.artifacts.push(rel(&layout, &model));
    report.artifacts.push(rel(&layout, &tactile_core::force::sidecar_path(&model)));
    let mut scatter = Vec::with_capacity(fit.test_rows.len());
    for &i in &fit.test_rows {
        let x = set.data.input(i);
        let t = set.data.target(i);
        let p = fit.estimator.estimate_channels(&[x[0], x[1], x[2], x[3]])?;
        scatter.push(ForcePoint {
            fx_true: t[0],
            fy_true: t[1],
            fx_pred: p.fx,
            fy_pred: p.fy,
        });
    }
    report.force_scatter = Some(scatter);
    save_report(&layout, &report)?;
    Ok(report)
}

pub fn train_material(r: &Resolved) -> Result<RunReport> {
    let layout = Layout::new(&r.out);
    let corpus = read_corpus(&layout.material_dir())?;
    let cfg = r.config.material.train.to_core(r.sub_seed("material/train"), Loss::CrossEntropy);
    let fit = train_material_classifier(&corpus, &r.config.material_features(), &cfg)?;

    let model = layout.model("material");
    create_parent(&model)?;
    fit.classifier.save(&model)?;

    let mut report = RunReport::new("train-material", r.digest(), r.seed);
    report.metric("accuracy", fit.report.accuracy, "");
    report.metric("test_windows", fit.report.confusion.iter().flatten().sum::<usize>() as f64, "");
    report.metric("final_loss", fit.loss_history.last().copied().unwrap_or(f64::NAN), "");
    report.passed = Some(fit.report.accuracy >= 0.95);
    report.artifacts.push(rel(&layout, &model));
    report.artifacts.push(rel(&layout, &tactile_core::vibro::meta_path(&model)));
    report.classifier = Some(fit.report);
    save_report(&layout, &report)?;
    Ok(report)
}

pub fn train_shake(r: &Resolved) -> Result<RunReport> {
    let layout = Layout::new(&r.out);
    let corpus = read_corpus(&layout.shake_dir())?;
    let expected: Vec<&str> = BoxContent::ALL.iter().map(|c| c.name()).collect();
    if corpus.classes != expected {
        bail!(
            "shaking corpus classes must be {} in that order, found {}",
            expected.join(","),
            corpus.classes.join(",")
        );
    }
    let cfg = r.config.shake.train.to_core(r.sub_seed("shake/train"), Loss::CrossEntropy);
    let fit = train_shake_classifier(&corpus, &r.config.shake_features(), &cfg)?;

    let model = layout.model("shake");
    create_parent(&model)?;
    fit.classifier.save(&model)?;

    let mut report = RunReport::new("train-shake", r.digest(), r.seed);
    report.metric("window_accuracy", fit.report.accuracy, "");
    report.metric("test_windows", fit.report.confusion.iter().flatten().sum::<usize>() as f64, "");
    report.artifacts.push(rel(&layout, &model));
    report.artifacts.push(rel(&layout, &tactile_core::vibro::meta_path(&model)));
    report.classifier = Some(fit.report);
    save_report(&layout, &report)?;
    Ok(report)
}

fn load_force(layout: &Layout) -> Result<ForceEstimator> {
    let path = layout.model("force");
    require(&path, "force model", "run calibrate first")?;
    Ok(ForceEstimator::load(&path)?)
}

fn load_shake(layout: &Layout) -> Result<ShakeClassifier> {
    let path = layout.model("shake");
    require(&path, "shaking model", "run train-shake first")?;
    Ok(ShakeClassifier::load(&path)?)
}

fn pinch(r: &Resolved, layout: &Layout, n: usize, report: &mut RunReport) -> Result<String> {
    let estimator = load_force(layout)?;
    let fingertip = r.config.fingertip();
    let sensor = StrainSensor {
        fingertip: &fingertip,
        estimator: &estimator,
    };
    let mut trials: Vec<PinchTrial> = Vec::new();
    for plant in r.config.plants() {
        let cfg = plant.config()?;
        let mut ok = 0;
        for i in 0..n {
            let t = run_pinch_trial(&plant, &sensor, &cfg, derive(r.sub_seed("pinch"), &format!("{}/{i}", plant.name)))?;
            ok += usize::from(t.outcome == PinchOutcome::Success);
            trials.push(t);
        }
        report.metric(&format!("{}_successes", plant.name), ok as f64, "");
    }
    let count = |o: PinchOutcome| trials.iter().filter(|t| t.outcome == o).count();
    let (success, crushed) = (count(PinchOutcome::Success), count(PinchOutcome::Crushed));
    report.metric("trials", trials.len() as f64, "");
    report.metric("successes", success as f64, "");
    report.metric("crushed", crushed as f64, "");
    report.metric("dropped", count(PinchOutcome::Dropped) as f64, "");
    report.passed = Some(success == trials.len() && crushed == 0);
    Ok(to_json_lines(&trials))
}

fn cups(r: &Resolved, n: usize, report: &mut RunReport) -> Result<String> {
    let sc = r.config.cup_scenario();
    let seed = r.sub_seed("cups");
    let detector = match r.config.cups.tau {
        Some(tau) => DetectConfig::new(tau),
        None => sc.calibrate_detector(derive(seed, "noise"))?,
    };
    let trials: Vec<CupTrial> = (0..n)
        .map(|i| run_cup_trial(&sc, 1 + i % 3, &detector, derive(seed, &format!("trial/{i}"))))
        .collect::<tactile_core::Result<_>>()?;
    let count = |f: fn(&CupTrial) -> bool| trials.iter().filter(|t| f(t)).count() as f64;
    report.metric("tau", detector.tau, "");
    report.metric("trials", n as f64, "");
    report.metric("successes", count(|t| t.success), "");
    report.metric("counting_ok", count(|t| t.counting_ok), "");
    report.metric("planning_ok", count(|t| t.planning_ok), "");
    report.metric("lift_ok", count(|t| t.lift_ok), "");
    report.passed = Some(trials.iter().all(|t| t.success));
    Ok(to_json_lines(&trials))
}

fn shake(r: &Resolved, layout: &Layout, n: usize, report: &mut RunReport) -> Result<String> {
    let clf = load_shake(layout)?;
    let task = r.config.shake_task();
    let seed = r.sub_seed("shake/task");
    let trials: Vec<ShakeTrial> = (0..n)
        .map(|i| run_shake_batch_trial(i, n, &clf, &task, derive(seed, &format!("trial/{i}"))))
        .collect::<tactile_core::Result<_>>()?;
    let correct = trials.iter().filter(|t| t.correct).count();
    let count = |s: Selection| trials.iter().filter(|t| t.selection == s).count() as f64;
    report.metric("trials", n as f64, "");
    report.metric("correct", correct as f64, "");
    report.metric("accuracy", correct as f64 / n as f64, "");
    report.metric("absent", count(Selection::Absent), "");
    report.metric("ambiguous", count(Selection::Ambiguous), "");
    // 53 of 56 correct selections, scaled to the batch size.
    report.passed = Some(correct * 56 >= 53 * n);
    Ok(to_json_lines(&trials))
}

pub fn run_task(r: &Resolved, task: Task, trials: Option<usize>) -> Result<RunReport> {
    let n = trials.unwrap_or(task.default_trials());
    if n == 0 {
        bail!("--trials must be >= 1");
    }
    let layout = Layout::new(&r.out);
    let mut report = RunReport::new(&format!("run-task-{}", task.name()), r.digest(), r.seed);
    let log = match task {
        Task::Pinch => pinch(r, &layout, n, &mut report)?,
        Task::Cups => cups(r, n, &mut report)?,
        Task::Shake => shake(r, &layout, n, &mut report)?,
    };
    let path = layout.trials(task);
    write_file(&path, &log)?;
    report.artifacts.push(rel(&layout, &path));
    save_report(&layout, &report)?;
    Ok(report)
}
