use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use tactile_core::vibro::ClassifierReport;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub value: f64,
    pub unit: String,
}

/// One held-out force prediction against its ground truth, N.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForcePoint {
    pub fx_true: f64,
    pub fy_true: f64,
    pub fx_pred: f64,
    pub fy_pred: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub experiment: String,
    pub config_digest: String,
    pub seed: u64,
    pub metrics: BTreeMap<String, Metric>,
    pub artifacts: Vec<String>,
    /// Whether the run met its acceptance threshold; absent when it has none.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub passed: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classifier: Option<ClassifierReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub force_scatter: Option<Vec<ForcePoint>>,
}

impl RunReport {
    pub fn new(experiment: &str, config_digest: String, seed: u64) -> Self {
        Self {
            experiment: experiment.into(),
            config_digest,
            seed,
            metrics: BTreeMap::new(),
            artifacts: Vec::new(),
            passed: None,
            classifier: None,
            force_scatter: None,
        }
    }

    pub fn metric(&mut self, name: &str, value: f64, unit: &str) {
        self.metrics.insert(
            name.into(),
            Metric {
                value,
                unit: unit.into(),
            },
        );
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).map(|m| m.value)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports are plain data");
        s.push('\n');
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| anyhow::anyhow!("line {}, column {}: {e}", e.line(), e.column()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading report {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("malformed report {}", path.display()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).with_context(|| format!("writing {}", path.display()))
    }
}

fn format_value(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{v:.0}")
    } else {
        format!("{v:.4}")
    }
}

/// One row per report: experiment, seed, short digest, pass flag and every metric.
pub fn summary_table(reports: &[RunReport]) -> String {
    let rows: Vec<[String; 5]> = reports
        .iter()
        .map(|r| {
            let metrics = r
                .metrics
                .iter()
                .map(|(k, m)| {
                    if m.unit.is_empty() {
                        format!("{k}={}", format_value(m.value))
                    } else {
                        format!("{k}={} {}", format_value(m.value), m.unit)
                    }
                })
                .collect::<Vec<_>>()
                .join("; ");
            let passed = match r.passed {
                Some(true) => "pass",
                Some(false) => "FAIL",
                None => "-",
            };
            [
                r.experiment.clone(),
                r.seed.to_string(),
                r.config_digest.chars().take(12).collect(),
                passed.into(),
                metrics,
            ]
        })
        .collect();
    let header = ["experiment", "seed", "digest", "gate", "metrics"];
    let mut widths = header.map(str::len);
    for row in &rows {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let mut line = |cells: [&str; 5]| {
        let mut l = String::new();
        for (i, c) in cells.iter().enumerate() {
            if i == 4 {
                l.push_str(c);
            } else {
                let _ = write!(l, "{c:<w$}  ", w = widths[i]);
            }
        }
        out.push_str(l.trim_end());
        out.push('\n');
    };
    line(header);
    for row in &rows {
        line([&row[0], &row[1], &row[2], &row[3], &row[4]]);
    }
    out
}

/// `classes` header, then one row of counts per true class.
pub fn confusion_csv(c: &ClassifierReport) -> String {
    let mut out = format!("true\\pred,{}\n", c.classes.join(","));
    for (name, row) in c.classes.iter().zip(&c.confusion) {
        let cells: Vec<String> = row.iter().map(usize::to_string).collect();
        let _ = writeln!(out, "{name},{}", cells.join(","));
    }
    out
}

pub fn scatter_csv(points: &[ForcePoint]) -> String {
    let mut out = String::from("fx_true,fy_true,fx_pred,fy_pred\n");
    for p in points {
        let _ = writeln!(out, "{},{},{},{}", p.fx_true, p.fy_true, p.fx_pred, p.fy_pred);
    }
    out
}

/// Writes `<experiment>_confusion.csv` / `<experiment>_force_scatter.csv` for every report that carries them.
pub fn export_csv(reports: &[RunReport], dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut written = Vec::new();
    let mut put = |name: String, body: String| -> Result<()> {
        let path = dir.join(name);
        fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
        written.push(path);
        Ok(())
    };
    for r in reports {
        if let Some(c) = &r.classifier {
            put(format!("{}_confusion.csv", r.experiment), confusion_csv(c))?;
        }
        if let Some(s) = &r.force_scatter {
            put(format!("{}_force_scatter.csv", r.experiment), scatter_csv(s))?;
        }
    }
    Ok(written)
}

pub fn read_reports(paths: &[PathBuf]) -> Result<Vec<RunReport>> {
    if paths.is_empty() {
        bail!("report needs at least one report path");
    }
    paths.iter().map(|p| RunReport::read(p)).collect()
}
