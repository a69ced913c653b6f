//! Command-line experiment runner: corpus generation, training, task batches
//! and report summaries. Exit codes: 0 success, 1 error, 2 acceptance gate failed.

pub mod commands;
pub mod config;
pub mod corpus;
pub mod report;

use std::ffi::OsString;
use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand, ValueEnum};

use commands::Task;
use config::{ExperimentConfig, Resolved};
use report::RunReport;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_GATE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "tactile", version, about = "Tactile fingertip experiments over a seeded synthetic sensor")]
pub struct Cli {
    /// TOML experiment config; every key is optional.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Top-level seed (overrides `seed` in the config).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (default `tactile-out`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Trials for `run-task` (per object for pinch).
    #[arg(long, global = true)]
    pub trials: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the calibration CSV, material and shaking corpora, and sample cup slides.
    GenData,
    /// Train the force estimator and compare it with the linear baseline.
    Calibrate,
    /// Train the material classifier.
    TrainMaterial,
    /// Train the shaking classifier.
    TrainShake,
    /// Run a seeded trial batch and write its JSON-lines log.
    RunTask {
        #[arg(value_enum)]
        task: TaskArg,
    },
    /// Summarise report files as a table; optionally export CSV data.
    Report {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        /// Directory for confusion-matrix and force-scatter CSVs.
        #[arg(long)]
        csv_dir: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TaskArg {
    Pinch,
    Cups,
    Shake,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Pinch => Task::Pinch,
            TaskArg::Cups => Task::Cups,
            TaskArg::Shake => Task::Shake,
        }
    }
}

pub fn resolve(cli: &Cli) -> Result<Resolved> {
    let config = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    Resolved::new(config, cli.seed, cli.out.clone())
}

/// What a command printed and whether its gate held.
#[derive(Debug)]
pub struct Outcome {
    pub text: String,
    pub passed: Option<bool>,
}

pub fn execute(cli: &Cli) -> Result<Outcome> {
    if let Command::Report { paths, csv_dir } = &cli.command {
        let reports = report::read_reports(paths)?;
        let mut text = report::summary_table(&reports);
        if let Some(dir) = csv_dir {
            for p in report::export_csv(&reports, dir)? {
                text.push_str(&format!("wrote {}\n", p.display()));
            }
        }
        return Ok(Outcome { text, passed: None });
    }
    let r = resolve(cli)?;
    let report: RunReport = match &cli.command {
        Command::GenData => commands::gen_data(&r)?,
        Command::Calibrate => commands::calibrate(&r)?,
        Command::TrainMaterial => commands::train_material(&r)?,
        Command::TrainShake => commands::train_shake(&r)?,
        Command::RunTask { task } => commands::run_task(&r, (*task).into(), cli.trials)?,
        Command::Report { .. } => unreachable!(),
    };
    Ok(Outcome {
        text: report::summary_table(std::slice::from_ref(&report)),
        passed: report.passed,
    })
}

/// Parses `args`, runs the command, prints its output and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(o) => {
            print!("{}", o.text);
            if o.passed == Some(false) {
                eprintln!("acceptance gate failed");
                EXIT_GATE
            } else {
                EXIT_OK
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_ERROR
        }
    }
}
