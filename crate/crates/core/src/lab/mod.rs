//! Experiment harness: configuration, runs, reports and plots.

pub mod audit;
pub mod cli;
pub mod config;
mod experiments;
pub mod plot;
pub mod report;
pub mod strip;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Mutex;
use std::time::Instant;

use crate::error::{Error, Result};

pub use audit::Audit;
pub use config::LabConfig;
pub use experiments::{fit_line, LineFit};
pub use plot::Plot;
pub use report::{Cell, Report, Rule, Timing, Verdict, VerdictRecord};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum ExperimentId {
    Unitary,
    BesovSchatten,
    Sharpness,
    ProjectionWindow,
    QuasinormGap,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 5] = [
        ExperimentId::Unitary,
        ExperimentId::BesovSchatten,
        ExperimentId::Sharpness,
        ExperimentId::ProjectionWindow,
        ExperimentId::QuasinormGap,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentId::Unitary => "unitary",
            ExperimentId::BesovSchatten => "besov_schatten",
            ExperimentId::Sharpness => "sharpness",
            ExperimentId::ProjectionWindow => "projection_window",
            ExperimentId::QuasinormGap => "quasinorm_gap",
        }
    }
}

impl std::fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        Ok(match key.as_str() {
            "unitary" | "unitary_equivalence" => ExperimentId::Unitary,
            "besov_schatten" | "besov" => ExperimentId::BesovSchatten,
            "sharpness" => ExperimentId::Sharpness,
            "projection_window" | "window" => ExperimentId::ProjectionWindow,
            "quasinorm_gap" | "quasinorm" => ExperimentId::QuasinormGap,
            _ => {
                return Err(Error::Config(format!(
                    "unknown experiment `{s}` (expected unitary, besov_schatten, sharpness, projection_window, quasinorm_gap)"
                )))
            }
        })
    }
}

/// Shared state of one run.
pub struct Context<'a> {
    pub cfg: &'a LabConfig,
    pub audit: Audit,
    timings: Mutex<BTreeMap<String, f64>>,
}

impl<'a> Context<'a> {
    pub fn new(cfg: &'a LabConfig) -> Self {
        Self {
            cfg,
            audit: Audit::new(cfg.tolerances.additivity),
            timings: Mutex::new(BTreeMap::new()),
        }
    }

    /// Runs `f` and records its wall time under `id`.
    pub fn timed<T>(&self, id: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        let dt = start.elapsed().as_secs_f64();
        self.timings
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .insert(id.to_string(), dt);
        out
    }

    fn take_timings(&self) -> BTreeMap<String, f64> {
        std::mem::take(&mut *self.timings.lock().unwrap_or_else(|e| e.into_inner()))
    }
}

/// Everything an experiment run produces.
pub struct Outcome {
    pub report: Report,
    pub timing: Timing,
    pub plots: Vec<(String, Plot)>,
}

/// Runs one experiment on a worker pool of `cfg.jobs` threads.
pub fn run_experiment(id: ExperimentId, cfg: &LabConfig) -> Result<Outcome> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| {
        let start = Instant::now();
        let ctx = Context::new(cfg);
        let (cells, mut verdicts, plots) = match id {
            ExperimentId::Unitary => experiments::unitary::run(&ctx)?,
            ExperimentId::BesovSchatten => experiments::besov_schatten::run(&ctx)?,
            ExperimentId::Sharpness => experiments::sharpness::run(&ctx)?,
            ExperimentId::ProjectionWindow => experiments::window::run(&ctx)?,
            ExperimentId::QuasinormGap => experiments::quasinorm::run(&ctx)?,
        };
        let failed = cells.iter().filter(|c| !c.is_ok()).count();
        verdicts.push(VerdictRecord::new(
            "cells_completed",
            format!("{} of {} cells completed", cells.len() - failed, cells.len()),
            Rule::NoViolations {
                violations: failed,
                checked: cells.len(),
            },
        ));
        verdicts.extend(ctx.audit.verdicts());
        let report = Report {
            experiment: id.name().to_string(),
            provenance: report::Provenance {
                config_hash: cfg.hash(),
                seed: cfg.seed,
                crate_version: env!("CARGO_PKG_VERSION").to_string(),
            },
            config: serde_json::to_value(cfg)?,
            cells,
            verdicts,
        };
        let timing = Timing {
            experiment: id.name().to_string(),
            total_seconds: start.elapsed().as_secs_f64(),
            cells: ctx.take_timings(),
        };
        Ok(Outcome { report, timing, plots })
    })
}

/// Paths written by [`write_outcome`].
#[derive(Clone, Debug)]
pub struct Written {
    pub json: PathBuf,
    pub csv: PathBuf,
    pub timing: PathBuf,
    pub plots: Vec<PathBuf>,
}

/// Writes `<id>.json`, `<id>.csv`, `<id>.timing.json` and `<id>_<plot>.svg` into `dir`.
pub fn write_outcome(outcome: &Outcome, dir: &Path) -> Result<Written> {
    std::fs::create_dir_all(dir)?;
    let id = &outcome.report.experiment;
    let json = dir.join(format!("{id}.json"));
    let csv = dir.join(format!("{id}.csv"));
    let timing = dir.join(format!("{id}.timing.json"));
    outcome.report.write_json(&json)?;
    outcome.report.write_csv(&csv)?;
    std::fs::write(&timing, serde_json::to_string_pretty(&outcome.timing)? + "\n")?;
    let mut plots = Vec::new();
    for (name, plot) in &outcome.plots {
        let path = dir.join(format!("{id}_{name}.svg"));
        plot.write(&path)?;
        plots.push(path);
    }
    Ok(Written {
        json,
        csv,
        timing,
        plots,
    })
}

/// Verdict name with its stored and recomputed values.
pub type VerdictAudit = (String, Verdict, Verdict);

/// Reads every report in `dir` and re-evaluates its verdicts from the stored rules.
pub fn audit_reports(dir: &Path) -> Result<Vec<(Report, Vec<VerdictAudit>)>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|e| e == "json")
                && !p
                    .file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.ends_with(".timing.json"))
        })
        .collect();
    paths.sort();
    let mut out = Vec::new();
    for path in paths {
        let report = Report::read_json(&path)?;
        let rows = report
            .verdicts
            .iter()
            .map(|v| (v.name.clone(), v.verdict, v.recompute()))
            .collect();
        out.push((report, rows));
    }
    Ok(out)
}
