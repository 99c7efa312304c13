//! On-disk layout of experiment results.
//!
//! Each run owns one directory (see [`ExperimentConfig::run_dir`]) holding:
//!
//! | file                     | columns / content                              |
//! |--------------------------|------------------------------------------------|
//! | `spectra_<step>.csv`     | `re,im`, one eigenvalue per row                |
//! | `radius_timeline.csv`    | `step,radius_center,radius_origin`             |
//! | `trace.csv`              | `step,phase,z,target` (`phase` is train/test)  |
//! | `summary.json`           | [`Summary`]                                    |
//! | `spectra_closed_loop.csv`| closed-loop spectrum (validation runs)         |
//! | `pc_<a>.csv`             | `step,projection` (PCA runs)                   |
//! | `fractions.csv`          | `component,fraction` (PCA runs)                |
//! | `sweep.csv`              | one row per interval (sweeps; runs in `k<k>/`) |
//!
//! Floats are written with 17 significant digits and nothing time-dependent
//! is recorded, so identical runs produce identical bytes.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ExperimentConfig, ExperimentResult, PcaReport, SweepEntry, ValidationReport};
use crate::dynamics::UnrollSchedule;
use crate::error::{Error, Result};
use crate::spectra::{hausdorff, SpectrumSnapshot};
use crate::training::StopReason;

pub const RADIUS_TIMELINE: &str = "radius_timeline.csv";
pub const TRACE: &str = "trace.csv";
pub const SUMMARY: &str = "summary.json";
pub const CLOSED_LOOP_SPECTRUM: &str = "spectra_closed_loop.csv";
pub const FRACTIONS: &str = "fractions.csv";
pub const SWEEP: &str = "sweep.csv";

pub fn spectrum_file(step: usize) -> String {
    format!("spectra_{step}.csv")
}

pub fn projection_file(component: usize) -> String {
    format!("pc_{component}.csv")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentScore {
    pub component: usize,
    pub score: f64,
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub converged_at: Option<usize>,
    pub stop_reason: Option<StopReason>,
    pub final_step: usize,
    pub radius_initial: Option<f64>,
    pub radius_final: Option<f64>,
    pub train_rmse: f64,
    pub test_rmse: f64,
    /// Hausdorff distance between the last two training spectra.
    pub final_pair_distance: Option<f64>,
    /// Hausdorff distance between the final unrolled spectrum and the
    /// closed-loop spectrum at the fixed point (validation runs).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub closed_loop_distance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_point_residual: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fluctuation_scores: Vec<ComponentScore>,
    /// Set when the run aborted; the other fields describe the partial run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Summary {
    pub fn new(config: &ExperimentConfig, result: &ExperimentResult) -> Result<Self> {
        let n = result.spectra.len();
        let final_pair_distance = if n >= 2 {
            Some(hausdorff(
                &result.spectra[n - 2].eigenvalues,
                &result.spectra[n - 1].eigenvalues,
            )?)
        } else {
            None
        };
        Ok(Self {
            config: config.clone(),
            seed: result.seed,
            converged_at: result.converged_at,
            stop_reason: result.stop_reason,
            final_step: result.final_step,
            radius_initial: result.initial_radius(),
            radius_final: result.final_radius(),
            train_rmse: result.train_rmse,
            test_rmse: result.test_rmse,
            final_pair_distance,
            closed_loop_distance: None,
            fixed_point_residual: None,
            fluctuation_scores: Vec::new(),
            error: None,
        })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

struct Csv {
    path: PathBuf,
    out: BufWriter<File>,
}

impl Csv {
    fn create(path: PathBuf, header: &str) -> Result<Self> {
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut csv = Self {
            path,
            out: BufWriter::new(file),
        };
        csv.line(format_args!("{header}"))?;
        Ok(csv)
    }

    fn line(&mut self, args: std::fmt::Arguments<'_>) -> Result<()> {
        writeln!(self.out, "{args}").map_err(|e| Error::io(&self.path, e))
    }

    fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn write_spectrum(path: impl Into<PathBuf>, snapshot: &SpectrumSnapshot) -> Result<()> {
    let mut csv = Csv::create(path.into(), "re,im")?;
    for l in &snapshot.eigenvalues {
        csv.line(format_args!("{:.16e},{:.16e}", l.re, l.im))?;
    }
    csv.finish()
}

fn write_summary(dir: &Path, summary: &Summary) -> Result<()> {
    let path = dir.join(SUMMARY);
    let mut text = serde_json::to_string_pretty(summary)?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

fn write_result_files(dir: &Path, result: &ExperimentResult) -> Result<()> {
    create_dir(dir)?;
    for s in &result.spectra {
        write_spectrum(dir.join(spectrum_file(s.step)), s)?;
    }

    let mut csv = Csv::create(dir.join(RADIUS_TIMELINE), "step,radius_center,radius_origin")?;
    for p in &result.radius_timeline {
        csv.line(format_args!(
            "{},{:.16e},{:.16e}",
            p.step, p.radius_center, p.radius_origin
        ))?;
    }
    csv.finish()?;

    let mut csv = Csv::create(dir.join(TRACE), "step,phase,z,target")?;
    for p in &result.trace {
        csv.line(format_args!(
            "{},{},{:.16e},{:.16e}",
            p.step,
            p.phase.as_str(),
            p.z,
            p.target
        ))?;
    }
    csv.finish()
}

/// Writes spectra, radius timeline, trace and summary of a training run.
pub fn write_run(dir: &Path, config: &ExperimentConfig, result: &ExperimentResult) -> Result<Summary> {
    write_result_files(dir, result)?;
    let summary = Summary::new(config, result)?;
    write_summary(dir, &summary)?;
    Ok(summary)
}

/// Flushes whatever an aborted run recorded. Returns `None` when the error
/// carries no partial result.
pub fn write_partial(dir: &Path, config: &ExperimentConfig, error: &Error) -> Result<Option<Summary>> {
    let Error::RunAborted { source, partial } = error else {
        return Ok(None);
    };
    write_result_files(dir, partial)?;
    let mut summary = Summary::new(config, partial)?;
    summary.error = Some(source.to_string());
    write_summary(dir, &summary)?;
    Ok(Some(summary))
}

pub fn write_validation(
    dir: &Path,
    config: &ExperimentConfig,
    report: &ValidationReport,
) -> Result<Summary> {
    write_result_files(dir, &report.run.result)?;
    write_spectrum(dir.join(CLOSED_LOOP_SPECTRUM), &report.closed_loop)?;
    let mut summary = Summary::new(config, &report.run.result)?;
    summary.closed_loop_distance = Some(report.distance);
    summary.fixed_point_residual = Some(report.fixed_point_residual);
    write_summary(dir, &summary)?;
    Ok(summary)
}

pub fn write_pca(dir: &Path, config: &ExperimentConfig, report: &PcaReport) -> Result<Summary> {
    write_result_files(dir, &report.run.result)?;
    let steps = report.history.step_offsets();
    for (a, projection) in &report.projections {
        let mut csv = Csv::create(dir.join(projection_file(*a)), "step,projection")?;
        for (step, v) in steps.iter().zip(projection.iter()) {
            csv.line(format_args!("{step},{v:.16e}"))?;
        }
        csv.finish()?;
    }
    let mut csv = Csv::create(dir.join(FRACTIONS), "component,fraction")?;
    for (i, f) in report.decomposition.fractions.iter().enumerate() {
        csv.line(format_args!("{},{f:.16e}", i + 1))?;
    }
    csv.finish()?;

    let mut summary = Summary::new(config, &report.run.result)?;
    summary.fluctuation_scores = report
        .scores
        .iter()
        .map(|&(component, score)| ComponentScore { component, score })
        .collect();
    write_summary(dir, &summary)?;
    Ok(summary)
}

/// Subdirectory of a sweep directory holding the run for interval `k`.
pub fn sweep_run_dir(dir: &Path, interval: usize) -> PathBuf {
    dir.join(format!("k{interval}"))
}

/// Writes every sweep entry into `k<k>/` and a comparison table into
/// `sweep.csv`. Failed entries are flushed as partial runs and listed with
/// their error.
pub fn write_sweep(dir: &Path, config: &ExperimentConfig, entries: &[SweepEntry]) -> Result<()> {
    create_dir(dir)?;
    let mut csv = Csv::create(
        dir.join(SWEEP),
        "interval,status,train_rmse,test_rmse,radius_initial,radius_final,final_pair_distance",
    )?;
    for entry in entries {
        let sub = sweep_run_dir(dir, entry.interval);
        let mut c = config.clone();
        c.schedule = UnrollSchedule::unrolled(entry.interval);
        let (status, summary) = match &entry.outcome {
            Ok(run) => ("ok", Some(write_run(&sub, &c, &run.result)?)),
            Err(e) => ("failed", write_partial(&sub, &c, e)?),
        };
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.16e}")).unwrap_or_default();
        match summary {
            Some(s) => csv.line(format_args!(
                "{},{status},{:.16e},{:.16e},{},{},{}",
                entry.interval,
                s.train_rmse,
                s.test_rmse,
                opt(s.radius_initial),
                opt(s.radius_final),
                opt(s.final_pair_distance)
            ))?,
            None => csv.line(format_args!("{},{status},,,,,", entry.interval))?,
        }
    }
    csv.finish()
}
