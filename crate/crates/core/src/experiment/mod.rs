//! End-to-end experiments: fixed-point training, FORCE training of a
//! sinusoid, integrated-unrolling sweeps, closed-loop validation and PCA.
//!
//! Every run is configured by an [`ExperimentConfig`], is deterministic in its
//! seed, and can be written to disk with [`artifacts`].

pub mod artifacts;
pub mod config_file;
mod runs;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::dynamics::{FixedPointOptions, ReservoirParams, UnrollSchedule};
use crate::error::{Error, Result};
use crate::spectra::SpectrumSnapshot;
use crate::training::{StopReason, StoppingCriteria, TargetFunction};

pub use runs::{
    run_closed_loop_validation, run_fixed_point, run_pca, run_seeds, run_time_varying,
    run_unroll_sweep, PcaReport, SweepEntry, TrainedNetwork, TrainingRun, ValidationReport,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    FixedPoint,
    TimeVarying,
    UnrollSweep,
    ClosedLoopValidation,
    Pca,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::FixedPoint => "fixed-point",
            ExperimentKind::TimeVarying => "time-varying",
            ExperimentKind::UnrollSweep => "unroll-sweep",
            ExperimentKind::ClosedLoopValidation => "validate-closed-loop",
            ExperimentKind::Pca => "pca",
        }
    }
}

/// Settings that only some experiments read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtraOptions {
    /// FORCE regularizer; `P(0) = I / alpha`.
    pub force_alpha: f64,
    /// Length of the frozen-readout test phase; `None` means "same as training".
    pub test_steps: Option<usize>,
    /// Feedback convention of the test phase. Closed loop by default;
    /// `PerStep` keeps the one-step feedback lag used during training.
    pub test_schedule: UnrollSchedule,
    /// Post-training window recorded for PCA.
    pub pca_window: usize,
    /// 1-based principal components to export.
    pub pca_components: Vec<usize>,
    /// Integrated-unrolling intervals for the sweep.
    pub sweep_intervals: Vec<usize>,
    pub fixed_point: FixedPointOptions,
    pub update_cadence: UpdateCadence,
}

/// Which training states receive a readout update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateCadence {
    /// Only the last state of each unrolling segment (every state when
    /// unrolling per step).
    #[default]
    SegmentEnd,
    EveryStep,
}

impl Default for ExtraOptions {
    fn default() -> Self {
        Self {
            force_alpha: 1.0,
            test_steps: None,
            test_schedule: UnrollSchedule::ClosedLoop,
            pca_window: 500,
            pca_components: vec![1, 2, 3, 41, 42],
            sweep_intervals: vec![2, 10, 50, 100],
            fixed_point: FixedPointOptions::default(),
            update_cadence: UpdateCadence::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub reservoir: ReservoirParams,
    pub target: TargetFunction,
    pub schedule: UnrollSchedule,
    pub stopping: StoppingCriteria,
    /// Spectra are taken every this many steps, plus the first step and the
    /// last two.
    pub snapshot_cadence: usize,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub extra: ExtraOptions,
}

impl ExperimentConfig {
    /// Defaults for `kind` at full size (`n = 1000`).
    pub fn new(kind: ExperimentKind) -> Self {
        let (g, target, stopping, cadence) = match kind {
            ExperimentKind::TimeVarying | ExperimentKind::UnrollSweep => (
                1.5,
                TargetFunction::sinusoid(1.0),
                StoppingCriteria {
                    max_steps: 6000,
                    ..StoppingCriteria::default()
                },
                500,
            ),
            ExperimentKind::Pca => (
                0.9,
                TargetFunction::default(),
                StoppingCriteria::default(),
                10,
            ),
            _ => (
                1.5,
                TargetFunction::default(),
                StoppingCriteria::default(),
                10,
            ),
        };
        Self {
            experiment: kind,
            reservoir: ReservoirParams {
                g,
                ..ReservoirParams::default()
            },
            target,
            schedule: UnrollSchedule::PerStep,
            stopping,
            snapshot_cadence: cadence,
            seeds: vec![0],
            output_dir: PathBuf::from("runs"),
            extra: ExtraOptions::default(),
        }
    }

    /// Copy of the config for a single seed.
    pub fn for_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.reservoir.seed = seed;
        c.seeds = vec![seed];
        c
    }

    pub fn validate(&self) -> Result<()> {
        self.reservoir.validate()?;
        self.schedule.validate()?;
        if self.snapshot_cadence == 0 {
            return Err(Error::invalid("snapshot_cadence", "must be at least 1"));
        }
        if self.stopping.max_steps == 0 {
            return Err(Error::invalid("steps", "must be at least 1"));
        }
        if !(self.stopping.weight_delta_tol >= 0.0) {
            return Err(Error::invalid("weight_delta_tol", "must be nonnegative"));
        }
        if self.seeds.is_empty() {
            return Err(Error::invalid("seeds", "at least one seed is required"));
        }
        self.extra.test_schedule.validate()?;
        if self.extra.sweep_intervals.contains(&0) {
            return Err(Error::invalid("sweep_intervals", "intervals must be at least 1"));
        }
        if !(self.extra.force_alpha > 0.0) {
            return Err(Error::invalid("force_alpha", "must be positive"));
        }
        if let Some(&a) = self
            .extra
            .pca_components
            .iter()
            .find(|&&a| a == 0 || a > self.reservoir.n)
        {
            if self.experiment == ExperimentKind::Pca {
                return Err(Error::ComponentOutOfRange {
                    index: a,
                    n: self.reservoir.n,
                });
            }
        }
        Ok(())
    }

    /// `<output_dir>/<experiment>/g<g>_seed<seed>`.
    pub fn run_dir(&self) -> PathBuf {
        self.output_dir.join(self.experiment.name()).join(format!(
            "g{}_seed{}",
            self.reservoir.g, self.reservoir.seed
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiusPoint {
    pub step: usize,
    /// `max |lambda + 1|`.
    pub radius_center: f64,
    /// `max |lambda|`.
    pub radius_origin: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Train,
    Test,
}

impl Phase {
    pub fn as_str(&self) -> &'static str {
        match self {
            Phase::Train => "train",
            Phase::Test => "test",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub step: usize,
    pub phase: Phase,
    pub z: f64,
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub seed: u64,
    pub radius_timeline: Vec<RadiusPoint>,
    pub spectra: Vec<SpectrumSnapshot>,
    pub trace: Vec<TracePoint>,
    /// Step at which the stopping rule fired.
    pub converged_at: Option<usize>,
    pub stop_reason: Option<StopReason>,
    /// Index of the last training state.
    pub final_step: usize,
    pub train_rmse: f64,
    pub test_rmse: f64,
}

impl ExperimentResult {
    pub fn initial_spectrum(&self) -> Option<&SpectrumSnapshot> {
        self.spectra.first()
    }

    pub fn final_spectrum(&self) -> Option<&SpectrumSnapshot> {
        self.spectra.last()
    }

    pub fn initial_radius(&self) -> Option<f64> {
        self.initial_spectrum().map(|s| s.radius)
    }

    pub fn final_radius(&self) -> Option<f64> {
        self.final_spectrum().map(|s| s.radius)
    }

    pub fn phase_rmse(&self, phase: Phase) -> f64 {
        rmse(self.trace.iter().filter(|p| p.phase == phase))
    }
}

pub(crate) fn rmse<'a>(points: impl Iterator<Item = &'a TracePoint>) -> f64 {
    let (sum, count) = points.fold((0.0, 0usize), |(s, c), p| (s + (p.z - p.target).powi(2), c + 1));
    if count == 0 {
        0.0
    } else {
        (sum / count as f64).sqrt()
    }
}
