use ndarray::{Array1, ArrayView1};
use rayon::prelude::*;

use super::{
    rmse, ExperimentConfig, ExperimentResult, Phase, RadiusPoint, TracePoint, UpdateCadence,
};
use crate::dynamics::{
    init_network, solve_fixed_point_from, fixed_point_residual, UnrollSchedule, Unroller,
    WeightSet,
};
use crate::error::{Error, Result};
use crate::pca::{
    correlation_matrix, fluctuation_score, pc_decomposition, project_trajectory, PcDecomposition,
    RateHistory,
};
use crate::spectra::{eigenspectrum, hausdorff, jacobian_closed, snapshot, SpectrumSnapshot};
use crate::training::{
    force_init, force_update, stop_reason, LsqTrainer, ReadoutTrainer, StopReason,
    TargetFunction, TrainerState,
};

/// Network after training, ready to be simulated further with a frozen
/// readout.
#[derive(Debug, Clone)]
pub struct TrainedNetwork {
    pub weights: WeightSet,
    /// Final training state together with its unrolling anchor.
    pub unroller: Unroller,
}

#[derive(Debug, Clone)]
pub struct TrainingRun {
    pub result: ExperimentResult,
    pub network: TrainedNetwork,
}

enum Learner {
    Lsq(LsqTrainer),
    Force(TrainerState),
}

impl Learner {
    fn for_target(target: &TargetFunction, n: usize, alpha: f64) -> Result<Self> {
        Ok(match target {
            TargetFunction::FixedPoint { .. } => Learner::Lsq(LsqTrainer::new(n)),
            TargetFunction::Sinusoid { .. } => Learner::Force(force_init(n, alpha)?),
        })
    }

    fn update(&mut self, r: ArrayView1<'_, f64>, target: f64) -> Result<f64> {
        match self {
            Learner::Lsq(t) => t.update(r, target),
            Learner::Force(t) => force_update(t, r, target),
        }
    }

    fn trainer(&self) -> &dyn ReadoutTrainer {
        match self {
            Learner::Lsq(t) => t,
            Learner::Force(t) => t,
        }
    }

    /// The exact-fit learner stops on its own; FORCE runs for the full budget.
    fn stops_early(&self) -> bool {
        matches!(self, Learner::Lsq(_))
    }
}

/// State needed to take a spectrum after the fact.
struct Pending {
    step: usize,
    w_out: Array1<f64>,
    x: Array1<f64>,
    x_unroll: Array1<f64>,
}

impl Pending {
    fn capture(step: usize, weights: &WeightSet, unroller: &Unroller) -> Self {
        Self {
            step,
            w_out: weights.w_out.clone(),
            x: unroller.state().x().clone(),
            x_unroll: unroller.anchor().x().clone(),
        }
    }

    fn take(self, weights: &mut WeightSet) -> Result<SpectrumSnapshot> {
        let current = std::mem::replace(&mut weights.w_out, self.w_out);
        let snap = snapshot(weights, self.x.view(), self.x_unroll.view(), self.step);
        weights.w_out = current;
        snap
    }
}

struct Recorder {
    spectra: Vec<SpectrumSnapshot>,
    trace: Vec<TracePoint>,
}

impl Recorder {
    fn into_result(
        self,
        seed: u64,
        final_step: usize,
        converged_at: Option<usize>,
        stop_reason: Option<StopReason>,
    ) -> ExperimentResult {
        let radius_timeline = self
            .spectra
            .iter()
            .map(|s| RadiusPoint {
                step: s.step,
                radius_center: s.radius,
                radius_origin: s.radius_origin(),
            })
            .collect();
        let train_rmse = rmse(self.trace.iter().filter(|p| p.phase == Phase::Train));
        let test_rmse = rmse(self.trace.iter().filter(|p| p.phase == Phase::Test));
        ExperimentResult {
            seed,
            radius_timeline,
            spectra: self.spectra,
            trace: self.trace,
            converged_at,
            stop_reason,
            final_step,
            train_rmse,
            test_rmse,
        }
    }
}

fn aborted(error: Error, recorder: Recorder, seed: u64, step: usize) -> Error {
    Error::RunAborted {
        source: Box::new(error),
        partial: Box::new(recorder.into_result(seed, step, None, None)),
    }
}

/// Trains the readout under the configured schedule, then runs a closed-loop
/// test phase with the readout frozen.
fn train(config: &ExperimentConfig) -> Result<TrainingRun> {
    config.validate()?;
    let seed = config.reservoir.seed;
    let (mut weights, initial) = init_network(&config.reservoir)?;
    let mut learner = Learner::for_target(&config.target, config.reservoir.n, config.extra.force_alpha)?;
    let mut unroller = Unroller::new(initial, config.schedule, config.reservoir.dt)?;
    let mut rec = Recorder {
        spectra: Vec::new(),
        trace: Vec::new(),
    };

    let max_steps = config.stopping.max_steps;
    let cadence = config.snapshot_cadence;
    let mut previous: Option<Pending> = None;
    let mut last_violation: Option<usize> = None;
    let mut step = 0usize;

    let stop = loop {
        let f = config.target.eval(step);
        let r = unroller.state().r().view();
        let z = weights.readout(r)?;
        rec.trace.push(TracePoint {
            step,
            phase: Phase::Train,
            z,
            target: f,
        });

        let update_now = match config.extra.update_cadence {
            UpdateCadence::EveryStep => true,
            UpdateCadence::SegmentEnd => config.schedule.is_segment_end(step),
        };
        if update_now {
            if let Err(e) = learner.update(r, f) {
                return Err(aborted(with_step(e, step), rec, seed, step));
            }
            weights.w_out.assign(learner.trainer().w_out());
        }

        if learner.trainer().weight_delta() > config.stopping.weight_delta_tol {
            last_violation = Some(step);
        }
        let stop = if learner.stops_early() {
            stop_reason(learner.trainer(), step, &config.stopping)
        } else if step >= max_steps {
            Some(StopReason::MaxSteps)
        } else {
            None
        };

        let here = Pending::capture(step, &weights, &unroller);
        let due = step == 0 || step.is_multiple_of(cadence);
        if stop.is_some() {
            if let Some(prev) = previous.take() {
                match prev.take(&mut weights) {
                    Ok(s) => rec.spectra.push(s),
                    Err(e) => return Err(aborted(e, rec, seed, step)),
                }
            }
            match here.take(&mut weights) {
                Ok(s) => rec.spectra.push(s),
                Err(e) => return Err(aborted(e, rec, seed, step)),
            }
            break stop;
        }
        if due {
            match here.take(&mut weights) {
                Ok(s) => rec.spectra.push(s),
                Err(e) => return Err(aborted(e, rec, seed, step)),
            }
            previous = None;
        } else {
            previous = Some(here);
        }

        if let Err(e) = unroller.advance(&weights) {
            return Err(aborted(e, rec, seed, step));
        }
        step += 1;
    };

    let converged_at = match stop {
        Some(StopReason::WeightDelta) => Some(step),
        // Fixed-length runs: first step after which the readout stayed settled.
        _ if !learner.stops_early() => match last_violation {
            None => Some(0),
            Some(v) if v < step => Some(v + 1),
            Some(_) => None,
        },
        _ => None,
    };

    let test_steps = config.extra.test_steps.unwrap_or(step);
    let trained = unroller.clone();
    let mut tester = Unroller::new(
        unroller.state().clone(),
        config.extra.test_schedule,
        config.reservoir.dt,
    )?;
    for _ in 0..test_steps {
        if let Err(e) = tester.advance(&weights) {
            return Err(aborted(e, rec, seed, step));
        }
        let t = tester.state().step();
        rec.trace.push(TracePoint {
            step: t,
            phase: Phase::Test,
            z: weights.readout(tester.state().r().view())?,
            target: config.target.eval(t),
        });
    }

    Ok(TrainingRun {
        result: rec.into_result(seed, step, converged_at, stop),
        network: TrainedNetwork {
            weights,
            unroller: trained,
        },
    })
}

fn with_step(e: Error, step: usize) -> Error {
    match e {
        Error::Divergence { detail, .. } => Error::Divergence { step, detail },
        other => other,
    }
}

/// Exact-fit training towards a constant target.
pub fn run_fixed_point(config: &ExperimentConfig) -> Result<TrainingRun> {
    if !matches!(config.target, TargetFunction::FixedPoint { .. }) {
        return Err(Error::invalid("target", "fixed-point training needs a constant target"));
    }
    train(config)
}

/// FORCE training towards a sinusoid.
pub fn run_time_varying(config: &ExperimentConfig) -> Result<TrainingRun> {
    if !matches!(config.target, TargetFunction::Sinusoid { .. }) {
        return Err(Error::invalid("target", "time-varying training needs a sinusoidal target"));
    }
    if config.schedule == UnrollSchedule::ClosedLoop {
        return Err(Error::invalid("schedule", "training runs on an unrolled schedule"));
    }
    train(config)
}

#[derive(Debug)]
pub struct SweepEntry {
    pub interval: usize,
    pub outcome: Result<TrainingRun>,
}

/// One time-varying run per integrated-unrolling interval. Failures are kept
/// per entry and do not stop the sweep.
pub fn run_unroll_sweep(config: &ExperimentConfig) -> Result<Vec<SweepEntry>> {
    config.validate()?;
    Ok(config
        .extra
        .sweep_intervals
        .iter()
        .map(|&interval| {
            let mut c = config.clone();
            c.schedule = UnrollSchedule::unrolled(interval);
            SweepEntry {
                interval,
                outcome: run_time_varying(&c),
            }
        })
        .collect())
}

#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub run: TrainingRun,
    /// Final-step spectrum of the unrolled dynamics.
    pub unrolled: SpectrumSnapshot,
    /// Spectrum of the closed-loop Jacobian at the solved fixed point.
    pub closed_loop: SpectrumSnapshot,
    pub fixed_point: Array1<f64>,
    pub fixed_point_residual: f64,
    pub distance: f64,
}

/// Compares the final unrolled spectrum of a fixed-point run with the
/// closed-loop spectrum linearized at the solved fixed point.
pub fn run_closed_loop_validation(config: &ExperimentConfig) -> Result<ValidationReport> {
    let run = run_fixed_point(config)?;
    let amplitude = config.target.amplitude();
    let weights = &run.network.weights;
    let fixed_point = solve_fixed_point_from(
        weights,
        amplitude,
        config.extra.fixed_point,
        run.network.unroller.state().x().view(),
    )?;
    let residual = fixed_point_residual(weights, amplitude, fixed_point.view());
    let j = jacobian_closed(
        weights.w.view(),
        weights.w_fb.view(),
        weights.w_out.view(),
        fixed_point.view(),
    )?;
    let closed_loop =
        SpectrumSnapshot::from_eigenvalues(run.result.final_step, eigenspectrum(j.view())?);
    let unrolled = run
        .result
        .final_spectrum()
        .cloned()
        .ok_or_else(|| Error::invalid("snapshot_cadence", "run produced no spectra"))?;
    let distance = hausdorff(&unrolled.eigenvalues, &closed_loop.eigenvalues)?;
    Ok(ValidationReport {
        run,
        unrolled,
        closed_loop,
        fixed_point,
        fixed_point_residual: residual,
        distance,
    })
}

#[derive(Debug, Clone)]
pub struct PcaReport {
    pub run: TrainingRun,
    pub history: RateHistory,
    pub decomposition: PcDecomposition,
    /// `(component, projection)` for every requested component.
    pub projections: Vec<(usize, Array1<f64>)>,
    /// `(component, mean-crossing rate)`.
    pub scores: Vec<(usize, f64)>,
}

/// Trains, then keeps the unrolled network running with a frozen readout and
/// analyses the recorded rates.
pub fn run_pca(config: &ExperimentConfig) -> Result<PcaReport> {
    config.validate()?;
    let window = config.extra.pca_window;
    if window < 2 {
        return Err(Error::InsufficientHistory {
            required: 2,
            actual: window,
        });
    }
    let run = train(config)?;
    let weights = &run.network.weights;
    let mut unroller = run.network.unroller.clone();
    let mut history = RateHistory::with_capacity(config.reservoir.n, window);
    for _ in 0..window {
        unroller.advance(weights)?;
        history.push(unroller.state().step(), unroller.state().r().view())?;
    }
    let d = correlation_matrix(&history)?;
    let decomposition = pc_decomposition(d.view())?;
    let mut projections = Vec::with_capacity(config.extra.pca_components.len());
    let mut scores = Vec::with_capacity(config.extra.pca_components.len());
    for &a in &config.extra.pca_components {
        let p = project_trajectory(&history, &decomposition, a)?;
        scores.push((a, fluctuation_score(p.view())?));
        projections.push((a, p));
    }
    Ok(PcaReport {
        run,
        history,
        decomposition,
        projections,
        scores,
    })
}

/// Runs `f` once per configured seed, in parallel. Results keep seed order.
pub fn run_seeds<T, F>(config: &ExperimentConfig, f: F) -> Vec<(u64, Result<T>)>
where
    T: Send,
    F: Fn(&ExperimentConfig) -> Result<T> + Sync,
{
    config
        .seeds
        .par_iter()
        .map(|&seed| (seed, f(&config.for_seed(seed))))
        .collect()
}
