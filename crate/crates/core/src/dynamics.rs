//! Rate-network construction and explicit-Euler integration.
//!
//! The network state evolves as
//!
//! ```text
//! x(t+1) = x(t) + dt * (-x(t) + W r(t) + w_fb * z_fb)      r = tanh(x)
//! ```
//!
//! where `z_fb` is a readout supplied by the caller. In closed-loop mode it is
//! the readout of the current rates; in unrolled mode it is the readout of an
//! earlier *anchor* state, which turns the feedback loop into a cascade of
//! open-loop systems. [`Unroller`] tracks which state is the anchor for a given
//! [`UnrollSchedule`].

use ndarray::{Array1, Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, Error, Result};
use crate::pca::RateHistory;

/// Size, gain and integration settings of a reservoir.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReservoirParams {
    /// Number of neurons.
    pub n: usize,
    /// Synaptic gain; recurrent weights have variance `g^2 / n`.
    pub g: f64,
    /// Euler step in units of the membrane time constant.
    pub dt: f64,
    /// Standard deviation of the initial internal state.
    pub init_state_scale: f64,
    /// Multiplier on the uniform `[-1, 1]` feedback weights.
    pub feedback_scale: f64,
    pub seed: u64,
}

impl Default for ReservoirParams {
    fn default() -> Self {
        Self {
            n: 1000,
            g: 1.5,
            dt: 1.0,
            init_state_scale: 0.5,
            feedback_scale: 1.0,
            seed: 0,
        }
    }
}

impl ReservoirParams {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("n", "neuron count must be at least 1"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid("dt", format!("must be positive, got {}", self.dt)));
        }
        if !(self.g >= 0.0 && self.g.is_finite()) {
            return Err(Error::invalid("g", format!("must be nonnegative, got {}", self.g)));
        }
        if !(self.init_state_scale >= 0.0 && self.init_state_scale.is_finite()) {
            return Err(Error::invalid(
                "init_state_scale",
                format!("must be nonnegative, got {}", self.init_state_scale),
            ));
        }
        if !self.feedback_scale.is_finite() {
            return Err(Error::invalid("feedback_scale", "must be finite"));
        }
        Ok(())
    }
}

/// Synaptic weights of a reservoir with a single feedback readout.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSet {
    /// Recurrent weights, `n x n`. Fixed after construction.
    pub w: Array2<f64>,
    /// Feedback weights from the readout back into the reservoir.
    pub w_fb: Array1<f64>,
    /// Readout weights; the only trained quantity.
    pub w_out: Array1<f64>,
    /// Input weights. Kept for completeness; every experiment runs with zero
    /// external input so they never enter the update.
    pub w_in: Array1<f64>,
}

impl WeightSet {
    pub fn n(&self) -> usize {
        self.w_fb.len()
    }

    /// Output `z = w_out . r`.
    pub fn readout(&self, r: ArrayView1<'_, f64>) -> Result<f64> {
        readout(self, r)
    }
}

pub fn readout(weights: &WeightSet, r: ArrayView1<'_, f64>) -> Result<f64> {
    ensure_len("readout", weights.w_out.len(), r.len())?;
    Ok(weights.w_out.dot(&r))
}

/// Internal state `x` and firing rates `r = tanh(x)` at a given step.
#[derive(Debug, Clone, PartialEq)]
pub struct ReservoirState {
    x: Array1<f64>,
    r: Array1<f64>,
    step: usize,
}

impl ReservoirState {
    pub fn from_x(x: Array1<f64>, step: usize) -> Self {
        let r = x.mapv(f64::tanh);
        Self { x, r, step }
    }

    pub fn x(&self) -> &Array1<f64> {
        &self.x
    }

    pub fn r(&self) -> &Array1<f64> {
        &self.r
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }
}

/// How the feedback loop is broken while integrating.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum UnrollSchedule {
    /// Feedback from the current rates.
    ClosedLoop,
    /// Feedback from the rates one step back.
    #[default]
    PerStep,
    /// Feedback held at the readout of the last state of the previous
    /// `interval`-step segment.
    Integrated { interval: usize },
}


impl UnrollSchedule {
    /// Unrolled schedule with segments of `interval` steps; `1` gives
    /// [`UnrollSchedule::PerStep`].
    pub fn unrolled(interval: usize) -> Self {
        if interval == 1 {
            UnrollSchedule::PerStep
        } else {
            UnrollSchedule::Integrated { interval }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            UnrollSchedule::Integrated { interval: 0 } => {
                Err(Error::invalid("unroll_interval", "must be at least 1"))
            }
            _ => Ok(()),
        }
    }

    /// Segment length; `None` for closed-loop integration.
    pub fn interval(&self) -> Option<usize> {
        match *self {
            UnrollSchedule::ClosedLoop => None,
            UnrollSchedule::PerStep => Some(1),
            UnrollSchedule::Integrated { interval } => Some(interval),
        }
    }

    /// Step index of the state whose readout drives the transition out of
    /// state `step`.
    ///
    /// With interval `k`, states `mk+1 ..= (m+1)k` are driven by state `mk`,
    /// so for `k = 1` the feedback lags by exactly one step.
    pub fn anchor_step(&self, step: usize) -> usize {
        match self.interval() {
            None => step,
            Some(_) if step == 0 => 0,
            Some(k) => k * ((step - 1) / k),
        }
    }

    /// Whether `step` closes an unrolling segment.
    pub fn is_segment_end(&self, step: usize) -> bool {
        match self.interval() {
            None => true,
            Some(k) => step.is_multiple_of(k),
        }
    }
}

/// Draws recurrent, feedback and input weights plus the initial state.
///
/// Draw order is fixed (`W` row-major, `w_fb`, `w_in`, `x(0)`) so a seed
/// reproduces the network bit for bit.
pub fn init_network(params: &ReservoirParams) -> Result<(WeightSet, ReservoirState)> {
    params.validate()?;
    let n = params.n;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    let w_std = params.g / (n as f64).sqrt();
    let w = Array2::from_shape_simple_fn((n, n), || {
        w_std * rng.sample::<f64, _>(StandardNormal)
    });
    let w_fb = Array1::from_shape_simple_fn(n, || {
        params.feedback_scale * rng.random_range(-1.0..=1.0)
    });
    let w_in = Array1::from_shape_simple_fn(n, || rng.random_range(-1.0..=1.0));
    let x0 = Array1::from_shape_simple_fn(n, || {
        params.init_state_scale * rng.sample::<f64, _>(StandardNormal)
    });

    let weights = WeightSet {
        w,
        w_fb,
        w_out: Array1::zeros(n),
        w_in,
    };
    Ok((weights, ReservoirState::from_x(x0, 0)))
}

/// One Euler step with an externally supplied feedback value.
pub fn step(
    state: &ReservoirState,
    weights: &WeightSet,
    z_fb: f64,
    dt: f64,
) -> Result<ReservoirState> {
    ensure_len("step", weights.n(), state.n())?;
    if !z_fb.is_finite() {
        return Err(Error::Divergence {
            step: state.step,
            detail: format!("feedback value is {z_fb}"),
        });
    }
    if state.x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence {
            step: state.step,
            detail: "non-finite internal state".into(),
        });
    }

    let drive = weights.w.dot(&state.r);
    let mut x = state.x.clone();
    ndarray::Zip::from(&mut x)
        .and(&drive)
        .and(&weights.w_fb)
        .for_each(|x, &wr, &fb| *x += dt * (-*x + wr + fb * z_fb));

    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence {
            step: state.step + 1,
            detail: "internal state became non-finite".into(),
        });
    }
    Ok(ReservoirState::from_x(x, state.step + 1))
}

/// Integrates `steps` Euler steps with the feedback held at `z_unroll`.
///
/// Returns the final state and the rates of every state produced (one row per
/// step, excluding the starting state).
pub fn run_unrolled_segment(
    state: &ReservoirState,
    weights: &WeightSet,
    z_unroll: f64,
    steps: usize,
    dt: f64,
) -> Result<(ReservoirState, RateHistory)> {
    if steps == 0 {
        return Err(Error::invalid("steps", "segment length must be at least 1"));
    }
    let mut history = RateHistory::with_capacity(state.n(), steps);
    let mut current = step(state, weights, z_unroll, dt)?;
    history.push(current.step, current.r.view())?;
    for _ in 1..steps {
        current = step(&current, weights, z_unroll, dt)?;
        history.push(current.step, current.r.view())?;
    }
    Ok((current, history))
}

/// Settings for the damped fixed-point iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FixedPointOptions {
    pub max_iters: usize,
    pub tol: f64,
    /// Damping factor in `(0, 1]`; 1 is plain Picard iteration.
    pub relaxation: f64,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        Self {
            max_iters: 20_000,
            tol: 1e-12,
            relaxation: 0.5,
        }
    }
}

/// Solves `x = W tanh(x) + w_fb * a` starting from `x = 0`.
pub fn solve_fixed_point(
    weights: &WeightSet,
    a: f64,
    options: FixedPointOptions,
) -> Result<Array1<f64>> {
    solve_fixed_point_from(weights, a, options, Array1::zeros(weights.n()).view())
}

/// Same as [`solve_fixed_point`] with an explicit starting point. The trained
/// network may have several fixed points; starting from its final state picks
/// the one it actually settled into.
pub fn solve_fixed_point_from(
    weights: &WeightSet,
    a: f64,
    options: FixedPointOptions,
    initial: ArrayView1<'_, f64>,
) -> Result<Array1<f64>> {
    ensure_len("solve_fixed_point", weights.n(), initial.len())?;
    let FixedPointOptions {
        max_iters,
        tol,
        relaxation,
    } = options;
    if !(relaxation > 0.0 && relaxation <= 1.0) {
        return Err(Error::invalid("relaxation", format!("must lie in (0, 1], got {relaxation}")));
    }
    if !(tol > 0.0) {
        return Err(Error::invalid("tol", "must be positive"));
    }

    let mut x = initial.to_owned();
    let mut residual = f64::INFINITY;
    for _ in 0..max_iters {
        let image = fixed_point_map(weights, a, x.view());
        residual = max_abs_diff(x.view(), image.view());
        if residual <= tol {
            return Ok(x);
        }
        if !residual.is_finite() {
            break;
        }
        x.zip_mut_with(&image, |xi, &fi| *xi = (1.0 - relaxation) * *xi + relaxation * fi);
    }
    // The last update may have landed inside tolerance.
    let final_residual = fixed_point_residual(weights, a, x.view());
    if final_residual <= tol {
        return Ok(x);
    }
    Err(Error::FixedPointNonConvergence {
        iterations: max_iters,
        residual: final_residual.min(residual),
    })
}

/// `max_i |x_i - (W tanh(x) + w_fb a)_i|`.
pub fn fixed_point_residual(weights: &WeightSet, a: f64, x: ArrayView1<'_, f64>) -> f64 {
    let image = fixed_point_map(weights, a, x);
    max_abs_diff(x, image.view())
}

fn fixed_point_map(weights: &WeightSet, a: f64, x: ArrayView1<'_, f64>) -> Array1<f64> {
    let mut image = weights.w.dot(&x.mapv(f64::tanh));
    image.scaled_add(a, &weights.w_fb);
    image
}

fn max_abs_diff(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Integrates a network under an [`UnrollSchedule`], keeping track of the
/// anchor state whose readout is fed back.
#[derive(Debug, Clone)]
pub struct Unroller {
    schedule: UnrollSchedule,
    dt: f64,
    state: ReservoirState,
    anchor: ReservoirState,
}

impl Unroller {
    pub fn new(initial: ReservoirState, schedule: UnrollSchedule, dt: f64) -> Result<Self> {
        schedule.validate()?;
        if !(dt > 0.0) {
            return Err(Error::invalid("dt", "must be positive"));
        }
        Ok(Self {
            schedule,
            dt,
            anchor: initial.clone(),
            state: initial,
        })
    }

    pub fn schedule(&self) -> UnrollSchedule {
        self.schedule
    }

    pub fn state(&self) -> &ReservoirState {
        &self.state
    }

    /// State whose readout drives the next transition; also the `x_unroll`
    /// used when linearizing around the current state.
    pub fn anchor(&self) -> &ReservoirState {
        match self.schedule {
            UnrollSchedule::ClosedLoop => &self.state,
            _ => &self.anchor,
        }
    }

    pub fn feedback(&self, weights: &WeightSet) -> Result<f64> {
        weights.readout(self.anchor().r.view())
    }

    /// Advances one step and returns the feedback value that was applied.
    pub fn advance(&mut self, weights: &WeightSet) -> Result<f64> {
        let z = self.feedback(weights)?;
        let next = step(&self.state, weights, z, self.dt)?;
        // anchor(t + 1) = k * floor(t / k)
        if let Some(k) = self.schedule.interval() {
            if self.state.step.is_multiple_of(k) {
                self.anchor = std::mem::replace(&mut self.state, next);
                return Ok(z);
            }
        }
        self.state = next;
        Ok(z)
    }

    pub fn into_state(self) -> ReservoirState {
        self.state
    }
}
