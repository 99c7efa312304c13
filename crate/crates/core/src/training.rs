//! Online readout training.
//!
//! Fixed-point targets use a minimum-norm exact fit per state; time-varying
//! targets use recursive least squares (FORCE).

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, Error, Result};

/// Desired readout as a function of the step index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetFunction {
    FixedPoint {
        amplitude: f64,
    },
    /// `amplitude * sin(omega * step * time_scale)`.
    Sinusoid {
        omega: f64,
        time_scale: f64,
        #[serde(default = "unit")]
        amplitude: f64,
    },
}

fn unit() -> f64 {
    1.0
}

impl TargetFunction {
    pub const DEFAULT_AMPLITUDE: f64 = 1.5;
    pub const DEFAULT_OMEGA: f64 = 20.0 * std::f64::consts::PI;
    /// One period of the default sinusoid spans 100 steps.
    pub const DEFAULT_TIME_SCALE: f64 = 1e-3;

    pub fn fixed_point(amplitude: f64) -> Self {
        TargetFunction::FixedPoint { amplitude }
    }

    pub fn sinusoid(amplitude: f64) -> Self {
        TargetFunction::Sinusoid {
            omega: Self::DEFAULT_OMEGA,
            time_scale: Self::DEFAULT_TIME_SCALE,
            amplitude,
        }
    }

    pub fn eval(&self, step: usize) -> f64 {
        match *self {
            TargetFunction::FixedPoint { amplitude } => amplitude,
            TargetFunction::Sinusoid {
                omega,
                time_scale,
                amplitude,
            } => amplitude * (omega * step as f64 * time_scale).sin(),
        }
    }

    pub fn amplitude(&self) -> f64 {
        match *self {
            TargetFunction::FixedPoint { amplitude } | TargetFunction::Sinusoid { amplitude, .. } => {
                amplitude
            }
        }
    }
}

impl Default for TargetFunction {
    fn default() -> Self {
        Self::fixed_point(Self::DEFAULT_AMPLITUDE)
    }
}

/// Shared view of a readout learner for the stopping rule.
pub trait ReadoutTrainer {
    fn w_out(&self) -> &Array1<f64>;
    fn last_w_out(&self) -> &Array1<f64>;

    /// Euclidean norm of the last readout change, `|w_out - last_w_out|`.
    fn weight_delta(&self) -> f64 {
        self.w_out()
            .iter()
            .zip(self.last_w_out())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>().sqrt()
    }
}

/// Minimum-norm correction that makes `w_out . r == a`.
pub fn lsq_fixed_point_update(
    w_out: ArrayView1<'_, f64>,
    r: ArrayView1<'_, f64>,
    a: f64,
) -> Result<Array1<f64>> {
    ensure_len("lsq_fixed_point_update", w_out.len(), r.len())?;
    let norm_sq = r.dot(&r);
    if !(norm_sq >= 1e-12) {
        return Err(Error::DegenerateRates { norm_sq });
    }
    let residual = a - w_out.dot(&r);
    let mut next = w_out.to_owned();
    next.scaled_add(residual / norm_sq, &r);
    Ok(next)
}

/// Readout trained by per-state exact fits.
#[derive(Debug, Clone, PartialEq)]
pub struct LsqTrainer {
    w_out: Array1<f64>,
    last_w_out: Array1<f64>,
}

impl LsqTrainer {
    pub fn new(n: usize) -> Self {
        Self {
            w_out: Array1::zeros(n),
            last_w_out: Array1::zeros(n),
        }
    }

    /// Fits the current state and returns the pre-update error `w_out . r - a`.
    pub fn update(&mut self, r: ArrayView1<'_, f64>, a: f64) -> Result<f64> {
        let error = self.w_out.dot(&r) - a;
        let next = lsq_fixed_point_update(self.w_out.view(), r, a)?;
        self.last_w_out = std::mem::replace(&mut self.w_out, next);
        Ok(error)
    }
}

impl ReadoutTrainer for LsqTrainer {
    fn w_out(&self) -> &Array1<f64> {
        &self.w_out
    }
    fn last_w_out(&self) -> &Array1<f64> {
        &self.last_w_out
    }
}

/// Recursive-least-squares state of a FORCE learner.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainerState {
    /// Running estimate of the inverse rate correlation matrix.
    pub p: Array2<f64>,
    pub w_out: Array1<f64>,
    pub last_w_out: Array1<f64>,
    /// Regularizer; `p` starts at `I / alpha`.
    pub alpha: f64,
}

pub fn force_init(n: usize, alpha: f64) -> Result<TrainerState> {
    if n == 0 {
        return Err(Error::invalid("n", "neuron count must be at least 1"));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::invalid("alpha", format!("must be positive, got {alpha}")));
    }
    Ok(TrainerState {
        p: Array2::eye(n) / alpha,
        w_out: Array1::zeros(n),
        last_w_out: Array1::zeros(n),
        alpha,
    })
}

/// One RLS step. Returns the pre-update error `w_out . r - target`.
///
/// With `k = P r` and `c = 1 / (1 + r . k)`:
/// `P <- P - c k k^T` and `w_out <- w_out - c e k`.
pub fn force_update(trainer: &mut TrainerState, r: ArrayView1<'_, f64>, target: f64) -> Result<f64> {
    let n = trainer.w_out.len();
    ensure_len("force_update", n, r.len())?;
    if r.iter().any(|v| !v.is_finite()) || !target.is_finite() {
        return Err(Error::Divergence {
            step: 0,
            detail: "non-finite rates or target passed to the RLS update".into(),
        });
    }

    let k = trainer.p.dot(&r);
    let c = 1.0 / (1.0 + r.dot(&k));
    let error = trainer.w_out.dot(&r) - target;
    if !(c.is_finite() && error.is_finite()) {
        return Err(Error::Divergence {
            step: 0,
            detail: format!("RLS gain {c}, error {error}"),
        });
    }

    // Rank-one downdate, symmetrized by construction: both triangles see the
    // same product k_i k_j.
    for i in 0..n {
        let ck = c * k[i];
        let mut row = trainer.p.row_mut(i);
        for (pij, &kj) in row.iter_mut().zip(k.iter()) {
            *pij -= ck * kj;
        }
    }

    let mut next = trainer.w_out.clone();
    next.scaled_add(-c * error, &k);
    trainer.last_w_out = std::mem::replace(&mut trainer.w_out, next);
    Ok(error)
}

impl ReadoutTrainer for TrainerState {
    fn w_out(&self) -> &Array1<f64> {
        &self.w_out
    }
    fn last_w_out(&self) -> &Array1<f64> {
        &self.last_w_out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StoppingCriteria {
    pub max_steps: usize,
    pub weight_delta_tol: f64,
}

impl Default for StoppingCriteria {
    fn default() -> Self {
        Self {
            max_steps: 800,
            weight_delta_tol: 1e-5,
        }
    }
}

/// Why a training run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    WeightDelta,
    MaxSteps,
}

/// `step >= max_steps` or the norm of the last readout change is within tolerance.
pub fn check_converged<T: ReadoutTrainer + ?Sized>(
    trainer: &T,
    step: usize,
    criteria: &StoppingCriteria,
) -> bool {
    stop_reason(trainer, step, criteria).is_some()
}

pub fn stop_reason<T: ReadoutTrainer + ?Sized>(
    trainer: &T,
    step: usize,
    criteria: &StoppingCriteria,
) -> Option<StopReason> {
    if trainer.weight_delta() <= criteria.weight_delta_tol {
        Some(StopReason::WeightDelta)
    } else if step >= criteria.max_steps {
        Some(StopReason::MaxSteps)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn lsq_leaves_exact_fit_unchanged() {
        let w = array![0.5, -1.0, 2.0];
        let r = array![0.2, 0.1, 0.3];
        let a = w.dot(&r);
        assert_eq!(lsq_fixed_point_update(w.view(), r.view(), a).unwrap(), w);
    }

    #[test]
    fn lsq_hand_example() {
        let r = array![1.0, 1.0];
        let w = lsq_fixed_point_update(Array1::zeros(2).view(), r.view(), 1.5).unwrap();
        assert_eq!(w, array![0.75, 0.75]);
        assert_eq!(w.dot(&r), 1.5);
    }

    #[test]
    fn lsq_rejects_silent_network() {
        let r = array![1e-7, 0.0];
        assert!(matches!(
            lsq_fixed_point_update(Array1::zeros(2).view(), r.view(), 1.0),
            Err(Error::DegenerateRates { .. })
        ));
    }

    proptest! {
        #[test]
        fn lsq_exact_fit(
            w in proptest::collection::vec(-3.0f64..3.0, 1..40),
            seed in proptest::collection::vec(-0.99f64..0.99, 40),
            a in -5.0f64..5.0,
        ) {
            let n = w.len();
            let r = Array1::from(seed[..n].to_vec());
            prop_assume!(r.dot(&r) >= 1e-6);
            let w = Array1::from(w);
            let next = lsq_fixed_point_update(w.view(), r.view(), a).unwrap();
            prop_assert!((next.dot(&r) - a).abs() <= 1e-10);
        }
    }

    #[test]
    fn force_init_scales_identity() {
        let t = force_init(3, 1.0).unwrap();
        assert_eq!(t.p, Array2::<f64>::eye(3));
        let t = force_init(2, 10.0).unwrap();
        assert_eq!(t.p, Array2::<f64>::eye(2) * 0.1);
        assert!(t.w_out.iter().chain(&t.last_w_out).all(|&v| v == 0.0));
        assert!(force_init(0, 1.0).is_err());
        assert!(force_init(3, 0.0).is_err());
    }

    #[test]
    fn force_zero_error_keeps_weights() {
        let mut t = force_init(3, 1.0).unwrap();
        let p0 = t.p.clone();
        let e = force_update(&mut t, array![0.1, -0.2, 0.3].view(), 0.0).unwrap();
        assert_eq!(e, 0.0);
        assert!(t.w_out.iter().all(|&v| v == 0.0));
        assert_ne!(t.p, p0);
    }

    #[test]
    fn force_reduces_error_at_update_point() {
        let mut t = force_init(4, 1.0).unwrap();
        let samples = [
            (array![0.1, 0.5, -0.3, 0.8], 1.0),
            (array![-0.6, 0.2, 0.4, 0.1], -0.5),
            (array![0.3, 0.3, 0.3, 0.3], 0.2),
        ];
        for _ in 0..5 {
            for (r, f) in &samples {
                let before = force_update(&mut t, r.view(), *f).unwrap();
                let after = t.w_out.dot(r) - f;
                if before != 0.0 {
                    assert!(after.abs() < before.abs());
                }
            }
        }
    }

    #[test]
    fn force_converges_to_ridge_solution() {
        // Independent oracle: solve the 2x2 normal equations by Cramer's rule.
        let rows = [[0.3, -0.7], [0.9, 0.1], [-0.4, 0.5], [0.2, 0.8]];
        let f = [0.5, -1.0, 0.25, 0.75];
        let alpha = 1.0;
        let passes = 50usize;

        let (mut a11, mut a12, mut a22, mut b1, mut b2) = (alpha, 0.0, alpha, 0.0, 0.0);
        for (r, y) in rows.iter().zip(f) {
            let m = passes as f64;
            a11 += m * r[0] * r[0];
            a12 += m * r[0] * r[1];
            a22 += m * r[1] * r[1];
            b1 += m * r[0] * y;
            b2 += m * r[1] * y;
        }
        let det = a11 * a22 - a12 * a12;
        let ridge = [(b1 * a22 - a12 * b2) / det, (a11 * b2 - a12 * b1) / det];

        let mut t = force_init(2, alpha).unwrap();
        for _ in 0..passes {
            for (r, y) in rows.iter().zip(f) {
                force_update(&mut t, array![r[0], r[1]].view(), y).unwrap();
            }
        }
        assert_abs_diff_eq!(t.w_out[0], ridge[0], epsilon = 1e-9);
        assert_abs_diff_eq!(t.w_out[1], ridge[1], epsilon = 1e-9);
    }

    #[test]
    fn force_flags_non_finite_rates() {
        let mut t = force_init(2, 1.0).unwrap();
        assert!(matches!(
            force_update(&mut t, array![f64::NAN, 0.0].view(), 1.0),
            Err(Error::Divergence { .. })
        ));
    }

    #[test]
    fn stopping_rule() {
        let criteria = StoppingCriteria::default();
        let mut t = force_init(2, 1.0).unwrap();
        t.w_out = array![0.1, 0.0];
        assert!(check_converged(&t, 800, &criteria));
        assert!(!check_converged(&t, 5, &criteria));
        t.last_w_out = t.w_out.clone();
        assert!(check_converged(&t, 5, &criteria));
        assert_eq!(stop_reason(&t, 5, &criteria), Some(StopReason::WeightDelta));
    }

    #[test]
    fn target_functions() {
        let fp = TargetFunction::fixed_point(1.5);
        assert!((0..100).all(|t| fp.eval(t) == 1.5));
        let s = TargetFunction::sinusoid(1.0);
        assert_abs_diff_eq!(s.eval(25), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.eval(100), 0.0, epsilon = 1e-12);
    }
}
