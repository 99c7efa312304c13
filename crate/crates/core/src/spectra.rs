//! Linearized dynamics and their eigenvalue spectra.
//!
//! Around a state `x` whose feedback comes from an anchor state `x_u`, the
//! unrolled dynamics linearize to
//!
//! ```text
//! J = -I + W diag(phi'(x)) + w_fb w_out^T diag(phi'(x_u))
//! ```
//!
//! and the closed-loop dynamics to the same expression with `x_u = x`. The
//! spectrum of `J` is the spectrum of the bracketed matrix shifted by `-1`, so
//! its natural size measure is the radius about `-1`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::WeightSet;
use crate::error::{ensure_len, Error, Result};

/// Derivative of `tanh`, `1 - tanh(x)^2`.
pub fn phi_prime(x: ArrayView1<'_, f64>) -> Array1<f64> {
    x.mapv(|v| {
        let t = v.tanh();
        1.0 - t * t
    })
}

/// Jacobian of the unrolled dynamics at `x_current` with feedback anchored
/// at `x_unroll`.
pub fn jacobian_unrolled(
    w: ArrayView2<'_, f64>,
    w_fb: ArrayView1<'_, f64>,
    w_out: ArrayView1<'_, f64>,
    x_current: ArrayView1<'_, f64>,
    x_unroll: ArrayView1<'_, f64>,
) -> Result<Array2<f64>> {
    let n = check_shapes(w, w_fb, w_out, x_current)?;
    ensure_len("jacobian_unrolled x_unroll", n, x_unroll.len())?;
    let d_current = phi_prime(x_current);
    let d_unroll = phi_prime(x_unroll);

    let mut j = Array2::zeros((n, n));
    for ((row, w_row), &fb) in j.outer_iter_mut().zip(w.outer_iter()).zip(w_fb.iter()) {
        for ((jij, &wij), (&dc, (&wo, &du))) in row
            .into_iter()
            .zip(w_row.iter())
            .zip(d_current.iter().zip(w_out.iter().zip(d_unroll.iter())))
        {
            *jij = wij * dc + fb * wo * du;
        }
    }
    for i in 0..n {
        j[[i, i]] -= 1.0;
    }
    Ok(j)
}

/// Jacobian of the closed-loop dynamics, `-I + (W + w_fb w_out^T) diag(phi'(x))`.
pub fn jacobian_closed(
    w: ArrayView2<'_, f64>,
    w_fb: ArrayView1<'_, f64>,
    w_out: ArrayView1<'_, f64>,
    x: ArrayView1<'_, f64>,
) -> Result<Array2<f64>> {
    jacobian_unrolled(w, w_fb, w_out, x, x)
}

fn check_shapes(
    w: ArrayView2<'_, f64>,
    w_fb: ArrayView1<'_, f64>,
    w_out: ArrayView1<'_, f64>,
    x: ArrayView1<'_, f64>,
) -> Result<usize> {
    let (rows, cols) = w.dim();
    ensure_len("jacobian columns", rows, cols)?;
    ensure_len("jacobian w_fb", rows, w_fb.len())?;
    ensure_len("jacobian w_out", rows, w_out.len())?;
    ensure_len("jacobian x", rows, x.len())?;
    Ok(rows)
}

/// All eigenvalues of a dense real matrix.
pub fn eigenspectrum(m: ArrayView2<'_, f64>) -> Result<Vec<Complex64>> {
    let (rows, cols) = m.dim();
    ensure_len("eigenspectrum", rows, cols)?;
    if rows == 0 {
        return Ok(Vec::new());
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("matrix", "eigenspectrum input contains non-finite entries"));
    }
    let mat = faer::Mat::<f64>::from_fn(rows, cols, |i, j| m[[i, j]]);
    mat.eigenvalues().map_err(|_| Error::EigenNonConvergence {
        n: rows,
        frobenius_norm: m.iter().map(|v| v * v).sum::<f64>().sqrt(),
    })
}

/// Spectrum of the linearized dynamics at one training step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSnapshot {
    pub step: usize,
    /// Eigenvalues of the Jacobian (already shifted by `-1`).
    pub eigenvalues: Vec<Complex64>,
    /// `max |lambda + 1|`: radius of the spectral circle about its centre.
    pub radius: f64,
}

impl SpectrumSnapshot {
    pub fn from_eigenvalues(step: usize, eigenvalues: Vec<Complex64>) -> Self {
        let radius = eigenvalues
            .iter()
            .map(|l| (l + 1.0).norm())
            .fold(0.0, f64::max);
        Self {
            step,
            eigenvalues,
            radius,
        }
    }

    /// `max |lambda|`, the radius measured about the origin.
    pub fn radius_origin(&self) -> f64 {
        self.eigenvalues.iter().map(|l| l.norm()).fold(0.0, f64::max)
    }

    /// Largest real part; positive values mean locally unstable directions.
    pub fn max_real(&self) -> f64 {
        self.eigenvalues
            .iter()
            .map(|l| l.re)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Spectrum of the unrolled Jacobian for the given states.
pub fn snapshot(
    weights: &WeightSet,
    x_current: ArrayView1<'_, f64>,
    x_unroll: ArrayView1<'_, f64>,
    step: usize,
) -> Result<SpectrumSnapshot> {
    let j = jacobian_unrolled(
        weights.w.view(),
        weights.w_fb.view(),
        weights.w_out.view(),
        x_current,
        x_unroll,
    )?;
    Ok(SpectrumSnapshot::from_eigenvalues(step, eigenspectrum(j.view())?))
}

/// Symmetric Hausdorff distance between two eigenvalue clouds.
pub fn spectra_distance(a: &SpectrumSnapshot, b: &SpectrumSnapshot) -> Result<f64> {
    hausdorff(&a.eigenvalues, &b.eigenvalues)
}

pub fn hausdorff(a: &[Complex64], b: &[Complex64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::SpectrumSizeMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    Ok(directed(a, b).max(directed(b, a)))
}

fn directed(from: &[Complex64], to: &[Complex64]) -> f64 {
    from.iter()
        .map(|p| {
            to.iter()
                .map(|q| (p - q).norm_sqr())
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
        .sqrt()
}
