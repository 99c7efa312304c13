//! Principal components of population firing rates.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, Error, Result};

/// Firing rates recorded over time, one row per step.
#[derive(Debug, Clone, PartialEq)]
pub struct RateHistory {
    rows: Array2<f64>,
    step_offsets: Vec<usize>,
}

impl RateHistory {
    pub fn new(rows: Array2<f64>, step_offsets: Vec<usize>) -> Result<Self> {
        ensure_len("rate history offsets", rows.nrows(), step_offsets.len())?;
        Ok(Self { rows, step_offsets })
    }

    pub fn with_capacity(n: usize, capacity: usize) -> Self {
        let mut rows = Array2::zeros((0, n));
        rows.reserve_rows(capacity).expect("row capacity overflow");
        Self {
            rows,
            step_offsets: Vec::with_capacity(capacity),
        }
    }

    pub fn push(&mut self, step: usize, r: ArrayView1<'_, f64>) -> Result<()> {
        ensure_len("rate history row", self.rows.ncols(), r.len())?;
        self.rows
            .push_row(r)
            .map_err(|_| Error::invalid("rate history", "row shape mismatch"))?;
        self.step_offsets.push(step);
        Ok(())
    }

    pub fn rows(&self) -> ArrayView2<'_, f64> {
        self.rows.view()
    }

    pub fn step_offsets(&self) -> &[usize] {
        &self.step_offsets
    }

    pub fn len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n(&self) -> usize {
        self.rows.ncols()
    }

    fn centered(&self) -> Array2<f64> {
        let mean = self.rows.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(self.n()));
        &self.rows - &mean
    }
}

/// Equal-time cross-correlation `D_ij = <(r_i - <r_i>)(r_j - <r_j>)>`,
/// normalized by the number of samples.
pub fn correlation_matrix(history: &RateHistory) -> Result<Array2<f64>> {
    if history.len() < 2 {
        return Err(Error::InsufficientHistory {
            required: 2,
            actual: history.len(),
        });
    }
    let centered = history.centered();
    let mut d = centered.t().dot(&centered) / history.len() as f64;
    // Enforce exact symmetry; the product is symmetric up to summation order.
    let n = d.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (d[[i, j]] + d[[j, i]]);
            d[[i, j]] = v;
            d[[j, i]] = v;
        }
    }
    Ok(d)
}

/// Eigendecomposition of a correlation matrix, largest component first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcDecomposition {
    pub eigenvalues: Array1<f64>,
    /// Orthonormal components stored as columns.
    pub components: Array2<f64>,
    /// Share of total variance per component.
    pub fractions: Array1<f64>,
}

pub fn pc_decomposition(d: ArrayView2<'_, f64>) -> Result<PcDecomposition> {
    let (n, cols) = d.dim();
    ensure_len("pc_decomposition", n, cols)?;
    let asymmetry = (0..n)
        .flat_map(|i| (0..i).map(move |j| (i, j)))
        .map(|(i, j)| (d[[i, j]] - d[[j, i]]).abs())
        .fold(0.0, f64::max);
    if asymmetry > 1e-8 {
        return Err(Error::NotSymmetric { asymmetry });
    }

    let mat = faer::Mat::<f64>::from_fn(n, n, |i, j| d[[i, j]]);
    let evd = mat
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|_| Error::EigenNonConvergence {
            n,
            frobenius_norm: d.iter().map(|v| v * v).sum::<f64>().sqrt(),
        })?;
    // faer returns ascending order.
    let values = evd.S().column_vector();
    let vectors = evd.U();
    let eigenvalues = Array1::from_shape_fn(n, |a| values[n - 1 - a]);
    let components = Array2::from_shape_fn((n, n), |(i, a)| vectors[(i, n - 1 - a)]);

    // Clamp roundoff negatives so fractions stay nonnegative.
    let clamped = eigenvalues.mapv(|v| v.max(0.0));
    let total = clamped.sum();
    let fractions = if total > 0.0 {
        clamped / total
    } else {
        Array1::from_elem(n, 1.0 / n as f64)
    };
    Ok(PcDecomposition {
        eigenvalues,
        components,
        fractions,
    })
}

/// Centered history projected onto component `a` (1-based).
pub fn project_trajectory(
    history: &RateHistory,
    decomposition: &PcDecomposition,
    a: usize,
) -> Result<Array1<f64>> {
    let n = decomposition.components.nrows();
    ensure_len("project_trajectory", n, history.n())?;
    if a == 0 || a > n {
        return Err(Error::ComponentOutOfRange { index: a, n });
    }
    Ok(history.centered().dot(&decomposition.components.column(a - 1)))
}

/// Mean-crossing rate: sign changes of the mean-centered series over `T - 1`.
///
/// Samples that sit exactly on the mean inherit the previous sign, so a
/// series touching its mean without crossing is not counted.
pub fn fluctuation_score(trajectory: ArrayView1<'_, f64>) -> Result<f64> {
    let t = trajectory.len();
    if t < 3 {
        return Err(Error::InsufficientHistory {
            required: 3,
            actual: t,
        });
    }
    let mean = trajectory.sum() / t as f64;
    let spread = trajectory.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
    if spread == 0.0 {
        return Ok(0.0);
    }
    let mut crossings = 0usize;
    let mut last = 0i8;
    for v in trajectory {
        let c = v - mean;
        let sign = if c > 0.0 {
            1
        } else if c < 0.0 {
            -1
        } else {
            0
        };
        if sign != 0 {
            if last != 0 && sign != last {
                crossings += 1;
            }
            last = sign;
        }
    }
    Ok(crossings as f64 / (t - 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn history(rows: Array2<f64>) -> RateHistory {
        let t = rows.nrows();
        RateHistory::new(rows, (0..t).collect()).unwrap()
    }

    fn random_history(t: usize, n: usize, seed: u64) -> RateHistory {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        history(Array2::from_shape_simple_fn((t, n), || rng.random_range(-0.99..0.99)))
    }

    #[test]
    fn constant_history_has_zero_correlation() {
        let h = history(Array2::from_shape_fn((10, 3), |(_, j)| 0.1 * j as f64));
        assert!(correlation_matrix(&h).unwrap().iter().all(|&v| v.abs() < 1e-16));
    }

    #[test]
    fn alternating_rates_variance() {
        let h = history(Array2::from_shape_fn((8, 1), |(t, _)| if t % 2 == 0 { 0.5 } else { -0.5 }));
        assert_abs_diff_eq!(correlation_matrix(&h).unwrap()[[0, 0]], 0.25, epsilon = 1e-15);
    }

    #[test]
    fn correlation_needs_two_rows() {
        let h = history(Array2::zeros((1, 3)));
        assert!(matches!(correlation_matrix(&h), Err(Error::InsufficientHistory { .. })));
    }

    #[test]
    fn correlation_is_symmetric() {
        let d = correlation_matrix(&random_history(50, 7, 1)).unwrap();
        assert!(d.iter().zip(d.t().iter()).all(|(a, b)| (a - b).abs() <= 1e-12));
    }

    #[test]
    fn diagonal_decomposition() {
        let pcs = pc_decomposition(array![[1.0, 0.0], [0.0, 4.0]].view()).unwrap();
        assert_abs_diff_eq!(pcs.eigenvalues[0], 4.0, epsilon = 1e-14);
        assert_abs_diff_eq!(pcs.eigenvalues[1], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(pcs.fractions[0], 0.8, epsilon = 1e-14);
        assert_abs_diff_eq!(pcs.fractions[1], 0.2, epsilon = 1e-14);
        assert_abs_diff_eq!(pcs.components[[1, 0]].abs(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn identity_gives_uniform_fractions() {
        let pcs = pc_decomposition(Array2::<f64>::eye(3).view()).unwrap();
        for f in &pcs.fractions {
            assert_abs_diff_eq!(*f, 1.0 / 3.0, epsilon = 1e-12);
        }
        let gram = pcs.components.t().dot(&pcs.components);
        for ((i, j), v) in gram.indexed_iter() {
            assert_abs_diff_eq!(*v, if i == j { 1.0 } else { 0.0 }, epsilon = 1e-8);
        }
    }

    #[test]
    fn decomposition_rejects_asymmetric_input() {
        let r = pc_decomposition(array![[1.0, 0.5], [0.4, 1.0]].view());
        assert!(matches!(r, Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn decomposition_reconstructs_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = Array2::from_shape_simple_fn((5, 5), || rng.random_range(-1.0..1.0));
        let d = &a + &a.t();
        let pcs = pc_decomposition(d.view()).unwrap();
        let lambda = Array2::from_diag(&pcs.eigenvalues);
        let rebuilt = pcs.components.dot(&lambda).dot(&pcs.components.t());
        for (x, y) in rebuilt.iter().zip(d.iter()) {
            assert_abs_diff_eq!(*x, *y, epsilon = 1e-8);
        }
        assert!(pcs.eigenvalues.windows(2).into_iter().all(|w| w[0] >= w[1]));
    }

    #[test]
    fn projection_onto_unused_direction_is_zero() {
        // Variation only along the first coordinate.
        let h = history(Array2::from_shape_fn((20, 2), |(t, j)| {
            if j == 0 { 0.5 * ((t as f64) * 0.3).sin() } else { 0.2 }
        }));
        let d = correlation_matrix(&h).unwrap();
        let pcs = pc_decomposition(d.view()).unwrap();
        let pc2 = project_trajectory(&h, &pcs, 2).unwrap();
        assert!(pc2.iter().all(|v| v.abs() < 1e-12));

        let pc1 = project_trajectory(&h, &pcs, 1).unwrap();
        let mean0 = h.rows().column(0).mean().unwrap();
        let sign = pcs.components[[0, 0]].signum();
        for (p, r) in pc1.iter().zip(h.rows().column(0)) {
            assert_abs_diff_eq!(*p, sign * (r - mean0), epsilon = 1e-12);
        }
        assert!(matches!(project_trajectory(&h, &pcs, 3), Err(Error::ComponentOutOfRange { .. })));
        assert!(project_trajectory(&h, &pcs, 0).is_err());
    }

    #[test]
    fn projection_variances_sum_to_trace() {
        let h = random_history(40, 6, 8);
        let d = correlation_matrix(&h).unwrap();
        let pcs = pc_decomposition(d.view()).unwrap();
        let total: f64 = (1..=6)
            .map(|a| {
                let p = project_trajectory(&h, &pcs, a).unwrap();
                p.mapv(|v| v * v).sum() / p.len() as f64
            })
            .sum();
        assert_abs_diff_eq!(total, d.diag().sum(), epsilon = 1e-8);
    }

    #[test]
    fn fluctuation_examples() {
        assert_eq!(fluctuation_score(Array1::from_elem(10, 0.3).view()).unwrap(), 0.0);
        let alt = Array1::from_shape_fn(11, |t| if t % 2 == 0 { 1.0 } else { -1.0 });
        assert_eq!(fluctuation_score(alt.view()).unwrap(), 1.0);

        let t = 100;
        let slow = Array1::from_shape_fn(t, |k| (2.0 * std::f64::consts::PI * k as f64 / t as f64).cos());
        // Independent count: the cosine is above its mean on [0, 25) and
        // (75, 100) and below on (25, 75), so it crosses twice.
        let mean = slow.mean().unwrap();
        let brute = slow
            .windows(2)
            .into_iter()
            .filter(|w| (w[0] - mean) * (w[1] - mean) < 0.0)
            .count();
        assert_eq!(brute, 2);
        assert_abs_diff_eq!(fluctuation_score(slow.view()).unwrap(), 2.0 / 99.0, epsilon = 1e-15);
        assert!(fluctuation_score(array![1.0, 2.0].view()).is_err());
    }

    proptest! {
        #[test]
        fn decomposition_invariants(t in 2usize..30, n in 1usize..8, seed in any::<u64>()) {
            let h = random_history(t, n, seed);
            let d = correlation_matrix(&h).unwrap();
            let pcs = pc_decomposition(d.view()).unwrap();
            prop_assert!(pcs.eigenvalues.iter().all(|&l| l >= -1e-8));
            prop_assert!((pcs.fractions.sum() - 1.0).abs() <= 1e-8);
            prop_assert!(pcs.fractions.iter().all(|&f| f >= 0.0));
            let gram = pcs.components.t().dot(&pcs.components);
            for ((i, j), v) in gram.indexed_iter() {
                let expected = if i == j { 1.0 } else { 0.0 };
                prop_assert!((v - expected).abs() <= 1e-8);
            }
        }

        #[test]
        fn fluctuation_is_a_rate(v in proptest::collection::vec(-1.0f64..1.0, 3..60)) {
            let s = fluctuation_score(Array1::from(v).view()).unwrap();
            prop_assert!((0.0..=1.0).contains(&s));
        }
    }
}
