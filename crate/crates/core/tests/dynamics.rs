use ndarray::Array1;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reservoir_stability::dynamics::{
    init_network, ReservoirParams, ReservoirState, UnrollSchedule, Unroller, WeightSet,
};

fn network(n: usize, g: f64, seed: u64) -> (WeightSet, ReservoirState) {
    let params = ReservoirParams {
        n,
        g,
        seed,
        ..ReservoirParams::default()
    };
    init_network(&params).unwrap()
}

/// Readout of modest size so the feedback loop matters but stays bounded.
fn random_readout(n: usize, seed: u64) -> Array1<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array1::from_shape_fn(n, |_| rng.random_range(-1.0..1.0) / (n as f64).sqrt())
}

fn trajectory(
    weights: &WeightSet,
    initial: &ReservoirState,
    schedule: UnrollSchedule,
    dt: f64,
    steps: usize,
) -> Vec<Array1<f64>> {
    let mut u = Unroller::new(initial.clone(), schedule, dt).unwrap();
    let mut out = vec![u.state().x().clone()];
    for _ in 0..steps {
        u.advance(weights).unwrap();
        out.push(u.state().x().clone());
    }
    out
}

fn max_gap(a: &[Array1<f64>], b: &[Array1<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y.iter()).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max)
}

#[test]
fn lagged_feedback_converges_to_closed_loop_as_dt_shrinks() {
    let horizon = 5.0;
    for seed in 0..3 {
        let (mut weights, initial) = network(50, 0.9, seed);
        weights.w_out = random_readout(50, 100 + seed);
        let gaps: Vec<f64> = [1.0, 0.5, 0.1, 0.01]
            .iter()
            .map(|&dt| {
                let steps = (horizon / dt) as usize;
                let lagged = trajectory(&weights, &initial, UnrollSchedule::PerStep, dt, steps);
                let closed = trajectory(&weights, &initial, UnrollSchedule::ClosedLoop, dt, steps);
                max_gap(&lagged, &closed)
            })
            .collect();
        for pair in gaps.windows(2) {
            assert!(pair[1] < pair[0], "seed {seed}: gaps {gaps:?} not decreasing");
        }
    }
}

#[test]
fn schedules_coincide_without_feedback() {
    let params = ReservoirParams {
        n: 40,
        feedback_scale: 0.0,
        seed: 7,
        ..ReservoirParams::default()
    };
    let (mut weights, initial) = init_network(&params).unwrap();
    weights.w_out = random_readout(40, 8);
    let closed = trajectory(&weights, &initial, UnrollSchedule::ClosedLoop, 1.0, 60);
    for schedule in [
        UnrollSchedule::PerStep,
        UnrollSchedule::Integrated { interval: 7 },
    ] {
        let other = trajectory(&weights, &initial, schedule, 1.0, 60);
        assert_eq!(max_gap(&closed, &other), 0.0, "{schedule:?}");
    }
}

#[test]
fn feedback_is_irrelevant_with_zero_readout() {
    let (weights, initial) = network(30, 1.5, 3);
    let closed = trajectory(&weights, &initial, UnrollSchedule::ClosedLoop, 0.5, 40);
    let lagged = trajectory(&weights, &initial, UnrollSchedule::Integrated { interval: 5 }, 0.5, 40);
    assert_eq!(max_gap(&closed, &lagged), 0.0);
}

#[test]
fn same_seed_same_network() {
    let (a, sa) = network(25, 1.2, 11);
    let (b, sb) = network(25, 1.2, 11);
    assert_eq!(a.w, b.w);
    assert_eq!(a.w_fb, b.w_fb);
    assert_eq!(sa.x(), sb.x());
    let (c, _) = network(25, 1.2, 12);
    assert_ne!(a.w, c.w);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn rates_stay_in_open_unit_interval(
        seed in 0u64..1000,
        g in 0.0f64..3.0,
        dt in 0.01f64..1.0,
        interval in 1usize..6,
        readout_scale in 0.0f64..3.0,
    ) {
        let (mut weights, initial) = network(20, g, seed);
        weights.w_out = random_readout(20, seed + 1) * readout_scale;
        let mut u = Unroller::new(initial, UnrollSchedule::unrolled(interval), dt).unwrap();
        for _ in 0..50 {
            u.advance(&weights).unwrap();
            prop_assert!(u.state().r().iter().all(|r| r.abs() < 1.0));
            prop_assert!(u.state().x().iter().all(|x| x.is_finite()));
        }
    }

    #[test]
    fn integrated_interval_one_matches_per_step(seed in 0u64..1000, dt in 0.05f64..1.0) {
        let (mut weights, initial) = network(15, 1.5, seed);
        weights.w_out = random_readout(15, seed + 2);
        let a = trajectory(&weights, &initial, UnrollSchedule::PerStep, dt, 30);
        let b = trajectory(&weights, &initial, UnrollSchedule::Integrated { interval: 1 }, dt, 30);
        prop_assert_eq!(max_gap(&a, &b), 0.0);
    }
}
