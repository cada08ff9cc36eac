//! Sampling-based MPPI step: sample input sequences, roll them out through
//! the dynamics, and aggregate the next control by exponential cost
//! weighting.
//!
//! Reproducibility contract: trajectory `i` is sampled from its own
//! counter-based RNG substream keyed by `(seed, i)`, rollout results are
//! collected into an index-addressed table, and every reduction iterates in
//! index order 0..N-1. Output is therefore bit-identical regardless of how
//! many threads evaluate the rollouts.

use nalgebra::{Vector3, Vector4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::{RefEntry, Reference};
use crate::dynamics::{QuadrotorInput, QuadrotorState};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MppiConfig {
    /// Number of sampled trajectories N.
    pub num_rollouts: usize,
    /// Horizon length H.
    pub horizon: usize,
    /// Per-channel sampling standard deviation (thrust N, torques N·m).
    pub sigma: Vector4<f64>,
    /// Weighting sharpness h > 0.
    pub sharpness: f64,
    /// Componentwise input clamp bounds.
    pub input_lower: Vector4<f64>,
    pub input_upper: Vector4<f64>,
}

impl MppiConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_rollouts < 1 {
            return Err(Error::InvalidConfig("num_rollouts must be >= 1".into()));
        }
        if self.horizon < 1 {
            return Err(Error::InvalidConfig("horizon must be >= 1".into()));
        }
        if self.sigma.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::InvalidConfig(
                "sigma components must be > 0".into(),
            ));
        }
        if !(self.sharpness > 0.0) {
            return Err(Error::InvalidConfig("sharpness must be > 0".into()));
        }
        if self
            .input_lower
            .iter()
            .zip(self.input_upper.iter())
            .any(|(lo, hi)| lo > hi)
        {
            return Err(Error::InvalidConfig(
                "input_lower must be <= input_upper componentwise".into(),
            ));
        }
        Ok(())
    }
}

/// One sampled input sequence: H rows of (thrust, τx, τy, τz).
#[derive(Clone, Debug, PartialEq)]
pub struct InputSequence {
    pub rows: Vec<Vector4<f64>>,
}

impl InputSequence {
    pub fn first(&self) -> Vector4<f64> {
        self.rows[0]
    }
}

pub fn input_from_vector(u: &Vector4<f64>) -> QuadrotorInput {
    QuadrotorInput {
        thrust: u.x,
        torque: Vector3::new(u.y, u.z, u.w),
    }
}

pub fn vector_from_input(u: &QuadrotorInput) -> Vector4<f64> {
    Vector4::new(u.thrust, u.torque.x, u.torque.y, u.torque.z)
}

/// Total cost of one rollout plus the first input of the sequence that
/// produced it.
#[derive(Clone, Debug)]
pub struct RolloutResult {
    pub total_cost: f64,
    pub first_input: Vector4<f64>,
    pub predicted_states: Option<Vec<QuadrotorState>>,
}

/// Exponential weights in (0, 1], maximum exactly 1 at the minimum-cost
/// rollout.
#[derive(Clone, Debug)]
pub struct WeightSet {
    pub weights: Vec<f64>,
    pub j_min: f64,
    pub j_max: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct StepDiagnostics {
    pub j_min: f64,
    pub j_max: f64,
    pub mean_cost: f64,
}

/// System model used by rollouts.
pub trait Dynamics: Sync {
    fn next_state(&self, state: &QuadrotorState, input: &QuadrotorInput) -> QuadrotorState;
}

/// Cost model used by rollouts.
pub trait RolloutCosts: Sync {
    fn running(&self, x: &QuadrotorState, u: &QuadrotorInput, reference: &RefEntry) -> f64;
    fn terminal(&self, x: &QuadrotorState, u: &QuadrotorInput, reference: &RefEntry) -> f64;
}

/// RNG substream for trajectory `i` of a step seeded with `seed`.
pub fn trajectory_rng(seed: u64, trajectory: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trajectory as u64);
    rng
}

/// Sample N sequences of H inputs from N(nominal, sigma), clamped to the
/// input bounds. Sequence `i` depends only on `(seed, i)`.
pub fn sample_inputs(
    config: &MppiConfig,
    nominal: &Vector4<f64>,
    seed: u64,
) -> Result<Vec<InputSequence>> {
    config.validate()?;
    let channels: Vec<Normal<f64>> = (0..4)
        .map(|c| Normal::new(nominal[c], config.sigma[c]).expect("validated sigma"))
        .collect();
    let sequences = (0..config.num_rollouts)
        .map(|i| {
            let mut rng = trajectory_rng(seed, i);
            let rows = (0..config.horizon)
                .map(|_| {
                    Vector4::from_fn(|c, _| {
                        channels[c]
                            .sample(&mut rng)
                            .clamp(config.input_lower[c], config.input_upper[c])
                    })
                })
                .collect();
            InputSequence { rows }
        })
        .collect();
    Ok(sequences)
}

/// Forward-simulate one input sequence from `x0`, accumulating the running
/// cost at every step and the terminal cost at the end.
///
/// A non-finite state mid-rollout yields a sentinel result carrying the
/// largest finite cost, so divergent samples lose the weighting without
/// poisoning it with NaN.
pub fn rollout<D: Dynamics, C: RolloutCosts>(
    x0: &QuadrotorState,
    seq: &InputSequence,
    reference: &Reference,
    dynamics: &D,
    costs: &C,
    record_states: bool,
) -> RolloutResult {
    debug_assert_eq!(seq.rows.len(), reference.len());
    let horizon = seq.rows.len();
    let first_input = seq.first();
    let mut trace = record_states.then(|| Vec::with_capacity(horizon + 1));

    let mut x = *x0;
    if let Some(t) = trace.as_mut() {
        t.push(x);
    }
    let mut c = 0.0;
    let mut last = (x, input_from_vector(&seq.rows[horizon - 1]));
    for t in 0..horizon {
        let u = input_from_vector(&seq.rows[t]);
        c += costs.running(&x, &u, reference.entry(t));
        if t == horizon - 1 {
            last = (x, u);
        }
        x = dynamics.next_state(&x, &u);
        if !x.is_finite() {
            return RolloutResult {
                total_cost: f64::MAX,
                first_input,
                predicted_states: trace,
            };
        }
        if let Some(tr) = trace.as_mut() {
            tr.push(x);
        }
    }
    let total = c + costs.terminal(&last.0, &last.1, reference.entry(horizon - 1));
    RolloutResult {
        total_cost: if total.is_finite() { total } else { f64::MAX },
        first_input,
        predicted_states: trace,
    }
}

/// w_i = exp(-h (J_i - J_min) / (J_max - J_min)); all ones when the cost
/// range is degenerate.
pub fn compute_weights(costs: &[f64], sharpness: f64) -> Result<WeightSet> {
    if costs.is_empty() {
        return Err(Error::InvalidConfig("empty cost vector".into()));
    }
    if let Some(index) = costs.iter().position(|c| !c.is_finite()) {
        return Err(Error::NonFiniteCost { index });
    }
    let j_min = costs.iter().copied().fold(f64::INFINITY, f64::min);
    let j_max = costs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = j_max - j_min;
    let weights = if range == 0.0 {
        vec![1.0; costs.len()]
    } else {
        costs
            .iter()
            .map(|&j| (-sharpness * (j - j_min) / range).exp())
            .collect()
    };
    Ok(WeightSet {
        weights,
        j_min,
        j_max,
    })
}

/// Σ w_i u_i / Σ w_i, accumulated in index order for bit-stable output.
pub fn aggregate_control(weights: &WeightSet, first_inputs: &[Vector4<f64>]) -> Vector4<f64> {
    debug_assert_eq!(weights.weights.len(), first_inputs.len());
    let mut numerator = Vector4::zeros();
    let mut denominator = 0.0;
    for (w, u) in weights.weights.iter().zip(first_inputs) {
        numerator += u * *w;
        denominator += *w;
    }
    numerator / denominator
}

/// One full controller step: sample, roll out (possibly in parallel),
/// weight, aggregate.
pub fn mppi_step<D: Dynamics, C: RolloutCosts>(
    config: &MppiConfig,
    x0: &QuadrotorState,
    reference: &Reference,
    nominal: &Vector4<f64>,
    seed: u64,
    dynamics: &D,
    costs: &C,
) -> Result<(Vector4<f64>, StepDiagnostics)> {
    let sequences = sample_inputs(config, nominal, seed)?;
    let results: Vec<RolloutResult> = sequences
        .par_iter()
        .map(|seq| rollout(x0, seq, reference, dynamics, costs, false))
        .collect();

    let cost_table: Vec<f64> = results.iter().map(|r| r.total_cost).collect();
    let weights = compute_weights(&cost_table, config.sharpness)?;
    let first_inputs: Vec<Vector4<f64>> = results.iter().map(|r| r.first_input).collect();
    let control = aggregate_control(&weights, &first_inputs);

    let mean_cost = cost_table.iter().sum::<f64>() / cost_table.len() as f64;
    Ok((
        control,
        StepDiagnostics {
            j_min: weights.j_min,
            j_max: weights.j_max,
            mean_cost,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::TrackingCosts;
    use crate::dynamics::{hover_input, QuadrotorParams};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    struct ModelDynamics(QuadrotorParams);

    impl Dynamics for ModelDynamics {
        fn next_state(&self, state: &QuadrotorState, input: &QuadrotorInput) -> QuadrotorState {
            crate::dynamics::step(state, input, &self.0)
        }
    }

    fn test_config(n: usize, h: usize) -> MppiConfig {
        MppiConfig {
            num_rollouts: n,
            horizon: h,
            sigma: Vector4::new(2.0, 0.05, 0.05, 0.02),
            sharpness: 10.0,
            input_lower: Vector4::new(0.0, -0.3, -0.3, -0.1),
            input_upper: Vector4::new(20.0, 0.3, 0.3, 0.1),
        }
    }

    fn hover_vec() -> Vector4<f64> {
        vector_from_input(&hover_input(&QuadrotorParams::default()))
    }

    #[test]
    fn sampling_is_deterministic() {
        let cfg = test_config(8, 5);
        let a = sample_inputs(&cfg, &hover_vec(), 42).unwrap();
        let b = sample_inputs(&cfg, &hover_vec(), 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sampling_shapes() {
        let cfg = test_config(2000, 25);
        let seqs = sample_inputs(&cfg, &hover_vec(), 7).unwrap();
        assert_eq!(seqs.len(), 2000);
        assert!(seqs.iter().all(|s| s.rows.len() == 25));
        for s in &seqs {
            for row in &s.rows {
                for c in 0..4 {
                    assert!(row[c] >= cfg.input_lower[c] && row[c] <= cfg.input_upper[c]);
                }
            }
        }
    }

    #[test]
    fn tiny_sigma_collapses_to_nominal() {
        let mut cfg = test_config(4, 3);
        cfg.sigma = Vector4::repeat(1e-300);
        let nominal = hover_vec();
        let seqs = sample_inputs(&cfg, &nominal, 1).unwrap();
        for s in &seqs {
            for row in &s.rows {
                assert_abs_diff_eq!((row - nominal).norm(), 0.0, epsilon = 1e-250);
            }
        }
    }

    #[test]
    fn zero_sigma_rejected() {
        let mut cfg = test_config(4, 3);
        cfg.sigma = Vector4::zeros();
        assert!(sample_inputs(&cfg, &hover_vec(), 1).is_err());
    }

    #[test]
    fn equal_costs_give_unit_weights() {
        let ws = compute_weights(&[7.0, 7.0, 7.0], 5.0).unwrap();
        assert_eq!(ws.weights, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn two_point_weights() {
        let ws = compute_weights(&[0.0, 1.0], 1.0).unwrap();
        assert_eq!(ws.weights[0], 1.0);
        assert_abs_diff_eq!(ws.weights[1], (-1.0f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn three_point_weights() {
        let ws = compute_weights(&[0.0, 0.5, 1.0], 2.0).unwrap();
        assert_eq!(ws.weights[0], 1.0);
        assert_abs_diff_eq!(ws.weights[1], (-1.0f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(ws.weights[2], (-2.0f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn nan_cost_is_an_error() {
        assert!(matches!(
            compute_weights(&[1.0, f64::NAN], 1.0),
            Err(Error::NonFiniteCost { index: 1 })
        ));
    }

    #[test]
    fn single_input_aggregation_is_identity() {
        let ws = compute_weights(&[3.0], 1.0).unwrap();
        let u = Vector4::new(1.0, 2.0, 3.0, 4.0);
        assert_eq!(aggregate_control(&ws, &[u]), u);
    }

    #[test]
    fn uniform_weights_average() {
        let ws = compute_weights(&[2.0, 2.0], 1.0).unwrap();
        let a = Vector4::new(1.0, 0.0, 2.0, 0.0);
        let b = Vector4::new(3.0, 4.0, 0.0, 0.0);
        assert_eq!(aggregate_control(&ws, &[a, b]), (a + b) / 2.0);
    }

    #[test]
    fn weighted_average_example() {
        let ws = compute_weights(&[0.0, 1.0], 1.0).unwrap();
        let e = (-1.0f64).exp();
        let u = aggregate_control(
            &ws,
            &[
                Vector4::new(1.0, 0.0, 0.0, 0.0),
                Vector4::new(0.0, 0.0, 0.0, 1.0),
            ],
        );
        assert_abs_diff_eq!(u.x, 1.0 / (1.0 + e), epsilon = 1e-15);
        assert_abs_diff_eq!(u.w, e / (1.0 + e), epsilon = 1e-15);
        assert_eq!(u.y, 0.0);
        assert_eq!(u.z, 0.0);
    }

    #[test]
    fn trivial_cost_functions_give_zero_cost() {
        struct FreeCosts;
        impl RolloutCosts for FreeCosts {
            fn running(&self, _: &QuadrotorState, _: &QuadrotorInput, _: &RefEntry) -> f64 {
                0.0
            }
            fn terminal(&self, _: &QuadrotorState, _: &QuadrotorInput, _: &RefEntry) -> f64 {
                0.0
            }
        }
        let params = QuadrotorParams::default();
        let dynamics = ModelDynamics(params);
        let x0 = QuadrotorState::at_rest(Vector3::zeros());
        let reference = Reference::constant(x0, hover_input(&params), 1);
        let seq = InputSequence {
            rows: vec![Vector4::new(5.0, 0.1, -0.1, 0.0)],
        };
        let r = rollout(&x0, &seq, &reference, &dynamics, &FreeCosts, false);
        assert_eq!(r.total_cost, 0.0);
        assert_eq!(r.first_input, seq.rows[0]);
    }

    #[test]
    fn perfect_tracking_costs_nothing() {
        let params = QuadrotorParams::default();
        let dynamics = ModelDynamics(params);
        let x0 = QuadrotorState::at_rest(Vector3::zeros());
        let hover = hover_input(&params);
        let reference = Reference::constant(x0, hover, 5);
        let seq = InputSequence {
            rows: vec![vector_from_input(&hover); 5],
        };
        let costs = TrackingCosts {
            weights: Default::default(),
            obstacles: vec![],
        };
        let r = rollout(&x0, &seq, &reference, &dynamics, &costs, false);
        assert_abs_diff_eq!(r.total_cost, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn divergent_rollout_gets_sentinel_cost() {
        struct Exploding;
        impl Dynamics for Exploding {
            fn next_state(&self, s: &QuadrotorState, _: &QuadrotorInput) -> QuadrotorState {
                let mut n = *s;
                n.position *= f64::INFINITY;
                n
            }
        }
        let params = QuadrotorParams::default();
        let x0 = QuadrotorState::at_rest(Vector3::zeros());
        let reference = Reference::constant(x0, hover_input(&params), 3);
        let seq = InputSequence {
            rows: vec![hover_vec(); 3],
        };
        let costs = TrackingCosts {
            weights: Default::default(),
            obstacles: vec![],
        };
        let r = rollout(&x0, &seq, &reference, &Exploding, &costs, false);
        assert_eq!(r.total_cost, f64::MAX);
    }

    #[test]
    fn single_rollout_step_returns_its_first_input() {
        let params = QuadrotorParams::default();
        let dynamics = ModelDynamics(params);
        let cfg = test_config(1, 3);
        let x0 = QuadrotorState::at_rest(Vector3::zeros());
        let reference = Reference::constant(x0, hover_input(&params), 3);
        let costs = TrackingCosts {
            weights: Default::default(),
            obstacles: vec![],
        };
        let (control, _) =
            mppi_step(&cfg, &x0, &reference, &hover_vec(), 9, &dynamics, &costs).unwrap();
        let seqs = sample_inputs(&cfg, &hover_vec(), 9).unwrap();
        assert_eq!(control, seqs[0].first());
    }

    proptest! {
        #[test]
        fn aggregated_control_stays_in_convex_hull(
            costs in proptest::collection::vec(0.0f64..1e6, 1..40),
            h in 0.01f64..100.0,
        ) {
            let ws = compute_weights(&costs, h).unwrap();
            let inputs: Vec<Vector4<f64>> = costs
                .iter()
                .enumerate()
                .map(|(i, &c)| Vector4::new(c, (i as f64).sin(), -(c % 3.0), i as f64))
                .collect();
            let u = aggregate_control(&ws, &inputs);
            for c in 0..4 {
                let lo = inputs.iter().map(|v| v[c]).fold(f64::INFINITY, f64::min);
                let hi = inputs.iter().map(|v| v[c]).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(u[c] >= lo - 1e-9 && u[c] <= hi + 1e-9);
            }
        }

        #[test]
        fn weights_are_monotone_in_cost(
            costs in proptest::collection::vec(0.0f64..1e3, 2..40),
            h in 0.01f64..50.0,
        ) {
            let ws = compute_weights(&costs, h).unwrap();
            prop_assert!(ws.weights.iter().all(|&w| w > 0.0 && w <= 1.0));
            for i in 0..costs.len() {
                for j in 0..costs.len() {
                    if costs[i] < costs[j] {
                        prop_assert!(ws.weights[i] >= ws.weights[j]);
                    }
                }
            }
        }
    }
}
