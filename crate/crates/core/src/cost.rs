//! Running and terminal costs for trajectory evaluation.
//!
//! The running cost is a quadratic tracking penalty against a reference
//! state/input pair plus a hard indicator penalty for every box obstacle
//! containing the position. The indicator is deliberately discontinuous;
//! sampling-based control does not require gradients.

use nalgebra::{Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::dynamics::{QuadrotorInput, QuadrotorState};

/// One horizon entry of the reference: a state to track and the input that
/// holds it.
#[derive(Clone, Debug)]
pub struct RefEntry {
    pub state: QuadrotorState,
    pub input: QuadrotorInput,
}

/// Reference trajectory over the horizon, exactly `H` entries.
#[derive(Clone, Debug)]
pub struct Reference {
    entries: Vec<RefEntry>,
}

impl Reference {
    pub fn new(entries: Vec<RefEntry>) -> Self {
        Self { entries }
    }

    /// Constant target pose held over the whole horizon.
    pub fn constant(state: QuadrotorState, input: QuadrotorInput, horizon: usize) -> Self {
        Self {
            entries: vec![RefEntry { state, input }; horizon],
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, t: usize) -> &RefEntry {
        &self.entries[t]
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct CostWeights {
    pub q_pos: f64,
    pub q_vel: f64,
    pub q_att: f64,
    pub q_omega: f64,
    /// Per-channel input-deviation weights (thrust, τx, τy, τz).
    pub r_input: Vector4<f64>,
    /// Multiplier applied to the terminal tracking cost.
    pub terminal_scale: f64,
    /// Added once per obstacle whose box contains the position.
    pub obstacle_penalty: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            q_pos: 100.0,
            q_vel: 10.0,
            q_att: 5.0,
            q_omega: 0.5,
            r_input: Vector4::new(0.01, 0.1, 0.1, 0.1),
            terminal_scale: 10.0,
            obstacle_penalty: 1000.0,
        }
    }
}

impl CostWeights {
    pub fn validate(&self) -> crate::Result<()> {
        let all = [
            self.q_pos,
            self.q_vel,
            self.q_att,
            self.q_omega,
            self.terminal_scale,
            self.obstacle_penalty,
        ];
        if all.iter().chain(self.r_input.iter()).any(|&w| w < 0.0) {
            return Err(crate::Error::InvalidConfig(
                "cost weights must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Axis-aligned box obstacle. The boundary counts as inside.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BoxObstacle {
    pub center: Vector3<f64>,
    pub half_extents: Vector3<f64>,
}

impl BoxObstacle {
    pub fn contains(&self, point: &Vector3<f64>) -> bool {
        let d = point - self.center;
        d.x.abs() <= self.half_extents.x
            && d.y.abs() <= self.half_extents.y
            && d.z.abs() <= self.half_extents.z
    }
}

/// Geodesic attitude error angle, sign ambiguity resolved via |dot|.
fn attitude_angle(a: &QuadrotorState, b: &QuadrotorState) -> f64 {
    let dot = a
        .orientation
        .coords
        .dot(&b.orientation.coords)
        .abs()
        .min(1.0);
    2.0 * dot.acos()
}

fn tracking_cost(x: &QuadrotorState, reference: &RefEntry, w: &CostWeights) -> f64 {
    let dp = x.position - reference.state.position;
    let dv = x.linear_velocity - reference.state.linear_velocity;
    let dw = x.angular_velocity - reference.state.angular_velocity;
    let att = attitude_angle(x, &reference.state);
    w.q_pos * dp.norm_squared()
        + w.q_vel * dv.norm_squared()
        + w.q_att * att * att
        + w.q_omega * dw.norm_squared()
}

fn obstacle_cost(position: &Vector3<f64>, w: &CostWeights, obstacles: &[BoxObstacle]) -> f64 {
    obstacles
        .iter()
        .filter(|o| o.contains(position))
        .count() as f64
        * w.obstacle_penalty
}

/// Per-timestep penalty L(x, u, R_t).
pub fn running_cost(
    x: &QuadrotorState,
    u: &QuadrotorInput,
    reference: &RefEntry,
    weights: &CostWeights,
    obstacles: &[BoxObstacle],
) -> f64 {
    let du = Vector4::new(
        u.thrust - reference.input.thrust,
        u.torque.x - reference.input.torque.x,
        u.torque.y - reference.input.torque.y,
        u.torque.z - reference.input.torque.z,
    );
    let input_term = du.component_mul(&du).dot(&weights.r_input);
    tracking_cost(x, reference, weights)
        + input_term
        + obstacle_cost(&x.position, weights, obstacles)
}

/// Terminal penalty φ(x, u, R): scaled tracking cost with the input term
/// omitted.
pub fn terminal_cost(
    x: &QuadrotorState,
    _u: &QuadrotorInput,
    reference: &RefEntry,
    weights: &CostWeights,
    obstacles: &[BoxObstacle],
) -> f64 {
    weights.terminal_scale
        * (tracking_cost(x, reference, weights) + obstacle_cost(&x.position, weights, obstacles))
}

/// Bundles weights and obstacles as the cost model consumed by rollouts.
#[derive(Clone, Debug)]
pub struct TrackingCosts {
    pub weights: CostWeights,
    pub obstacles: Vec<BoxObstacle>,
}

impl crate::mppi::RolloutCosts for TrackingCosts {
    fn running(&self, x: &QuadrotorState, u: &QuadrotorInput, reference: &RefEntry) -> f64 {
        running_cost(x, u, reference, &self.weights, &self.obstacles)
    }

    fn terminal(&self, x: &QuadrotorState, u: &QuadrotorInput, reference: &RefEntry) -> f64 {
        terminal_cost(x, u, reference, &self.weights, &self.obstacles)
    }
}
