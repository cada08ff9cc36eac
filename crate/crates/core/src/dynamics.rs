//! Discrete-time rigid-body quadrotor model.
//!
//! The state is position, attitude (world←body unit quaternion), linear
//! velocity (world frame) and angular velocity (body frame). The input is a
//! collective thrust along the body z axis plus body-frame torques. One call
//! to [`step`] advances the state by `params.dt_model` seconds with a single
//! RK4 stage, then renormalizes the quaternion.

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadrotorState {
    /// World-frame position, m.
    pub position: Vector3<f64>,
    /// World←body attitude.
    pub orientation: UnitQuaternion<f64>,
    /// World-frame linear velocity, m/s.
    pub linear_velocity: Vector3<f64>,
    /// Body-frame angular velocity, rad/s.
    pub angular_velocity: Vector3<f64>,
}

impl QuadrotorState {
    /// At rest at `position` with identity attitude.
    pub fn at_rest(position: Vector3<f64>) -> Self {
        Self {
            position,
            orientation: UnitQuaternion::identity(),
            linear_velocity: Vector3::zeros(),
            angular_velocity: Vector3::zeros(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.orientation.coords.iter().all(|v| v.is_finite())
            && self.linear_velocity.iter().all(|v| v.is_finite())
            && self.angular_velocity.iter().all(|v| v.is_finite())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadrotorInput {
    /// Collective thrust along body z, N.
    pub thrust: f64,
    /// Body-frame torque, N·m.
    pub torque: Vector3<f64>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadrotorParams {
    /// Vehicle mass, kg.
    pub mass: f64,
    /// Principal moments of inertia (diagonal), kg·m².
    pub inertia: Vector3<f64>,
    /// Gravitational acceleration, m/s².
    pub gravity: f64,
    /// Integration step of the horizon model, s.
    pub dt_model: f64,
}

impl Default for QuadrotorParams {
    fn default() -> Self {
        Self {
            mass: 1.0,
            inertia: Vector3::new(0.01, 0.01, 0.02),
            gravity: 9.81,
            dt_model: 0.02,
        }
    }
}

impl QuadrotorParams {
    pub fn validate(&self) -> crate::Result<()> {
        if self.mass <= 0.0 {
            return Err(crate::Error::InvalidConfig("mass must be > 0".into()));
        }
        if self.inertia.iter().any(|&i| i <= 0.0) {
            return Err(crate::Error::InvalidConfig(
                "inertia components must be > 0".into(),
            ));
        }
        if self.dt_model <= 0.0 {
            return Err(crate::Error::InvalidConfig("dt_model must be > 0".into()));
        }
        Ok(())
    }
}

/// Time derivative of the (position, quaternion, velocity, angular rate) tuple.
#[derive(Clone, Copy)]
struct Derivative {
    dp: Vector3<f64>,
    dq: Quaternion<f64>,
    dv: Vector3<f64>,
    dw: Vector3<f64>,
}

#[derive(Clone, Copy)]
struct RawState {
    p: Vector3<f64>,
    q: Quaternion<f64>,
    v: Vector3<f64>,
    w: Vector3<f64>,
}

impl RawState {
    fn advanced(&self, d: &Derivative, dt: f64) -> RawState {
        RawState {
            p: self.p + d.dp * dt,
            q: self.q + d.dq * dt,
            v: self.v + d.dv * dt,
            w: self.w + d.dw * dt,
        }
    }
}

fn derivative(s: &RawState, input: &QuadrotorInput, params: &QuadrotorParams) -> Derivative {
    // Intermediate RK4 quaternions drift off the unit sphere; normalize a
    // copy for the rotation only.
    let rot = UnitQuaternion::new_normalize(s.q);
    let thrust_accel = rot * Vector3::new(0.0, 0.0, input.thrust / params.mass);
    let dv = thrust_accel - Vector3::new(0.0, 0.0, params.gravity);
    let dq = s.q * Quaternion::from_imag(s.w) * 0.5;
    let inertial_momentum = s.w.component_mul(&params.inertia);
    let dw = (input.torque - s.w.cross(&inertial_momentum)).component_div(&params.inertia);
    Derivative {
        dp: s.v,
        dq,
        dv,
        dw,
    }
}

/// One RK4 step of the rigid-body dynamics over `params.dt_model`.
pub fn step(
    state: &QuadrotorState,
    input: &QuadrotorInput,
    params: &QuadrotorParams,
) -> QuadrotorState {
    let dt = params.dt_model;
    let s0 = RawState {
        p: state.position,
        q: *state.orientation.quaternion(),
        v: state.linear_velocity,
        w: state.angular_velocity,
    };

    let k1 = derivative(&s0, input, params);
    let k2 = derivative(&s0.advanced(&k1, dt / 2.0), input, params);
    let k3 = derivative(&s0.advanced(&k2, dt / 2.0), input, params);
    let k4 = derivative(&s0.advanced(&k3, dt), input, params);

    let sixth = dt / 6.0;
    let p = s0.p + (k1.dp + k2.dp * 2.0 + k3.dp * 2.0 + k4.dp) * sixth;
    let q = s0.q + (k1.dq + k2.dq * 2.0 + k3.dq * 2.0 + k4.dq) * sixth;
    let v = s0.v + (k1.dv + k2.dv * 2.0 + k3.dv * 2.0 + k4.dv) * sixth;
    let w = s0.w + (k1.dw + k2.dw * 2.0 + k3.dw * 2.0 + k4.dw) * sixth;

    QuadrotorState {
        position: p,
        orientation: UnitQuaternion::new_normalize(q),
        linear_velocity: v,
        angular_velocity: w,
    }
}

/// Thrust that exactly balances gravity, zero torque. Used as the initial
/// nominal input of the controller.
pub fn hover_input(params: &QuadrotorParams) -> QuadrotorInput {
    QuadrotorInput {
        thrust: params.mass * params.gravity,
        torque: Vector3::zeros(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn params_with_dt(dt: f64) -> QuadrotorParams {
        QuadrotorParams {
            dt_model: dt,
            ..QuadrotorParams::default()
        }
    }

    #[test]
    fn hover_is_an_equilibrium() {
        let params = QuadrotorParams::default();
        let state = QuadrotorState::at_rest(Vector3::new(0.1, -0.2, 0.5));
        let input = hover_input(&params);
        let mut s = state;
        for _ in 0..100 {
            s = step(&s, &input, &params);
        }
        assert_abs_diff_eq!((s.position - state.position).norm(), 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(s.linear_velocity.norm(), 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(s.angular_velocity.norm(), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn hover_input_values() {
        let params = QuadrotorParams::default();
        let u = hover_input(&params);
        assert_eq!(u.thrust, 9.81);
        assert_eq!(u.torque, Vector3::zeros());
    }

    #[test]
    fn free_fall_matches_closed_form() {
        let params = params_with_dt(0.002);
        let mut s = QuadrotorState::at_rest(Vector3::zeros());
        let input = QuadrotorInput {
            thrust: 0.0,
            torque: Vector3::zeros(),
        };
        for _ in 0..500 {
            s = step(&s, &input, &params);
        }
        let expected_z = -0.5 * params.gravity; // -g T²/2 at T = 1 s
        assert_abs_diff_eq!(s.position.z, expected_z, epsilon = 1e-6);
    }

    #[test]
    fn pure_yaw_torque_integrates_linearly() {
        let params = params_with_dt(0.002);
        let mut s = QuadrotorState::at_rest(Vector3::zeros());
        let c = 0.004;
        let input = QuadrotorInput {
            thrust: params.mass * params.gravity,
            torque: Vector3::new(0.0, 0.0, c),
        };
        for _ in 0..500 {
            s = step(&s, &input, &params);
        }
        let expected = c * 1.0 / params.inertia.z;
        assert_abs_diff_eq!(s.angular_velocity.z, expected, epsilon = 1e-6);
    }

    #[test]
    fn quaternion_stays_normalized() {
        let params = params_with_dt(0.02);
        let mut s = QuadrotorState::at_rest(Vector3::zeros());
        let input = QuadrotorInput {
            thrust: 11.0,
            torque: Vector3::new(0.02, -0.01, 0.005),
        };
        for _ in 0..500 {
            s = step(&s, &input, &params);
            assert_abs_diff_eq!(s.orientation.coords.norm(), 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn identity_attitude_thrust_is_pure_world_z() {
        let params = params_with_dt(0.002);
        let mut s = QuadrotorState::at_rest(Vector3::zeros());
        let input = QuadrotorInput {
            thrust: 2.0 * params.mass * params.gravity,
            torque: Vector3::zeros(),
        };
        for _ in 0..100 {
            s = step(&s, &input, &params);
        }
        assert_abs_diff_eq!(s.position.x, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.position.y, 0.0, epsilon = 1e-12);
        assert!(s.position.z > 0.0);
    }

    #[test]
    fn zero_gravity_zero_input_is_a_fixed_point() {
        let params = QuadrotorParams {
            gravity: 0.0,
            ..QuadrotorParams::default()
        };
        let s0 = QuadrotorState::at_rest(Vector3::new(1.0, 2.0, 3.0));
        let input = QuadrotorInput {
            thrust: 0.0,
            torque: Vector3::zeros(),
        };
        let s1 = step(&s0, &input, &params);
        assert_eq!(s1.position, s0.position);
        assert_eq!(s1.linear_velocity, s0.linear_velocity);
        assert_eq!(s1.angular_velocity, s0.angular_velocity);
    }

    // Richardson order check: halving dt should shrink the error by ~2^4.
    #[test]
    fn rk4_order_via_richardson_ratio() {
        let input = QuadrotorInput {
            thrust: 12.0,
            torque: Vector3::new(0.01, -0.02, 0.005),
        };
        let horizon = 0.2;
        let run = |dt: f64| {
            let params = params_with_dt(dt);
            let mut s = QuadrotorState::at_rest(Vector3::zeros());
            let n = (horizon / dt).round() as usize;
            for _ in 0..n {
                s = step(&s, &input, &params);
            }
            s
        };
        let diff = |a: &QuadrotorState, b: &QuadrotorState| {
            ((a.position - b.position).norm_squared()
                + (a.linear_velocity - b.linear_velocity).norm_squared()
                + (a.angular_velocity - b.angular_velocity).norm_squared())
            .sqrt()
        };
        let coarse = run(0.02);
        let medium = run(0.01);
        let fine = run(0.005);
        let ratio = diff(&coarse, &medium) / diff(&medium, &fine);
        assert!(
            (12.0..=20.0).contains(&ratio),
            "Richardson ratio {ratio} outside [12, 20]"
        );
    }
}
