//! Differential-drive (unicycle) kinematics discretized with forward Euler.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

/// Wraps an angle to `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(TAU) - PI;
    if w <= -PI {
        w + TAU
    } else {
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RobotState {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl RobotState {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: wrap_angle(theta),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.x, self.y, self.theta]
    }

    pub fn position(&self) -> (f64, f64) {
        (self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    /// Linear velocity, m/s.
    pub v: f64,
    /// Angular velocity, rad/s.
    pub omega: f64,
}

impl ControlInput {
    pub const ZERO: ControlInput = ControlInput { v: 0.0, omega: 0.0 };

    pub fn new(v: f64, omega: f64) -> Self {
        Self { v, omega }
    }
}

/// `x' = x + [cos θ · v, sin θ · v, ω] · dt`, heading re-wrapped.
pub fn dynamics_step(x: &RobotState, u: &ControlInput, dt: f64) -> RobotState {
    let n = step_raw(&x.as_array(), &[u.v, u.omega], dt);
    RobotState::new(n[0], n[1], n[2])
}

/// Unwrapped Euler step used inside the optimizer.
#[inline]
pub fn step_raw(x: &[f64; 3], u: &[f64; 2], dt: f64) -> [f64; 3] {
    let (s, c) = x[2].sin_cos();
    [x[0] + c * u[0] * dt, x[1] + s * u[0] * dt, x[2] + u[1] * dt]
}

/// Jacobians `(∂step/∂x, ∂step/∂u)` of [`step_raw`].
#[inline]
pub fn step_jacobians(x: &[f64; 3], u: &[f64; 2], dt: f64) -> ([[f64; 3]; 3], [[f64; 2]; 3]) {
    let (s, c) = x[2].sin_cos();
    let a = [[1.0, 0.0, -s * u[0] * dt], [0.0, 1.0, c * u[0] * dt], [0.0, 0.0, 1.0]];
    let b = [[c * dt, 0.0], [s * dt, 0.0], [0.0, dt]];
    (a, b)
}
