use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// NMPC configuration. Weight matrices are diagonal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NmpcParams {
    pub horizon: usize,
    pub dt: f64,
    pub gamma: f64,
    pub delta_s: f64,
    pub delta_d: f64,
    /// Stage tracking weight on (x, y, θ).
    pub q: [f64; 3],
    /// Input weight on (v, ω).
    pub r: [f64; 2],
    /// Weight on deviation from the previous prediction.
    pub w: [f64; 3],
    pub q_terminal: [f64; 3],
    pub v_min: f64,
    pub v_max: f64,
    pub omega_max: f64,
    /// Optional planar state box `[x_min, x_max, y_min, y_max]`.
    pub state_box: Option<[f64; 4]>,
    /// Optional hard terminal ball radius around the target.
    pub terminal_radius: Option<f64>,
    pub max_sqp_iters: usize,
    /// KKT stationarity and constraint violation tolerance.
    pub tolerance: f64,
}

impl Default for NmpcParams {
    fn default() -> Self {
        let q = [1.0, 1.0, 0.05];
        Self {
            horizon: 30,
            dt: 0.1,
            gamma: 0.9,
            delta_s: 0.271,
            delta_d: 0.35,
            q,
            r: [0.1, 0.05],
            w: [0.1, 0.1, 0.01],
            q_terminal: q.map(|v| 10.0 * v),
            v_min: 0.0,
            v_max: 1.2,
            omega_max: 1.2,
            state_box: None,
            terminal_radius: None,
            max_sqp_iters: 50,
            tolerance: 1e-6,
        }
    }
}

impl NmpcParams {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(invalid("nmpc.horizon", "must be at least 1"));
        }
        if !(self.dt > 0.0) {
            return Err(invalid("nmpc.dt", "must be positive"));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(invalid("nmpc.gamma", "must lie in (0, 1]"));
        }
        if !(self.delta_s > 0.0 && self.delta_d >= self.delta_s) {
            return Err(invalid("nmpc.delta", "need delta_d >= delta_s > 0"));
        }
        let weights = self.q.iter().chain(&self.r).chain(&self.w).chain(&self.q_terminal);
        if weights.clone().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(invalid(
                "nmpc.weights",
                "diagonal weights must be finite and non-negative",
            ));
        }
        if self.r.iter().any(|w| *w <= 0.0) || self.q[2] + self.w[2] <= 0.0 {
            return Err(invalid(
                "nmpc.weights",
                "input weights and the heading weight must be positive",
            ));
        }
        if self.q[0] + self.w[0] <= 0.0 || self.q[1] + self.w[1] <= 0.0 {
            return Err(invalid("nmpc.weights", "position weights must be positive"));
        }
        if !(self.v_min <= self.v_max && self.omega_max >= 0.0) {
            return Err(invalid(
                "nmpc.input_bounds",
                "v_min <= v_max and omega_max >= 0 required",
            ));
        }
        if let Some(r) = self.terminal_radius {
            if !(r > 0.0) {
                return Err(invalid("nmpc.terminal_radius", "must be positive"));
            }
        }
        if !(self.tolerance > 0.0) {
            return Err(invalid("nmpc.tolerance", "must be positive"));
        }
        Ok(())
    }
}
