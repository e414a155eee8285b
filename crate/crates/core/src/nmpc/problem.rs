//! Multiple-shooting NLP assembled from risk points.
//!
//! Decision variables are the states `x_0..x_N` (heading kept unwrapped) and
//! inputs `u_0..u_{N-1}`. The objective is quadratic in the wrapped state
//! errors, so its Hessian is diagonal and constant.

use crate::error::{invalid, Error, Result};
use crate::risk::{HistoricalRiskSet, PredictedTrajectory, RiskPoint};

use super::barrier::{Barrier, BarrierRow, RowKind};
use super::model::{step_raw, wrap_angle, RobotState};
use super::params::NmpcParams;

/// Below this goal distance the target heading is the current heading.
const HEADING_CAPTURE_RADIUS: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct NlpProblem {
    pub x0: RobotState,
    /// `(x, y, θ)` target for the tracking term.
    pub target: [f64; 3],
    /// Reference for the prediction-variation term, `N + 1` entries.
    pub reference: Vec<[f64; 3]>,
    pub rows: Vec<BarrierRow>,
    pub params: NmpcParams,
}

/// Flat trajectory `(states, inputs)` used by the optimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<[f64; 3]>,
    pub inputs: Vec<[f64; 2]>,
}

impl Trajectory {
    /// Forward simulation of `inputs` from `x0`.
    pub fn rollout(x0: [f64; 3], inputs: Vec<[f64; 2]>, dt: f64) -> Self {
        let mut states = Vec::with_capacity(inputs.len() + 1);
        states.push(x0);
        for u in &inputs {
            let next = step_raw(states.last().expect("non-empty"), u, dt);
            states.push(next);
        }
        Self { states, inputs }
    }

    pub fn horizon(&self) -> usize {
        self.inputs.len()
    }
}

/// Heading that points from `x0` to the goal.
pub fn target_heading(x0: &RobotState, goal: (f64, f64)) -> f64 {
    let dx = goal.0 - x0.x;
    let dy = goal.1 - x0.y;
    if dx.hypot(dy) < HEADING_CAPTURE_RADIUS {
        x0.theta
    } else {
        dy.atan2(dx)
    }
}

/// Reference for the W term: the previous prediction advanced one step, or
/// `x0` repeated on a cold start.
pub fn variation_reference(x0: &RobotState, prev: Option<&PredictedTrajectory>, n: usize) -> Vec<[f64; 3]> {
    match prev {
        Some(p) if p.horizon() >= 1 => {
            let m = p.horizon();
            (0..=n).map(|k| p.states[(k + 1).min(m)].as_array()).collect()
        }
        _ => vec![x0.as_array(); n + 1],
    }
}

/// Static rows `h(x_{k+1}) ≥ (1-γ) h(x_k)` for every historical point and
/// every k, then one row per dynamic risk point. A dynamic risk found at step
/// k pairs state k-1 with the next state (k = 0 pairs the measured state
/// with x_1).
pub fn cbf_rows(hist: &[RiskPoint], dyn_risks: &[RiskPoint], p: &NmpcParams) -> Vec<BarrierRow> {
    let n = p.horizon;
    let mut rows = Vec::with_capacity(hist.len() * n + dyn_risks.len());
    for r in hist {
        let b = Barrier::point(&r.position, p.delta_s);
        for k in 0..n {
            rows.push(BarrierRow {
                cur: k,
                next: k + 1,
                cur_barrier: b,
                next_barrier: b,
                gamma: p.gamma,
                kind: RowKind::Static,
            });
        }
    }
    for r in dyn_risks {
        let k = r.step().unwrap_or(0).min(n - 1);
        let (cur, next) = if k == 0 { (0, 1) } else { (k - 1, k) };
        let b = Barrier::point(&r.position, p.delta_d);
        rows.push(BarrierRow {
            cur,
            next,
            cur_barrier: b,
            next_barrier: b,
            gamma: p.gamma,
            kind: RowKind::Dynamic,
        });
    }
    rows
}

/// Builds the NLP for the current cycle.
pub fn assemble_problem(
    x0: &RobotState,
    goal: (f64, f64),
    hist: &HistoricalRiskSet,
    dyn_risks: &[RiskPoint],
    prev: Option<&PredictedTrajectory>,
    p: &NmpcParams,
) -> Result<NlpProblem> {
    p.validate()?;
    let rows = cbf_rows(hist.points(), dyn_risks, p);
    let reference = variation_reference(x0, prev, p.horizon);
    NlpProblem::new(*x0, goal, reference, rows, *p)
}

impl NlpProblem {
    pub fn new(
        x0: RobotState,
        goal: (f64, f64),
        reference: Vec<[f64; 3]>,
        rows: Vec<BarrierRow>,
        params: NmpcParams,
    ) -> Result<Self> {
        if !x0.is_finite() {
            return Err(Error::NonFinite("x0"));
        }
        if !(goal.0.is_finite() && goal.1.is_finite()) {
            return Err(Error::NonFinite("target"));
        }
        if reference.len() != params.horizon + 1 || reference.iter().flatten().any(|v| !v.is_finite()) {
            return Err(invalid("reference", "need N + 1 finite states"));
        }
        for r in &rows {
            if r.next > params.horizon || r.cur > params.horizon {
                return Err(Error::StepOutOfRange {
                    step: r.next.max(r.cur),
                    horizon: params.horizon,
                });
            }
            let finite = |b: &Barrier| match b {
                Barrier::Point { center, delta } => center.iter().all(|c| c.is_finite()) && delta.is_finite(),
                Barrier::Ellipse { center, semi_axes } => {
                    center.iter().all(|c| c.is_finite()) && semi_axes.iter().all(|a| *a > 0.0 && a.is_finite())
                }
            };
            if !finite(&r.cur_barrier) || !finite(&r.next_barrier) {
                return Err(Error::NonFinite("barrier row"));
            }
        }
        let target = [goal.0, goal.1, target_heading(&x0, goal)];
        Ok(Self {
            x0,
            target,
            reference,
            rows,
            params,
        })
    }

    pub fn horizon(&self) -> usize {
        self.params.horizon
    }

    pub fn num_cbf_rows(&self) -> usize {
        self.rows.len()
    }

    /// Input bound rows: `v_min ≤ v ≤ v_max` and `|ω| ≤ ω_max` per step.
    pub fn num_input_bound_rows(&self) -> usize {
        4 * self.params.horizon
    }

    pub fn num_state_bound_rows(&self) -> usize {
        self.params.state_box.map_or(0, |_| 4 * self.params.horizon)
    }

    pub fn num_terminal_rows(&self) -> usize {
        usize::from(self.params.terminal_radius.is_some())
    }

    /// Dynamics blocks (N, plus the initial-state anchor) and inequality rows.
    pub fn constraint_counts(&self) -> ConstraintCounts {
        ConstraintCounts {
            dynamics_blocks: self.horizon(),
            bounds: self.num_input_bound_rows() + self.num_state_bound_rows(),
            terminal: self.num_terminal_rows(),
            cbf: self.num_cbf_rows(),
        }
    }

    /// Diagonal of the objective Hessian for state `k`.
    pub fn state_hessian(&self, k: usize) -> [f64; 3] {
        let p = &self.params;
        if k == p.horizon {
            p.q_terminal.map(|w| 2.0 * w)
        } else {
            std::array::from_fn(|i| 2.0 * (p.q[i] + p.w[i]))
        }
    }

    pub fn input_hessian(&self) -> [f64; 2] {
        self.params.r.map(|w| 2.0 * w)
    }

    fn errors(&self, k: usize, x: &[f64; 3]) -> ([f64; 3], [f64; 3]) {
        let t = &self.target;
        let r = &self.reference[k];
        (
            [x[0] - t[0], x[1] - t[1], wrap_angle(x[2] - t[2])],
            [x[0] - r[0], x[1] - r[1], wrap_angle(x[2] - r[2])],
        )
    }

    pub fn objective(&self, z: &Trajectory) -> f64 {
        let p = &self.params;
        let n = p.horizon;
        let mut f = 0.0;
        for k in 0..n {
            let (et, er) = self.errors(k, &z.states[k]);
            let u = &z.inputs[k];
            for i in 0..3 {
                f += p.q[i] * et[i] * et[i] + p.w[i] * er[i] * er[i];
            }
            f += p.r[0] * u[0] * u[0] + p.r[1] * u[1] * u[1];
        }
        let (et, _) = self.errors(n, &z.states[n]);
        for i in 0..3 {
            f += p.q_terminal[i] * et[i] * et[i];
        }
        f
    }

    /// Objective gradient split into state and input parts.
    pub fn objective_gradient(&self, z: &Trajectory) -> (Vec<[f64; 3]>, Vec<[f64; 2]>) {
        let p = &self.params;
        let n = p.horizon;
        let mut gx = Vec::with_capacity(n + 1);
        for k in 0..=n {
            let (et, er) = self.errors(k, &z.states[k]);
            gx.push(if k == n {
                std::array::from_fn(|i| 2.0 * p.q_terminal[i] * et[i])
            } else {
                std::array::from_fn(|i| 2.0 * (p.q[i] * et[i] + p.w[i] * er[i]))
            });
        }
        let gu = z
            .inputs
            .iter()
            .map(|u| [2.0 * p.r[0] * u[0], 2.0 * p.r[1] * u[1]])
            .collect();
        (gx, gu)
    }

    /// All inequality constraints `c(z) ≥ 0` in a fixed order: input bounds,
    /// state box, terminal ball, CBF rows.
    pub fn inequalities(&self, z: &Trajectory) -> Vec<f64> {
        let mut out = Vec::new();
        self.for_each_inequality(z, |c, _| out.push(c));
        out
    }

    /// Visits each inequality value with its sparse gradient.
    pub fn for_each_inequality(&self, z: &Trajectory, mut visit: impl FnMut(f64, &[Grad])) {
        let p = &self.params;
        let n = p.horizon;
        for (k, u) in z.inputs.iter().enumerate() {
            visit(u[0] - p.v_min, &[Grad::Input(k, 0, 1.0)]);
            visit(p.v_max - u[0], &[Grad::Input(k, 0, -1.0)]);
            visit(u[1] + p.omega_max, &[Grad::Input(k, 1, 1.0)]);
            visit(p.omega_max - u[1], &[Grad::Input(k, 1, -1.0)]);
        }
        if let Some([x_lo, x_hi, y_lo, y_hi]) = p.state_box {
            for k in 1..=n {
                let s = &z.states[k];
                visit(s[0] - x_lo, &[Grad::State(k, 0, 1.0)]);
                visit(x_hi - s[0], &[Grad::State(k, 0, -1.0)]);
                visit(s[1] - y_lo, &[Grad::State(k, 1, 1.0)]);
                visit(y_hi - s[1], &[Grad::State(k, 1, -1.0)]);
            }
        }
        if let Some(rf) = p.terminal_radius {
            let s = &z.states[n];
            let dx = s[0] - self.target[0];
            let dy = s[1] - self.target[1];
            visit(
                rf * rf - dx * dx - dy * dy,
                &[Grad::State(n, 0, -2.0 * dx), Grad::State(n, 1, -2.0 * dy)],
            );
        }
        for row in &self.rows {
            let pc = [z.states[row.cur][0], z.states[row.cur][1]];
            let pn = [z.states[row.next][0], z.states[row.next][1]];
            let (gc, gn) = row.gradients(pc, pn);
            visit(
                row.value(pc, pn),
                &[
                    Grad::State(row.cur, 0, gc[0]),
                    Grad::State(row.cur, 1, gc[1]),
                    Grad::State(row.next, 0, gn[0]),
                    Grad::State(row.next, 1, gn[1]),
                ],
            );
        }
    }

    /// Planar diagonal curvature `-Σ μ_i ∇²c_i` per state, for multipliers in
    /// [`Self::for_each_inequality`] order. Only the terminal ball and the CBF
    /// rows are nonlinear.
    pub fn inequality_curvature(&self, mu: &[f64]) -> Vec<[f64; 2]> {
        let n = self.horizon();
        let mut out = vec![[0.0; 2]; n + 1];
        if mu.is_empty() {
            return out;
        }
        let mut idx = self.num_input_bound_rows() + self.num_state_bound_rows();
        if self.params.terminal_radius.is_some() {
            out[n][0] += 2.0 * mu[idx];
            out[n][1] += 2.0 * mu[idx];
            idx += 1;
        }
        for row in &self.rows {
            let m = mu[idx];
            idx += 1;
            if m == 0.0 {
                continue;
            }
            let (hc, hn) = row.hessian_diags();
            for i in 0..2 {
                out[row.cur][i] -= m * hc[i];
                out[row.next][i] -= m * hn[i];
            }
        }
        out
    }

    /// Dynamics defects `f(x_k, u_k) - x_{k+1}` and the anchor `x0 - x_0`.
    pub fn defects(&self, z: &Trajectory) -> Vec<[f64; 3]> {
        let dt = self.params.dt;
        let mut out = Vec::with_capacity(z.horizon() + 1);
        let x0 = self.x0.as_array();
        let s0 = z.states[0];
        out.push([x0[0] - s0[0], x0[1] - s0[1], wrap_angle(x0[2] - s0[2])]);
        for k in 0..z.horizon() {
            let f = step_raw(&z.states[k], &z.inputs[k], dt);
            let nx = &z.states[k + 1];
            out.push([f[0] - nx[0], f[1] - nx[1], f[2] - nx[2]]);
        }
        out
    }

    /// ℓ1 norm of defects plus inequality violation.
    pub fn violation_l1(&self, z: &Trajectory) -> f64 {
        let d: f64 = self.defects(z).iter().flatten().map(|v| v.abs()).sum();
        d + self.inequalities(z).iter().map(|c| (-c).max(0.0)).sum::<f64>()
    }

    /// Largest single defect or inequality violation.
    pub fn violation_max(&self, z: &Trajectory) -> f64 {
        let d = self.defects(z).iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
        self.inequalities(z).iter().fold(d, |a, c| a.max(-c))
    }
}

/// Nonzero entry of an inequality gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Grad {
    State(usize, usize, f64),
    Input(usize, usize, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConstraintCounts {
    pub dynamics_blocks: usize,
    pub bounds: usize,
    pub terminal: usize,
    pub cbf: usize,
}
