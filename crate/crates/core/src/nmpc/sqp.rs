//! Gauss-Newton SQP with an ℓ1 merit line search.
//!
//! Each iteration linearizes the dynamics around the current iterate and
//! condenses the state increments, `dx = S du + s`, so the QP subproblem is
//! dense in the input increments only. The multiple-shooting states are
//! still updated by `S du + s`, which keeps defects from being forced to zero
//! in a single step far from the solution.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::risk::PredictedTrajectory;

use super::model::{step_jacobians, step_raw, wrap_angle, ControlInput, RobotState};
use super::problem::{Grad, NlpProblem, Trajectory};
use super::qp::{DenseQp, QpError};

/// Multiplier magnitude below which stationarity is measured unscaled.
const DUAL_SCALE: f64 = 100.0;
/// Armijo sufficient-decrease constant.
const ARMIJO: f64 = 1e-4;
const MIN_STEP: f64 = 1e-8;
/// Converged iterates must also satisfy the dynamics this tightly.
const DEFECT_TOL: f64 = 1e-9;
/// Plans covering less than this share of the reachable distance count as
/// stalled and trigger a second start.
/// Turn-in-place lengths, in steps, tried by the escape guess.
const ESCAPE_TURNS: [usize; 4] = [0, 4, 8, 13];
const STALL_FRACTION: f64 = 0.25;
/// Smallest per-unit price of violation in the elastic subproblem.
const ELASTIC_MIN_WEIGHT: f64 = 1e4;
/// Curvature on elastic variables, keeping the subproblem strictly convex.
const ELASTIC_CURVATURE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Solved,
    Failed,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveStatus::Solved => "solved",
            SolveStatus::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NmpcSolution {
    pub inputs: Vec<ControlInput>,
    pub states: Vec<RobotState>,
    pub cost: f64,
    pub status: SolveStatus,
    pub solve_time_s: f64,
    /// QP subproblems solved.
    pub iterations: usize,
    pub kkt_residual: f64,
    pub max_violation: f64,
}

impl NmpcSolution {
    pub fn is_solved(&self) -> bool {
        self.status == SolveStatus::Solved
    }

    pub fn horizon(&self) -> usize {
        self.inputs.len()
    }

    pub fn to_trajectory(&self, time: f64) -> PredictedTrajectory {
        PredictedTrajectory {
            states: self.states.clone(),
            solve_time: time,
        }
    }
}

/// Shifts `prev` by one step, repeats its last input and anchors the first
/// state at `x0`. Headings are unwrapped along the sequence.
pub fn shifted_guess(prev: &NmpcSolution, x0: &RobotState, n: usize, dt: f64) -> Option<Trajectory> {
    if prev.horizon() != n || prev.states.len() != n + 1 || n == 0 {
        return None;
    }
    let mut inputs: Vec<[f64; 2]> = prev.inputs[1..].iter().map(|u| [u.v, u.omega]).collect();
    let last = *inputs.last().unwrap_or(&[prev.inputs[0].v, prev.inputs[0].omega]);
    inputs.push(last);
    let mut states: Vec<[f64; 3]> = prev.states[1..].iter().map(|s| s.as_array()).collect();
    let tail = step_raw(states.last().expect("n >= 1"), &last, dt);
    states.push(tail);
    states[0] = x0.as_array();
    for k in 1..states.len() {
        states[k][2] = states[k - 1][2] + wrap_angle(states[k][2] - states[k - 1][2]);
    }
    if states
        .iter()
        .flatten()
        .chain(inputs.iter().flatten())
        .any(|v| !v.is_finite())
    {
        return None;
    }
    Some(Trajectory { states, inputs })
}

/// Zero inputs with every state at `x0`.
pub fn cold_guess(x0: &RobotState, n: usize) -> Trajectory {
    Trajectory {
        states: vec![x0.as_array(); n + 1],
        inputs: vec![[0.0; 2]; n],
    }
}

/// Solves `problem`, warm-started from the shifted `warm` solution when it
/// matches the horizon and satisfies the current constraints. A shifted plan
/// cut by a newly found risk point can sit where the violations of
/// overlapping barriers cancel, a trap for the ℓ1 merit, so it is replaced
/// by the stationary guess, which is feasible whenever every barrier is
/// nonnegative at `x0`.
pub fn solve(problem: &NlpProblem, warm: Option<&NmpcSolution>) -> NmpcSolution {
    let n = problem.horizon();
    let guess = warm
        .and_then(|w| shifted_guess(w, &problem.x0, n, problem.params.dt))
        .filter(|g| problem.violation_max(g) <= problem.params.tolerance)
        .unwrap_or_else(|| cold_guess(&problem.x0, n));
    let first = solve_from(problem, guess);
    if first.is_solved() && !stalled(problem, &first) {
        return first;
    }
    // The shifted plan can hold the robot against a row of risk points while
    // a detour is cheaper; restart from the least violating turn-and-go.
    let second = solve_from(problem, escape_guess(problem));
    let spent = first.solve_time_s + second.solve_time_s;
    let iterations = first.iterations + second.iterations;
    let better = second.is_solved() && (!first.is_solved() || second.cost < first.cost);
    let mut best = if better { second } else { first };
    best.solve_time_s = spent;
    best.iterations = iterations;
    best
}

/// A plan that covers less than a quarter of the distance it could, short
/// of the goal.
fn stalled(problem: &NlpProblem, sol: &NmpcSolution) -> bool {
    let p = &problem.params;
    let (x0, end) = (&problem.x0, sol.states.last().expect("nonempty plan"));
    let reach = p.v_max * p.dt * p.horizon as f64;
    let to_goal = (problem.target[0] - x0.x).hypot(problem.target[1] - x0.y);
    let travel = (end.x - x0.x).hypot(end.y - x0.y);
    travel < STALL_FRACTION * reach.min(to_goal)
}

/// Turns in place for a few steps to either side, then drives straight at
/// full speed; the candidate with the least ℓ1 violation wins, ties going to
/// the lower cost.
fn escape_guess(problem: &NlpProblem) -> Trajectory {
    let p = &problem.params;
    let n = p.horizon;
    let mut best: Option<(f64, f64, Trajectory)> = None;
    for turn in ESCAPE_TURNS {
        for side in [1.0, -1.0] {
            let m = turn.min(n);
            let inputs = (0..n)
                .map(|k| {
                    if k < m {
                        [0.0, side * p.omega_max]
                    } else {
                        [p.v_max, 0.0]
                    }
                })
                .collect();
            let z = Trajectory::rollout(problem.x0.as_array(), inputs, p.dt);
            let key = (problem.violation_l1(&z), problem.objective(&z));
            if best.as_ref().map_or(true, |b| key < (b.0, b.1)) {
                best = Some((key.0, key.1, z));
            }
            if turn == 0 {
                break;
            }
        }
    }
    best.expect("at least one candidate").2
}

/// Solves `problem` from an explicit initial guess.
pub fn solve_from(problem: &NlpProblem, guess: Trajectory) -> NmpcSolution {
    let start = Instant::now();
    let out = Sqp::new(problem).run(guess);
    let dt = problem.params.dt;
    let z = Trajectory::rollout(problem.x0.as_array(), out.z.inputs, dt);
    let max_violation = problem.violation_max(&z);
    let solved = out.converged && max_violation <= problem.params.tolerance;
    NmpcSolution {
        inputs: z.inputs.iter().map(|u| ControlInput::new(u[0], u[1])).collect(),
        states: z.states.iter().map(|s| RobotState::new(s[0], s[1], s[2])).collect(),
        cost: problem.objective(&z),
        status: if solved {
            SolveStatus::Solved
        } else {
            SolveStatus::Failed
        },
        solve_time_s: start.elapsed().as_secs_f64(),
        iterations: out.iterations,
        kkt_residual: out.kkt,
        max_violation,
    }
}

struct SqpOutcome {
    z: Trajectory,
    converged: bool,
    iterations: usize,
    kkt: f64,
}

/// Condensed linearization `dx_k = S_k du + s_k`.
struct Condensed {
    /// Row `3k + i` is the sensitivity of state component i at step k.
    s_mat: DMatrix<f64>,
    s_vec: Vec<[f64; 3]>,
    a: Vec<[[f64; 3]; 3]>,
    b: Vec<[[f64; 2]; 3]>,
}

/// Lagrangian Hessian in the full space: dense 3x3 state blocks, the
/// `(θ_k, v_k)` coupling from the dynamics, and the diagonal input weights.
struct Curvature {
    hxx: Vec<[[f64; 3]; 3]>,
    hxu: Vec<f64>,
    huu: [f64; 2],
}

struct Step {
    dx: Vec<[f64; 3]>,
    du: Vec<[f64; 2]>,
    /// Inequality multipliers in [`NlpProblem::for_each_inequality`] order.
    mu: Vec<f64>,
    /// ℓ1 inequality violation of the linearization after the step.
    predicted_violation: f64,
    /// Price of violation when the step came from the elastic subproblem.
    elastic_weight: Option<f64>,
}

/// Multiplier estimates at an iterate and the resulting KKT residual.
struct Multipliers {
    lam: Vec<[f64; 3]>,
    max_abs: f64,
    kkt: f64,
}

struct Sqp<'a> {
    p: &'a NlpProblem,
    n: usize,
}

impl<'a> Sqp<'a> {
    fn new(p: &'a NlpProblem) -> Self {
        Self { p, n: p.horizon() }
    }

    fn condense(&self, z: &Trajectory) -> Condensed {
        let n = self.n;
        let dt = self.p.params.dt;
        let defects = self.p.defects(z);
        let mut s_mat = DMatrix::zeros(3 * (n + 1), 2 * n);
        let mut s_vec = Vec::with_capacity(n + 1);
        let mut a_all = Vec::with_capacity(n);
        let mut b_all = Vec::with_capacity(n);
        s_vec.push(defects[0]);
        for k in 0..n {
            let (a, b) = step_jacobians(&z.states[k], &z.inputs[k], dt);
            let cols = 2 * k;
            for i in 0..3 {
                for c in 0..cols {
                    let mut acc = 0.0;
                    for j in 0..3 {
                        acc += a[i][j] * s_mat[(3 * k + j, c)];
                    }
                    s_mat[(3 * (k + 1) + i, c)] = acc;
                }
                s_mat[(3 * (k + 1) + i, cols)] = b[i][0];
                s_mat[(3 * (k + 1) + i, cols + 1)] = b[i][1];
            }
            let prev = s_vec[k];
            let d = defects[k + 1];
            s_vec.push(std::array::from_fn(|i| {
                (0..3).map(|j| a[i][j] * prev[j]).sum::<f64>() + d[i]
            }));
            a_all.push(a);
            b_all.push(b);
        }
        Condensed {
            s_mat,
            s_vec,
            a: a_all,
            b: b_all,
        }
    }

    /// Number of leading columns of `S_k` that can be nonzero.
    #[inline]
    fn live_cols(k: usize) -> usize {
        2 * k
    }

    fn curvature(&self, z: &Trajectory, lam: &[[f64; 3]], mu: &[f64]) -> Curvature {
        let n = self.n;
        let dt = self.p.params.dt;
        let mut hxx: Vec<[[f64; 3]; 3]> = (0..=n)
            .map(|k| {
                let d = self.p.state_hessian(k);
                [[d[0], 0.0, 0.0], [0.0, d[1], 0.0], [0.0, 0.0, d[2]]]
            })
            .collect();
        for (k, c) in self.p.inequality_curvature(mu).iter().enumerate() {
            hxx[k][0][0] += c[0];
            hxx[k][1][1] += c[1];
        }
        let mut hxu = vec![0.0; n];
        for (k, l) in lam.iter().enumerate() {
            let (s, c) = z.states[k][2].sin_cos();
            let v = z.inputs[k][0];
            hxx[k][2][2] += (l[0] * c + l[1] * s) * v * dt;
            hxu[k] = (l[0] * s - l[1] * c) * dt;
        }
        Curvature {
            hxx,
            hxu,
            huu: self.p.input_hessian(),
        }
    }

    fn subproblem(
        &self,
        z: &Trajectory,
        c: &Condensed,
        curv: &Curvature,
        elastic_weight: f64,
    ) -> Result<Step, QpError> {
        let n = self.n;
        let nu = 2 * n;
        let (gx, gu) = self.p.objective_gradient(z);
        let mut h = DMatrix::zeros(nu, nu);
        let mut g = DVector::zeros(nu);
        let mut t = vec![0.0; nu];
        for k in 1..=n {
            let cols = Self::live_cols(k);
            let hk = &curv.hxx[k];
            for i in 0..3 {
                // Row i of Hxx_k S_k and its linear term.
                for (a, ta) in t.iter_mut().enumerate().take(cols) {
                    *ta = (0..3).map(|j| hk[i][j] * c.s_mat[(3 * k + j, a)]).sum();
                }
                let lin: f64 = (0..3).map(|j| hk[i][j] * c.s_vec[k][j]).sum::<f64>() + gx[k][i];
                for a in 0..cols {
                    let sa = c.s_mat[(3 * k + i, a)];
                    if sa == 0.0 {
                        continue;
                    }
                    g[a] += sa * lin;
                    for b in 0..=a {
                        h[(a, b)] += sa * t[b];
                    }
                }
            }
        }
        for a in 0..nu {
            for b in 0..a {
                h[(b, a)] = h[(a, b)];
            }
            h[(a, a)] += curv.huu[a % 2];
            g[a] += gu[a / 2][a % 2];
        }
        for k in 0..n {
            let cxu = curv.hxu[k];
            if cxu == 0.0 {
                continue;
            }
            let vk = 2 * k;
            for a in 0..Self::live_cols(k) {
                let v = cxu * c.s_mat[(3 * k + 2, a)];
                h[(vk, a)] += v;
                h[(a, vk)] += v;
            }
            g[vk] += cxu * c.s_vec[k][2];
        }

        // Linearized rows `r0 + a·du ≥ 0`.
        let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
        self.p.for_each_inequality(z, |value, grads| {
            let mut row = vec![0.0; nu];
            let mut shift = 0.0;
            for gr in grads {
                match *gr {
                    Grad::Input(k, i, gv) => row[2 * k + i] += gv,
                    Grad::State(k, i, gv) => {
                        shift += gv * c.s_vec[k][i];
                        for (a, r) in row.iter_mut().enumerate().take(Self::live_cols(k)) {
                            *r += gv * c.s_mat[(3 * k + i, a)];
                        }
                    }
                }
            }
            rows.push((row, value + shift));
        });
        let h = convexify(h, curv.huu[0].min(curv.huu[1]));
        let mut qp = DenseQp::new(h.clone(), g.clone());
        for (row, r0) in &rows {
            qp.add_row(row, -r0);
        }
        match qp.solve() {
            Ok(sol) => Ok(self.expand(c, &rows, sol.x.as_slice(), sol.multipliers)),
            Err(QpError::Infeasible) => self.elastic(c, h, g, &rows, elastic_weight),
            Err(e) => Err(e),
        }
    }

    /// Inconsistent linearization: rows violated at `z` get an elastic
    /// variable `s ≥ 0` priced at `weight`, so the zero step is feasible and
    /// the step trades objective for violation like the ℓ1 merit does.
    fn elastic(
        &self,
        c: &Condensed,
        h: DMatrix<f64>,
        g: DVector<f64>,
        rows: &[(Vec<f64>, f64)],
        weight: f64,
    ) -> Result<Step, QpError> {
        let nu = h.nrows();
        let violated: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].1 < 0.0).collect();
        let ne = violated.len();
        let mut he = DMatrix::zeros(nu + ne, nu + ne);
        he.view_mut((0, 0), (nu, nu)).copy_from(&h);
        let mut ge = DVector::zeros(nu + ne);
        ge.rows_mut(0, nu).copy_from(&g);
        for j in 0..ne {
            he[(nu + j, nu + j)] = ELASTIC_CURVATURE;
            ge[nu + j] = weight;
        }
        let mut qp = DenseQp::new(he, ge);
        let mut coeffs = vec![0.0; nu + ne];
        for (i, (row, r0)) in rows.iter().enumerate() {
            coeffs.fill(0.0);
            coeffs[..nu].copy_from_slice(row);
            if let Ok(j) = violated.binary_search(&i) {
                coeffs[nu + j] = 1.0;
            }
            qp.add_row(&coeffs, -r0);
        }
        for j in 0..ne {
            qp.add_bounds(nu + j, Some(0.0), None);
        }
        let sol = qp.solve()?;
        let mu = sol.multipliers[..rows.len()].to_vec();
        let mut step = self.expand(c, rows, &sol.x.as_slice()[..nu], mu);
        step.elastic_weight = Some(weight);
        Ok(step)
    }

    fn expand(&self, c: &Condensed, rows: &[(Vec<f64>, f64)], x: &[f64], mu: Vec<f64>) -> Step {
        let n = self.n;
        let predicted_violation = rows
            .iter()
            .map(|(row, r0)| (-(r0 + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>())).max(0.0))
            .sum();
        let sol_x = x;
        let du: Vec<[f64; 2]> = (0..n).map(|k| [sol_x[2 * k], sol_x[2 * k + 1]]).collect();
        let dx: Vec<[f64; 3]> = (0..=n)
            .map(|k| {
                std::array::from_fn(|i| {
                    let r = 3 * k + i;
                    let lin: f64 = (0..Self::live_cols(k)).map(|a| c.s_mat[(r, a)] * sol_x[a]).sum();
                    lin + c.s_vec[k][i]
                })
            })
            .collect();
        Step {
            dx,
            du,
            mu,
            predicted_violation,
            elastic_weight: None,
        }
    }

    /// Dynamics multipliers from state stationarity at `z`,
    /// `λ_{k-1} = A_kᵀ λ_k − q_k` with `λ_{N-1} = −q_N`, and the residual of
    /// input stationarity and complementarity they leave.
    fn multipliers(&self, z: &Trajectory, c: &Condensed, mu: &[f64]) -> Multipliers {
        let n = self.n;
        let (mut q, mut r) = self.p.objective_gradient(z);
        let mut idx = 0;
        let mut compl = 0.0f64;
        self.p.for_each_inequality(z, |value, grads| {
            let m = mu[idx];
            if m != 0.0 {
                compl = compl.max((m * value).abs());
                for gr in grads {
                    match *gr {
                        Grad::State(k, i, gv) => q[k][i] -= m * gv,
                        Grad::Input(k, i, gv) => r[k][i] -= m * gv,
                    }
                }
            }
            idx += 1;
        });
        let mut lam = vec![[0.0; 3]; n];
        lam[n - 1] = q[n].map(|v| -v);
        for k in (1..n).rev() {
            let a = &c.a[k];
            let next = lam[k];
            lam[k - 1] = std::array::from_fn(|i| (0..3).map(|j| a[j][i] * next[j]).sum::<f64>() - q[k][i]);
        }
        let mut station = 0.0f64;
        for k in 0..n {
            let b = &c.b[k];
            for i in 0..2 {
                let bl: f64 = (0..3).map(|j| b[j][i] * lam[k][j]).sum();
                station = station.max((r[k][i] - bl).abs());
            }
        }
        let lam_max = lam.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
        let max_abs = mu.iter().fold(lam_max, |a, v| a.max(v.abs()));
        // Stationarity is measured relative to the mean multiplier size once
        // that exceeds DUAL_SCALE, so large barrier forces do not demand
        // digits beyond floating-point reach.
        let count = 3 * n + mu.len();
        let l1 = lam.iter().flatten().chain(mu).map(|v| v.abs()).sum::<f64>();
        let scale = (l1 / count as f64).max(DUAL_SCALE) / DUAL_SCALE;
        Multipliers {
            lam,
            max_abs,
            kkt: (station / scale).max(compl),
        }
    }

    fn merit(&self, z: &Trajectory, rho: f64) -> f64 {
        self.p.objective(z) + rho * self.p.violation_l1(z)
    }

    fn run(&self, mut z: Trajectory) -> SqpOutcome {
        let tol = self.p.params.tolerance;
        let max_iters = self.p.params.max_sqp_iters;
        let mut rho = 0.0f64;
        let mut kkt = f64::INFINITY;
        if max_iters == 0 {
            return SqpOutcome {
                z,
                converged: false,
                iterations: 0,
                kkt,
            };
        }
        let mut mu = vec![0.0; self.p.inequalities(&z).len()];
        for it in 0..=max_iters {
            let c = self.condense(&z);
            // The iterate is paired with the multipliers of the QP that
            // produced it, for both the optimality test and the Hessian.
            let m = self.multipliers(&z, &c, &mu);
            kkt = m.kkt;
            let max_defect = self.p.defects(&z).iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
            let max_ineq = self.p.inequalities(&z).iter().fold(0.0f64, |a, v| a.max(-v));
            if kkt <= tol && max_ineq <= tol && max_defect <= DEFECT_TOL {
                return SqpOutcome {
                    z,
                    converged: true,
                    iterations: it,
                    kkt,
                };
            }
            if it == max_iters {
                break;
            }
            let curv = self.curvature(&z, &m.lam, &mu);
            let step = match self.subproblem(&z, &c, &curv, rho.max(ELASTIC_MIN_WEIGHT)) {
                Ok(s) => s,
                Err(_) => {
                    return SqpOutcome {
                        z,
                        converged: false,
                        iterations: it + 1,
                        kkt,
                    }
                }
            };
            // Elastic multipliers sit at the price itself; feeding them back
            // would inflate the penalty every iteration.
            rho = match step.elastic_weight {
                Some(w) => rho.max(w),
                None => {
                    let mu_max = step.mu.iter().fold(m.max_abs, |a, v| a.max(v.abs()));
                    rho.max(1.1 * mu_max + 1e-6)
                }
            };

            let (gx, gu) = self.p.objective_gradient(&z);
            let mut slope: f64 = 0.0;
            for k in 0..=self.n {
                slope += (0..3).map(|i| gx[k][i] * step.dx[k][i]).sum::<f64>();
            }
            for k in 0..self.n {
                slope += gu[k][0] * step.du[k][0] + gu[k][1] * step.du[k][1];
            }
            slope -= rho * (self.p.violation_l1(&z) - step.predicted_violation);

            let phi0 = self.merit(&z, rho);
            let accept = |trial: &Trajectory, alpha: f64| {
                slope >= 0.0 || self.merit(trial, rho) <= phi0 + ARMIJO * alpha * slope
            };
            let full = self.advance(&z, &step, 1.0);
            let candidate = if accept(&full, 1.0) {
                full
            } else {
                // Second-order correction: re-simulate the states from the
                // new inputs, which removes the curvature-induced defects.
                let soc = Trajectory::rollout(self.p.x0.as_array(), full.inputs.clone(), self.p.params.dt);
                if accept(&soc, 1.0) {
                    soc
                } else {
                    let mut alpha = 1.0;
                    loop {
                        alpha *= 0.5;
                        let trial = self.advance(&z, &step, alpha);
                        if alpha < MIN_STEP || accept(&trial, alpha) {
                            break trial;
                        }
                    }
                }
            };
            z = candidate;
            mu = step.mu;
        }
        SqpOutcome {
            z,
            converged: false,
            iterations: max_iters,
            kkt,
        }
    }

    fn advance(&self, z: &Trajectory, step: &Step, alpha: f64) -> Trajectory {
        Trajectory {
            states: z
                .states
                .iter()
                .zip(&step.dx)
                .map(|(s, d)| std::array::from_fn(|i| s[i] + alpha * d[i]))
                .collect(),
            inputs: z
                .inputs
                .iter()
                .zip(&step.du)
                .map(|(u, d)| [u[0] + alpha * d[0], u[1] + alpha * d[1]])
                .collect(),
        }
    }
}

/// Returns `h` unchanged when it is positive definite, otherwise its
/// spectral projection with eigenvalues raised to at least `floor`.
fn convexify(h: DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    if h.clone().cholesky().is_some() {
        return h;
    }
    let eig = h.symmetric_eigen();
    let d = eig.eigenvalues.map(|v| v.max(floor));
    let q = &eig.eigenvectors;
    let mut out = q * DMatrix::from_diagonal(&d) * q.transpose();
    out = (&out + out.transpose()) * 0.5;
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point3;
    use crate::nmpc::barrier::{barrier_value, Barrier, BarrierRow, RowKind};
    use crate::nmpc::model::dynamics_step;
    use crate::nmpc::params::NmpcParams;
    use crate::nmpc::problem::cbf_rows;
    use crate::risk::{RiskKind, RiskPoint};

    fn free_problem(x0: RobotState, goal: (f64, f64), p: NmpcParams) -> NlpProblem {
        let reference = vec![x0.as_array(); p.horizon + 1];
        NlpProblem::new(x0, goal, reference, Vec::new(), p).unwrap()
    }

    fn assert_consistent(sol: &NmpcSolution, dt: f64) {
        for k in 0..sol.horizon() {
            let next = dynamics_step(&sol.states[k], &sol.inputs[k], dt);
            assert!((next.x - sol.states[k + 1].x).abs() < 1e-8);
            assert!((next.y - sol.states[k + 1].y).abs() < 1e-8);
            assert!(wrap_angle(next.theta - sol.states[k + 1].theta).abs() < 1e-8);
        }
    }

    #[test]
    fn target_at_start_gives_zero_input() {
        let x0 = RobotState::new(1.0, 1.0, 0.3);
        let p = NmpcParams::default();
        let sol = solve(&free_problem(x0, (1.0, 1.0), p), None);
        assert!(sol.is_solved());
        let norm = sol
            .inputs
            .iter()
            .map(|u| u.v * u.v + u.omega * u.omega)
            .sum::<f64>()
            .sqrt();
        assert!(norm <= 1e-4, "{norm}");
        assert!(sol.cost <= 1e-8);
    }

    /// Best "drive at v for m steps, then stop" sequence on a fine grid.
    fn grid_search(prob: &NlpProblem) -> (f64, f64) {
        let p = &prob.params;
        let mut best = (f64::INFINITY, 0.0);
        for m in 1..=p.horizon {
            for iv in 0..=240 {
                let v = p.v_max * iv as f64 / 240.0;
                let inputs = (0..p.horizon).map(|k| [if k < m { v } else { 0.0 }, 0.0]).collect();
                let z = Trajectory::rollout(prob.x0.as_array(), inputs, p.dt);
                let f = prob.objective(&z);
                if f < best.0 {
                    best = (f, v);
                }
            }
        }
        best
    }

    #[test]
    fn straight_goal_first_input_near_max_speed() {
        let x0 = RobotState::new(0.0, 0.0, 0.0);
        let p = NmpcParams::default();
        let prob = free_problem(x0, (2.0, 0.0), p);
        let sol = solve(&prob, None);
        assert!(sol.is_solved(), "{sol:?}");
        assert_consistent(&sol, p.dt);
        let u0 = sol.inputs[0];
        assert!(u0.v >= 1.0 && u0.v <= 1.2 + 1e-9, "{u0:?}");
        assert!(u0.omega.abs() < 1e-6);
        let (grid_cost, grid_v) = grid_search(&prob);
        assert!(grid_v >= 1.0, "grid optimum {grid_v}");
        assert!(sol.cost <= grid_cost + 1e-9);
    }

    #[test]
    fn static_risk_on_path_respects_cbf_chain() {
        let x0 = RobotState::new(0.0, 0.0, 0.0);
        let p = NmpcParams::default();
        let risk = RiskPoint {
            position: Point3::new(1.0, 0.02, 0.2),
            kind: RiskKind::Static { born_time: 0.0 },
        };
        let rows = cbf_rows(&[risk], &[], &p);
        let reference = vec![x0.as_array(); p.horizon + 1];
        let prob = NlpProblem::new(x0, (2.5, 0.0), reference, rows, p).unwrap();
        let sol = solve(&prob, None);
        assert!(sol.is_solved(), "{sol:?}");
        assert_consistent(&sol, p.dt);
        let h = |s: &RobotState| barrier_value((s.x, s.y), &risk.position, p.delta_s);
        let h0 = h(&sol.states[0]);
        for k in 0..p.horizon {
            let (hk, hn) = (h(&sol.states[k]), h(&sol.states[k + 1]));
            assert!(hn - (1.0 - p.gamma) * hk >= -1e-6, "step {k}");
            assert!(hk >= (1.0 - p.gamma).powi(k as i32) * h0 - 1e-6, "chain {k}");
        }
        assert!(sol.states.iter().all(|s| h(s) >= -1e-6));
        assert!(sol.states[p.horizon].x > 1.0, "robot should pass the point");
    }

    #[test]
    fn warm_start_from_shifted_solution_is_cheap() {
        let p = NmpcParams::default();
        let x0 = RobotState::new(0.0, 0.0, 0.0);
        let goal = (6.0, 2.0);
        let first = solve(&free_problem(x0, goal, p), None);
        assert!(first.is_solved(), "{first:?}");
        let prev = first.to_trajectory(0.0);
        let x1 = first.states[1];
        let hist = crate::risk::HistoricalRiskSet::new(Default::default());
        let prob = crate::nmpc::problem::assemble_problem(&x1, goal, &hist, &[], Some(&prev), &p).unwrap();
        let second = solve(&prob, Some(&first));
        assert!(second.is_solved());
        assert!(second.iterations <= 3, "iterations {}", second.iterations);
    }

    #[test]
    fn zero_iteration_cap_fails() {
        let p = NmpcParams {
            max_sqp_iters: 0,
            ..NmpcParams::default()
        };
        let sol = solve(&free_problem(RobotState::default(), (1.0, 0.0), p), None);
        assert_eq!(sol.status, SolveStatus::Failed);
        assert_eq!(sol.inputs.len(), p.horizon);
    }

    #[test]
    fn unreachable_hard_constraint_fails() {
        // Robot already deep inside a barrier whose next-step requirement
        // cannot be met with bounded speed.
        let p = NmpcParams::default();
        let x0 = RobotState::new(0.0, 0.0, 0.0);
        let b = Barrier::Point {
            center: [0.0, 0.0],
            delta: 5.0,
        };
        let rows = vec![BarrierRow {
            cur: 1,
            next: 2,
            cur_barrier: Barrier::Point {
                center: [50.0, 0.0],
                delta: 0.1,
            },
            next_barrier: b,
            gamma: 0.9,
            kind: RowKind::Static,
        }];
        let reference = vec![x0.as_array(); p.horizon + 1];
        let prob = NlpProblem::new(x0, (1.0, 0.0), reference, rows, p).unwrap();
        assert_eq!(solve(&prob, None).status, SolveStatus::Failed);
    }
}
