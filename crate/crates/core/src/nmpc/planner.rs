//! Receding-horizon loop: risk identification, assembly, solve, and the
//! fallback rule for failed solves.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::ftd_map::{FtdMap, HeightBand};
use crate::risk::{
    identify_dynamic_risks, identify_static_risk, HistoricalRiskSet, HistoryConfig, PredictedTrajectory,
};

use super::barrier::BarrierRow;
use super::model::{step_raw, ControlInput, RobotState};
use super::params::NmpcParams;
use super::problem::{cbf_rows, variation_reference, NlpProblem, Trajectory};
use super::sqp::{solve, NmpcSolution, SolveStatus};

/// Extra solves allowed per cycle when the fresh plan reveals new collisions.
const VERIFY_ROUNDS: usize = 2;

/// Last successful solution and the number of planning steps since it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FallbackBuffer {
    pub last_success: Option<NmpcSolution>,
    pub success_time: f64,
    pub delta_t: usize,
}

impl FallbackBuffer {
    pub fn record_success(&mut self, sol: &NmpcSolution, time: f64) {
        self.last_success = Some(sol.clone());
        self.success_time = time;
        self.delta_t = 0;
    }

    pub fn record_failure(&mut self) {
        self.delta_t += 1;
    }
}

/// Element ΔT of the last successful input sequence, or zero when there is
/// none or the sequence is exhausted.
pub fn fallback_control(buf: &FallbackBuffer) -> ControlInput {
    buf.last_success
        .as_ref()
        .and_then(|s| s.inputs.get(buf.delta_t).copied())
        .unwrap_or(ControlInput::ZERO)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    pub nmpc: NmpcParams,
    pub history: HistoryConfig,
    /// Height band `[z_min, robot height]` of points that can be hit.
    pub band_min: f64,
    pub band_max: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            nmpc: NmpcParams::default(),
            history: HistoryConfig::default(),
            band_min: 0.05,
            band_max: 0.45,
        }
    }
}

impl PlannerConfig {
    pub fn band(&self) -> Result<HeightBand> {
        HeightBand::new(self.band_min, self.band_max)
    }

    pub fn validate(&self) -> Result<()> {
        self.nmpc.validate()?;
        self.band()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanOutcome {
    pub applied: ControlInput,
    pub solution: NmpcSolution,
    pub used_fallback: bool,
    pub delta_t: usize,
    pub static_risks: usize,
    pub dynamic_risks: usize,
    /// Wall-clock time of risk identification, assembly and solve.
    pub cycle_time_s: f64,
}

/// Planning state owned by the control loop.
#[derive(Debug, Clone)]
pub struct Planner {
    pub cfg: PlannerConfig,
    pub history: HistoricalRiskSet,
    pub buffer: FallbackBuffer,
    /// Plan in effect: the last solution, or the fallback rollout after a
    /// failure. Serves as previous prediction and warm start.
    plan: Option<NmpcSolution>,
}

impl Planner {
    pub fn new(cfg: PlannerConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            history: HistoricalRiskSet::new(cfg.history),
            buffer: FallbackBuffer::default(),
            plan: None,
        })
    }

    pub fn params(&self) -> &NmpcParams {
        &self.cfg.nmpc
    }

    pub fn plan(&self) -> Option<&NmpcSolution> {
        self.plan.as_ref()
    }

    /// Previous prediction `x_{t-1+k|t-1}`; a stationary one before the first
    /// cycle.
    pub fn previous_prediction(&self, x0: &RobotState, now: f64) -> PredictedTrajectory {
        match &self.plan {
            Some(p) => p.to_trajectory(now),
            None => PredictedTrajectory::stationary(*x0, self.cfg.nmpc.horizon, now),
        }
    }

    /// One planning cycle of the main planner against an FTD map.
    ///
    /// A solved plan is scanned against the static map before it is applied;
    /// collisions it would run into add risk points and the problem is solved
    /// again. The previous prediction alone misses walls a stationary robot
    /// has stopped "seeing" once their history has expired.
    pub fn plan_step(&mut self, x0: &RobotState, goal: (f64, f64), map: &FtdMap, now: f64) -> Result<PlanOutcome> {
        let start = Instant::now();
        let p = self.cfg.nmpc;
        let band = self.cfg.band()?;
        let prev = self.previous_prediction(x0, now);
        let new_static = identify_static_risk(map, &prev, p.delta_s, &band, now);
        self.history.update(&new_static, x0.position(), now);
        let dyn_risks = identify_dynamic_risks(map, &prev, p.delta_d, &band);
        let mut solution = self.solve_only(x0, goal, cbf_rows(self.history.points(), &dyn_risks, &p))?;
        for _ in 0..VERIFY_ROUNDS {
            if !solution.is_solved() {
                break;
            }
            let missed = identify_static_risk(map, &solution.to_trajectory(now), p.delta_s, &band, now);
            if self.history.update(&missed, x0.position(), now) == 0 {
                break;
            }
            let rows = cbf_rows(self.history.points(), &dyn_risks, &p);
            let again = self.solve_only(x0, goal, rows)?;
            solution = NmpcSolution {
                solve_time_s: solution.solve_time_s + again.solve_time_s,
                iterations: solution.iterations + again.iterations,
                ..again
            };
        }
        let mut out = self.commit(solution, x0, now);
        out.static_risks = self.history.len();
        out.dynamic_risks = dyn_risks.len();
        out.cycle_time_s = start.elapsed().as_secs_f64();
        Ok(out)
    }

    /// Solves with the given barrier rows and applies the fallback rule.
    pub fn solve_rows(
        &mut self,
        x0: &RobotState,
        goal: (f64, f64),
        rows: Vec<BarrierRow>,
        now: f64,
    ) -> Result<PlanOutcome> {
        let start = Instant::now();
        let solution = self.solve_only(x0, goal, rows)?;
        let mut out = self.commit(solution, x0, now);
        out.cycle_time_s = start.elapsed().as_secs_f64();
        Ok(out)
    }

    fn solve_only(&self, x0: &RobotState, goal: (f64, f64), rows: Vec<BarrierRow>) -> Result<NmpcSolution> {
        let p = self.cfg.nmpc;
        let prev = self.plan.as_ref().map(|s| s.to_trajectory(0.0));
        let reference = variation_reference(x0, prev.as_ref(), p.horizon);
        let problem = NlpProblem::new(*x0, goal, reference, rows, p)?;
        Ok(solve(&problem, self.plan.as_ref()))
    }

    fn commit(&mut self, solution: NmpcSolution, x0: &RobotState, now: f64) -> PlanOutcome {
        let (applied, used_fallback) = if solution.status == SolveStatus::Solved {
            self.buffer.record_success(&solution, now);
            self.plan = Some(solution.clone());
            (solution.inputs[0], false)
        } else {
            self.buffer.record_failure();
            self.plan = Some(self.fallback_plan(x0));
            (fallback_control(&self.buffer), true)
        };
        PlanOutcome {
            applied,
            solution,
            used_fallback,
            delta_t: self.buffer.delta_t,
            static_risks: 0,
            dynamic_risks: 0,
            cycle_time_s: 0.0,
        }
    }

    /// Rollout from `x0` of the remaining stored inputs, zero-padded.
    fn fallback_plan(&self, x0: &RobotState) -> NmpcSolution {
        let p = &self.cfg.nmpc;
        let inputs: Vec<[f64; 2]> = (0..p.horizon)
            .map(|k| {
                let u = fallback_control(&FallbackBuffer {
                    delta_t: self.buffer.delta_t + k,
                    ..self.buffer.clone()
                });
                [u.v, u.omega]
            })
            .collect();
        let z = Trajectory::rollout(x0.as_array(), inputs, p.dt);
        debug_assert_eq!(z.states.len(), p.horizon + 1);
        NmpcSolution {
            inputs: z.inputs.iter().map(|u| ControlInput::new(u[0], u[1])).collect(),
            states: z.states.iter().map(|s| RobotState::new(s[0], s[1], s[2])).collect(),
            cost: f64::NAN,
            status: SolveStatus::Failed,
            solve_time_s: 0.0,
            iterations: 0,
            kkt_residual: f64::NAN,
            max_violation: f64::NAN,
        }
    }
}

/// Open-loop rollout of an input sequence; used by tests and baselines.
pub fn rollout_states(x0: &RobotState, inputs: &[ControlInput], dt: f64) -> Vec<RobotState> {
    let mut s = x0.as_array();
    let mut out = vec![*x0];
    for u in inputs {
        s = step_raw(&s, &[u.v, u.omega], dt);
        out.push(RobotState::new(s[0], s[1], s[2]));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ftd_map::build_ftd;
    use crate::geometry::PointCloud;

    fn solution_with(inputs: Vec<ControlInput>) -> NmpcSolution {
        let states = rollout_states(&RobotState::default(), &inputs, 0.1);
        NmpcSolution {
            inputs,
            states,
            cost: 0.0,
            status: SolveStatus::Solved,
            solve_time_s: 0.0,
            iterations: 1,
            kkt_residual: 0.0,
            max_violation: 0.0,
        }
    }

    #[test]
    fn fallback_indexing() {
        let inputs: Vec<_> = (0..30).map(|k| ControlInput::new(0.01 * k as f64, 0.0)).collect();
        let mut buf = FallbackBuffer::default();
        assert_eq!(fallback_control(&buf), ControlInput::ZERO);
        buf.record_success(&solution_with(inputs.clone()), 1.0);
        assert_eq!(fallback_control(&buf), inputs[0]);
        buf.record_failure();
        buf.record_failure();
        assert_eq!(fallback_control(&buf), inputs[2]);
        buf.delta_t = 30;
        assert_eq!(fallback_control(&buf), ControlInput::ZERO);
    }

    #[test]
    fn first_call_on_empty_map_is_free_solve() {
        let map = build_ftd(&PointCloud::empty(0.0), &vec![PointCloud::empty(0.0); 30]);
        let mut planner = Planner::new(PlannerConfig::default()).unwrap();
        let x0 = RobotState::default();
        let out = planner.plan_step(&x0, (2.0, 0.0), &map, 0.0).unwrap();
        assert!(!out.used_fallback);
        assert_eq!(out.static_risks + out.dynamic_risks, 0);
        assert_eq!(out.applied, out.solution.inputs[0]);
        assert!(out.applied.v > 1.0);
    }

    #[test]
    fn forced_failure_uses_stored_sequence() {
        let map = build_ftd(&PointCloud::empty(0.0), &vec![PointCloud::empty(0.0); 30]);
        let mut planner = Planner::new(PlannerConfig::default()).unwrap();
        let x0 = RobotState::new(0.0, 0.0, 0.4);
        let first = planner.plan_step(&x0, (3.0, 2.0), &map, 0.0).unwrap();
        let stored = first.solution.inputs.clone();
        planner.cfg.nmpc.max_sqp_iters = 0;
        let x1 = first.solution.states[1];
        let second = planner.plan_step(&x1, (3.0, 2.0), &map, 0.1).unwrap();
        assert!(second.used_fallback);
        assert_eq!(second.delta_t, 1);
        assert_eq!(second.applied, stored[1]);
    }
}
