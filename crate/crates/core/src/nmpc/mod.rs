//! Discrete-CBF NMPC over the differential-drive model.

pub mod barrier;
pub mod model;
pub mod params;
pub mod planner;
pub mod problem;
pub mod qp;
pub mod sqp;

pub use barrier::{barrier_value, Barrier, BarrierRow, RowKind};
pub use model::{dynamics_step, step_jacobians, step_raw, wrap_angle, ControlInput, RobotState};
pub use params::NmpcParams;
pub use planner::{fallback_control, rollout_states, FallbackBuffer, PlanOutcome, Planner, PlannerConfig};
pub use problem::{assemble_problem, cbf_rows, ConstraintCounts, NlpProblem, Trajectory};
pub use sqp::{solve, solve_from, NmpcSolution, SolveStatus};
