//! Deterministic lockstep simulation, metrics and comparison planners.

pub mod baselines;
pub mod metrics;
pub mod runner;
pub mod scenario;
pub mod trace;
pub mod world;

pub use baselines::{baseline_depth_cbf_qp, ellipse_rows, BaselineConfig};
pub use metrics::{compare, compute_metrics, Comparison, Metrics};
pub use runner::{run_scenario, run_scenario_detailed, CycleRecord, RunResult};
pub use scenario::{PlannerKind, ScenarioConfig, SuiteConfig};
pub use trace::{Outcome, SimTrace, TraceRow};
pub use world::{step_world, Pedestrian, StaticBody, WorldModel, NO_OBSTACLE_DISTANCE};
