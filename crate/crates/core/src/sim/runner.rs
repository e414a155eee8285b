//! Lockstep loop: physics every tick, perception every 3, planning every 10.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::geometry::{Point3, PointCloud};
use crate::nmpc::{dynamics_step, ControlInput, NmpcSolution, Planner, RobotState, SolveStatus};
use crate::perception::{sense, Perception, PerceptionFrame};

use super::baselines::{baseline_depth_cbf_qp, ellipse_rows};
use super::metrics::{compute_metrics, Metrics};
use super::scenario::{PlannerKind, ScenarioConfig};
use super::trace::{Outcome, SimTrace, TraceRow};
use super::world::{step_world, WorldModel};

pub const PHYSICS_DT: f64 = 0.01;
pub const PERCEPTION_EVERY: usize = 3;
pub const PLANNING_EVERY: usize = 10;

/// One planning cycle, kept for post-run checks.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleRecord {
    pub tick: usize,
    pub time: f64,
    pub status: SolveStatus,
    pub used_fallback: bool,
    pub applied: ControlInput,
    /// NMPC output; `None` for the single-step baseline.
    pub solution: Option<NmpcSolution>,
    /// Historical static risk points constraining this solve.
    pub static_points: Vec<Point3>,
    pub cycle_time_s: f64,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub trace: SimTrace,
    pub metrics: Metrics,
    pub cycles: Vec<CycleRecord>,
    pub world: WorldModel,
}

impl RunResult {
    pub fn cycle_times(&self) -> Vec<f64> {
        self.cycles.iter().map(|c| c.cycle_time_s).collect()
    }
}

enum Controller {
    Main(Box<Planner>),
    Ellipsoid(Box<Planner>),
    DepthQp,
}

struct CycleOut {
    applied: ControlInput,
    status: SolveStatus,
    used_fallback: bool,
    solution: Option<NmpcSolution>,
    static_points: Vec<Point3>,
    static_risks: usize,
    dynamic_risks: usize,
    cycle_time_s: f64,
}

impl Controller {
    fn new(cfg: &ScenarioConfig) -> Result<Self> {
        Ok(match cfg.planner {
            PlannerKind::Ours => Controller::Main(Box::new(Planner::new(cfg.planner_config())?)),
            PlannerKind::DcbfEllipsoid => Controller::Ellipsoid(Box::new(Planner::new(cfg.planner_config())?)),
            PlannerKind::DepthCbfQp => Controller::DepthQp,
        })
    }

    fn cycle(&mut self, cfg: &ScenarioConfig, x: &RobotState, frame: &PerceptionFrame, now: f64) -> Result<CycleOut> {
        let goal = cfg.goal();
        match self {
            Controller::Main(planner) => {
                let out = planner.plan_step(x, goal, &frame.map, now)?;
                Ok(CycleOut {
                    applied: out.applied,
                    status: out.solution.status,
                    used_fallback: out.used_fallback,
                    static_points: planner.history.points().iter().map(|r| r.position).collect(),
                    solution: Some(out.solution),
                    static_risks: out.static_risks,
                    dynamic_risks: out.dynamic_risks,
                    cycle_time_s: out.cycle_time_s,
                })
            }
            Controller::Ellipsoid(planner) => {
                let start = std::time::Instant::now();
                let rows = ellipse_rows(x, &frame.static_clusters, &frame.detections, &cfg.nmpc, &cfg.baseline);
                let out = planner.solve_rows(x, goal, rows, now)?;
                Ok(CycleOut {
                    applied: out.applied,
                    status: out.solution.status,
                    used_fallback: out.used_fallback,
                    static_points: Vec::new(),
                    solution: Some(out.solution),
                    static_risks: 0,
                    dynamic_risks: 0,
                    cycle_time_s: start.elapsed().as_secs_f64(),
                })
            }
            Controller::DepthQp => {
                let start = std::time::Instant::now();
                let band = cfg.planner_config().band()?;
                let out = baseline_depth_cbf_qp(x, &frame.map, goal, &cfg.nmpc, &cfg.baseline, &band);
                Ok(CycleOut {
                    applied: out.input,
                    status: if out.feasible {
                        SolveStatus::Solved
                    } else {
                        SolveStatus::Failed
                    },
                    used_fallback: false,
                    solution: None,
                    static_points: Vec::new(),
                    static_risks: usize::from(out.constrained),
                    dynamic_risks: 0,
                    cycle_time_s: start.elapsed().as_secs_f64(),
                })
            }
        }
    }
}

fn add_jitter(cloud: &mut PointCloud, noise: &Normal<f64>, rng: &mut ChaCha8Rng) {
    for p in &mut cloud.points {
        p.x += noise.sample(rng);
        p.y += noise.sample(rng);
        p.z += noise.sample(rng);
    }
}

/// Runs a scenario to completion.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<(SimTrace, Metrics)> {
    let r = run_scenario_detailed(cfg)?;
    Ok((r.trace, r.metrics))
}

/// Runs a scenario and keeps every planning cycle.
pub fn run_scenario_detailed(cfg: &ScenarioConfig) -> Result<RunResult> {
    cfg.validate()?;
    let mut world = cfg.build_world();
    let mut perception = Perception::new(cfg.perception);
    let mut controller = Controller::new(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = (cfg.jitter_sigma > 0.0).then(|| Normal::new(0.0, cfg.jitter_sigma).expect("validated sigma"));

    let goal = cfg.goal();
    let radius = cfg.robot.radius;
    let height = cfg.robot.height;
    let horizon = cfg.nmpc.horizon;

    let mut x = cfg.start_state();
    let mut u = ControlInput::ZERO;
    let mut frame = PerceptionFrame::default();
    let mut status = SolveStatus::Solved;
    let (mut static_risks, mut dynamic_risks) = (0, 0);
    let mut rows = Vec::new();
    let mut cycles = Vec::new();

    for tick in 0.. {
        let now = tick as f64 * PHYSICS_DT;
        if tick % PERCEPTION_EVERY == 0 {
            let mut raw = sense(&world, &x, &cfg.perception.sensor, now);
            if let Some(n) = &noise {
                add_jitter(&mut raw, n, &mut rng);
            }
            frame = perception.process(&raw, &x, horizon, cfg.nmpc.dt);
        }
        if tick % PLANNING_EVERY == 0 {
            let out = controller.cycle(cfg, &x, &frame, now)?;
            u = out.applied;
            status = out.status;
            static_risks = out.static_risks;
            dynamic_risks = out.dynamic_risks;
            cycles.push(CycleRecord {
                tick,
                time: now,
                status: out.status,
                used_fallback: out.used_fallback,
                applied: out.applied,
                solution: out.solution,
                static_points: out.static_points,
                cycle_time_s: out.cycle_time_s,
            });
        }

        let clearance = world.clearance(x.x, x.y, height);
        let outcome = if clearance < radius {
            Outcome::Collision
        } else if (goal.0 - x.x).hypot(goal.1 - x.y) <= cfg.robot.goal_tolerance {
            Outcome::Success
        } else if now >= cfg.timeout {
            Outcome::Timeout
        } else {
            Outcome::Running
        };
        rows.push(TraceRow {
            time: now,
            x: x.x,
            y: x.y,
            theta: x.theta,
            v: u.v,
            omega: u.omega,
            solver_status: status.as_str().to_string(),
            min_distance: clearance,
            static_risks,
            dynamic_risks,
            outcome,
        });
        if outcome != Outcome::Running {
            break;
        }

        x = dynamics_step(&x, &u, PHYSICS_DT);
        step_world(&mut world, PHYSICS_DT);
    }

    let trace = SimTrace { rows };
    let times: Vec<f64> = cycles.iter().map(|c| c.cycle_time_s).collect();
    let metrics = compute_metrics(&trace).with_solve_times(&times);
    Ok(RunResult {
        trace,
        metrics,
        cycles,
        world,
    })
}
