//! Scenario files (TOML): world bodies, pedestrians, robot, planner choice.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Aabb, Point3};
use crate::nmpc::{NmpcParams, PlannerConfig, RobotState};
use crate::perception::PerceptionConfig;
use crate::risk::HistoryConfig;

use super::baselines::BaselineConfig;
use super::world::{Pedestrian, StaticBody, WorldModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub enum PlannerKind {
    #[default]
    #[serde(rename = "ours")]
    Ours,
    #[serde(rename = "dcbf-ellipsoid")]
    DcbfEllipsoid,
    #[serde(rename = "depth-cbf-qp")]
    DepthCbfQp,
}

impl PlannerKind {
    pub const ALL: [PlannerKind; 3] = [PlannerKind::Ours, PlannerKind::DcbfEllipsoid, PlannerKind::DepthCbfQp];

    pub fn id(&self) -> &'static str {
        match self {
            PlannerKind::Ours => "ours",
            PlannerKind::DcbfEllipsoid => "dcbf-ellipsoid",
            PlannerKind::DepthCbfQp => "depth-cbf-qp",
        }
    }
}

impl fmt::Display for PlannerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for PlannerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PlannerKind::ALL
            .into_iter()
            .find(|k| k.id() == s)
            .ok_or_else(|| Error::Config {
                field: "planner".into(),
                reason: format!(
                    "unknown planner '{s}', expected one of: {}",
                    PlannerKind::ALL.map(|k| k.id()).join(", ")
                ),
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotConfig {
    /// `[x, y, θ]`.
    pub start: [f64; 3],
    pub goal: [f64; 2],
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default = "default_height")]
    pub height: f64,
    #[serde(default = "default_goal_tolerance")]
    pub goal_tolerance: f64,
}

fn default_radius() -> f64 {
    0.25
}
fn default_height() -> f64 {
    0.45
}
fn default_goal_tolerance() -> f64 {
    0.2
}
fn default_timeout() -> f64 {
    60.0
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxConfig {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

/// Four legs under a slab.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableConfig {
    pub center: [f64; 2],
    /// Footprint `[size_x, size_y]`.
    pub size: [f64; 2],
    pub height: f64,
    #[serde(default = "default_slab")]
    pub top_thickness: f64,
    #[serde(default = "default_leg")]
    pub leg_width: f64,
}

fn default_slab() -> f64 {
    0.05
}
fn default_leg() -> f64 {
    0.06
}

/// Two posts carrying an elevated board, hollow underneath.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlackboardConfig {
    pub center: [f64; 2],
    /// Length of the board.
    pub width: f64,
    /// Board runs along y when true, along x otherwise.
    #[serde(default = "default_true")]
    pub along_y: bool,
    #[serde(default = "default_board_bottom")]
    pub board_bottom: f64,
    #[serde(default = "default_board_top")]
    pub board_top: f64,
    #[serde(default = "default_slab")]
    pub thickness: f64,
    #[serde(default = "default_post")]
    pub post_width: f64,
}

fn default_board_bottom() -> f64 {
    0.7
}
fn default_board_top() -> f64 {
    1.8
}
fn default_post() -> f64 {
    0.08
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PedestrianConfig {
    pub waypoints: Vec<[f64; 2]>,
    #[serde(default = "default_ped_speed")]
    pub speed: f64,
    #[serde(default = "default_ped_radius")]
    pub radius: f64,
    #[serde(default = "default_ped_height")]
    pub height: f64,
    #[serde(default)]
    pub looped: bool,
}

fn default_ped_speed() -> f64 {
    1.0
}
fn default_ped_radius() -> f64 {
    0.25
}
fn default_ped_height() -> f64 {
    1.7
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_timeout")]
    pub timeout: f64,
    #[serde(default)]
    pub planner: PlannerKind,
    pub robot: RobotConfig,
    #[serde(default)]
    pub boxes: Vec<BoxConfig>,
    #[serde(default)]
    pub tables: Vec<TableConfig>,
    #[serde(default)]
    pub blackboards: Vec<BlackboardConfig>,
    #[serde(default)]
    pub pedestrians: Vec<PedestrianConfig>,
    /// Standard deviation of Gaussian jitter added to sensed points, m.
    #[serde(default)]
    pub jitter_sigma: f64,
    #[serde(default)]
    pub perception: PerceptionConfig,
    #[serde(default)]
    pub nmpc: NmpcParams,
    #[serde(default)]
    pub history: HistoryConfig,
    #[serde(default)]
    pub baseline: BaselineConfig,
}

fn config_err(field: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::Config {
        field: field.into(),
        reason: reason.into(),
    }
}

fn finite(field: &str, vals: &[f64]) -> Result<()> {
    if vals.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(config_err(field, "values must be finite"))
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(path.display().to_string(), e.to_string()))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.robot;
        finite("robot.start", &r.start)?;
        finite("robot.goal", &r.goal)?;
        if !(r.radius > 0.0) {
            return Err(config_err("robot.radius", "must be positive"));
        }
        if !(r.height > 0.05) {
            return Err(config_err("robot.height", "must exceed the 0.05 m band floor"));
        }
        if !(r.goal_tolerance > 0.0) {
            return Err(config_err("robot.goal_tolerance", "must be positive"));
        }
        if !(self.timeout > 0.0 && self.timeout.is_finite()) {
            return Err(config_err("timeout", "must be positive and finite"));
        }
        if !(self.jitter_sigma >= 0.0 && self.jitter_sigma.is_finite()) {
            return Err(config_err("jitter_sigma", "must be non-negative"));
        }
        for (i, b) in self.boxes.iter().enumerate() {
            finite(&format!("boxes[{i}]"), &[b.min, b.max].concat())?;
            if (0..3).any(|a| b.min[a] > b.max[a]) {
                return Err(config_err(format!("boxes[{i}]"), "min must not exceed max"));
            }
        }
        for (i, t) in self.tables.iter().enumerate() {
            let f = format!("tables[{i}]");
            finite(
                &f,
                &[
                    t.center[0],
                    t.center[1],
                    t.size[0],
                    t.size[1],
                    t.height,
                    t.top_thickness,
                    t.leg_width,
                ],
            )?;
            if !(t.size[0] > 2.0 * t.leg_width && t.size[1] > 2.0 * t.leg_width && t.height > t.top_thickness) {
                return Err(config_err(f, "size must exceed two legs and height the slab"));
            }
            if !(t.leg_width > 0.0 && t.top_thickness > 0.0) {
                return Err(config_err(f, "leg_width and top_thickness must be positive"));
            }
        }
        for (i, b) in self.blackboards.iter().enumerate() {
            let f = format!("blackboards[{i}]");
            finite(
                &f,
                &[
                    b.center[0],
                    b.center[1],
                    b.width,
                    b.board_bottom,
                    b.board_top,
                    b.thickness,
                    b.post_width,
                ],
            )?;
            if !(b.width > 2.0 * b.post_width && b.post_width > 0.0 && b.thickness > 0.0) {
                return Err(config_err(f, "width must exceed two posts; sizes positive"));
            }
            if !(b.board_bottom > 0.0 && b.board_top > b.board_bottom) {
                return Err(config_err(f, "need 0 < board_bottom < board_top"));
            }
        }
        for (i, p) in self.pedestrians.iter().enumerate() {
            let f = format!("pedestrians[{i}]");
            if p.waypoints.is_empty() {
                return Err(config_err(f, "needs at least one waypoint"));
            }
            finite(&f, &p.waypoints.concat())?;
            if !(p.speed >= 0.0 && p.speed.is_finite()) {
                return Err(config_err(format!("{f}.speed"), "must be non-negative"));
            }
            if !(p.radius > 0.0 && p.height > 0.0) {
                return Err(config_err(f, "radius and height must be positive"));
            }
        }
        self.perception.validate()?;
        self.planner_config().validate()?;
        if self.nmpc.delta_s <= r.radius {
            return Err(config_err("nmpc.delta_s", "must exceed the robot radius"));
        }
        self.baseline.validate()?;
        Ok(())
    }

    pub fn start_state(&self) -> RobotState {
        let s = self.robot.start;
        RobotState::new(s[0], s[1], s[2])
    }

    pub fn goal(&self) -> (f64, f64) {
        (self.robot.goal[0], self.robot.goal[1])
    }

    pub fn planner_config(&self) -> PlannerConfig {
        PlannerConfig {
            nmpc: self.nmpc,
            history: self.history,
            band_min: 0.05,
            band_max: self.robot.height,
        }
    }

    pub fn build_world(&self) -> WorldModel {
        let mut bodies = Vec::new();
        for (i, b) in self.boxes.iter().enumerate() {
            bodies.push(StaticBody {
                name: format!("box{i}"),
                parts: vec![Aabb::new(
                    Point3::new(b.min[0], b.min[1], b.min[2]),
                    Point3::new(b.max[0], b.max[1], b.max[2]),
                )],
            });
        }
        for (i, t) in self.tables.iter().enumerate() {
            bodies.push(StaticBody {
                name: format!("table{i}"),
                parts: table_parts(t),
            });
        }
        for (i, b) in self.blackboards.iter().enumerate() {
            bodies.push(StaticBody {
                name: format!("blackboard{i}"),
                parts: blackboard_parts(b),
            });
        }
        let pedestrians = self
            .pedestrians
            .iter()
            .map(|p| Pedestrian::new(p.radius, p.height, p.speed, p.waypoints.clone(), p.looped))
            .collect();
        let mut world = WorldModel {
            bodies,
            pedestrians,
            bounds: [0.0; 4],
        };
        world.bounds = self.arena_bounds(&world);
        world
    }

    fn arena_bounds(&self, world: &WorldModel) -> [f64; 4] {
        let mut xs = vec![self.robot.start[0], self.robot.goal[0]];
        let mut ys = vec![self.robot.start[1], self.robot.goal[1]];
        for b in world.boxes() {
            xs.extend([b.min.x, b.max.x]);
            ys.extend([b.min.y, b.max.y]);
        }
        for p in &self.pedestrians {
            for w in &p.waypoints {
                xs.push(w[0]);
                ys.push(w[1]);
            }
        }
        let lo = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min) - 1.0;
        let hi = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 1.0;
        [lo(&xs), hi(&xs), lo(&ys), hi(&ys)]
    }
}

fn table_parts(t: &TableConfig) -> Vec<Aabb> {
    let (hx, hy) = (0.5 * t.size[0], 0.5 * t.size[1]);
    let (cx, cy) = (t.center[0], t.center[1]);
    let leg_top = t.height - t.top_thickness;
    let mut parts = vec![Aabb::new(
        Point3::new(cx - hx, cy - hy, leg_top),
        Point3::new(cx + hx, cy + hy, t.height),
    )];
    for (sx, sy) in [(-1.0, -1.0), (-1.0, 1.0), (1.0, -1.0), (1.0, 1.0)] {
        let x0 = if sx < 0.0 { cx - hx } else { cx + hx - t.leg_width };
        let y0 = if sy < 0.0 { cy - hy } else { cy + hy - t.leg_width };
        parts.push(Aabb::new(
            Point3::new(x0, y0, 0.0),
            Point3::new(x0 + t.leg_width, y0 + t.leg_width, leg_top),
        ));
    }
    parts
}

fn blackboard_parts(b: &BlackboardConfig) -> Vec<Aabb> {
    let half = 0.5 * b.width;
    let (t, pw) = (0.5 * b.thickness, b.post_width);
    // Work in (along, across) coordinates, then map to (x, y).
    let make = |a0: f64, a1: f64, c0: f64, c1: f64, z0: f64, z1: f64| {
        if b.along_y {
            Aabb::new(
                Point3::new(b.center[0] + c0, b.center[1] + a0, z0),
                Point3::new(b.center[0] + c1, b.center[1] + a1, z1),
            )
        } else {
            Aabb::new(
                Point3::new(b.center[0] + a0, b.center[1] + c0, z0),
                Point3::new(b.center[0] + a1, b.center[1] + c1, z1),
            )
        }
    };
    let post_half = 0.5 * pw;
    vec![
        make(-half, half, -t, t, b.board_bottom, b.board_top),
        make(-half, -half + pw, -post_half, post_half, 0.0, b.board_top),
        make(half - pw, half, -post_half, post_half, 0.0, b.board_top),
    ]
}

/// A suite file: scenario paths (relative to the suite file) × planners.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    pub scenarios: Vec<String>,
    #[serde(default = "all_planners")]
    pub planners: Vec<PlannerKind>,
}

fn all_planners() -> Vec<PlannerKind> {
    PlannerKind::ALL.to_vec()
}

impl SuiteConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(path.display().to_string(), e.to_string()))?;
        let cfg: SuiteConfig = toml::from_str(&text)?;
        if cfg.scenarios.is_empty() {
            return Err(config_err("scenarios", "suite lists no scenarios"));
        }
        if cfg.planners.is_empty() {
            return Err(config_err("planners", "suite lists no planners"));
        }
        Ok(cfg)
    }

    /// Loads every scenario, resolving paths against `base`.
    pub fn scenarios(&self, base: &Path) -> Result<Vec<(String, ScenarioConfig)>> {
        self.scenarios
            .iter()
            .map(|rel| {
                let p = base.join(rel);
                let cfg = ScenarioConfig::load(&p).map_err(|e| config_err(p.display().to_string(), e.to_string()))?;
                Ok((rel.clone(), cfg))
            })
            .collect()
    }
}
