//! Risk-point identification against the previous NMPC prediction.
//!
//! Static risk points come from a forward-inverse scan of the previous
//! prediction over the static map and are retained in a bounded historical
//! set. Dynamic risk points are picked per horizon step from the predicted
//! dynamic clouds.

use serde::{Deserialize, Serialize};

use crate::ftd_map::{FtdMap, HeightBand};
use crate::geometry::Point3;
use crate::nmpc::RobotState;

/// States `x_{t-1+k|t-1}`, k = 0..=N, from the previous solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedTrajectory {
    pub states: Vec<RobotState>,
    pub solve_time: f64,
}

impl PredictedTrajectory {
    /// Cold start: `N + 1` copies of the current state.
    pub fn stationary(x0: RobotState, horizon: usize, time: f64) -> Self {
        Self {
            states: vec![x0; horizon + 1],
            solve_time: time,
        }
    }

    pub fn horizon(&self) -> usize {
        self.states.len().saturating_sub(1)
    }

    /// Drops the first state and repeats the last one.
    pub fn shifted(&self) -> Self {
        let mut states: Vec<RobotState> = self.states.iter().skip(1).copied().collect();
        if let Some(last) = states.last().copied().or(self.states.last().copied()) {
            states.push(last);
        }
        Self {
            states,
            solve_time: self.solve_time,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RiskKind {
    Static { born_time: f64 },
    Dynamic { step: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskPoint {
    pub position: Point3,
    pub kind: RiskKind,
}

impl RiskPoint {
    pub fn step(&self) -> Option<usize> {
        match self.kind {
            RiskKind::Dynamic { step } => Some(step),
            RiskKind::Static { .. } => None,
        }
    }
}

/// Forward-inverse collision detection on the static map.
///
/// The forward pass reports the colliding point at the first colliding step
/// scanning k = 0..N-1; the inverse pass scans k = N-1..0. When both passes
/// land on the same step a single point is returned.
pub fn identify_static_risk(
    map: &FtdMap,
    prev: &PredictedTrajectory,
    delta_s: f64,
    band: &HeightBand,
    now: f64,
) -> Vec<RiskPoint> {
    assert!(delta_s > 0.0);
    let n = prev.horizon();
    let hit_at = |k: usize| {
        let s = &prev.states[k];
        map.collides_static((s.x, s.y), band, delta_s)
    };
    let forward = (0..n).find_map(|k| hit_at(k).map(|h| (k, h)));
    let Some((kf, hf)) = forward else {
        return Vec::new();
    };
    let (ki, hi) = (0..n)
        .rev()
        .find_map(|k| hit_at(k).map(|h| (k, h)))
        .expect("forward hit implies an inverse hit");
    let mk = |p: Point3| RiskPoint {
        position: p,
        kind: RiskKind::Static { born_time: now },
    };
    if kf == ki {
        vec![mk(hf.point)]
    } else {
        vec![mk(hf.point), mk(hi.point)]
    }
}

/// Steps whose previous-prediction state violates the dynamic clearance
/// `delta_d` against `P_dyn,k` each contribute their nearest dynamic point.
pub fn identify_dynamic_risks(
    map: &FtdMap,
    prev: &PredictedTrajectory,
    delta_d: f64,
    band: &HeightBand,
) -> Vec<RiskPoint> {
    assert!(delta_d > 0.0);
    let n = prev.horizon().min(map.horizon());
    (0..n)
        .filter_map(|k| {
            let s = &prev.states[k];
            let h = map.nearest_dynamic(k, (s.x, s.y), band).ok().flatten()?;
            (h.dist_sq < delta_d * delta_d).then_some(RiskPoint {
                position: h.point,
                kind: RiskKind::Dynamic { step: k },
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HistoryConfig {
    pub capacity: usize,
    pub merge_radius: f64,
    /// Members farther than this from the robot are dropped, m.
    pub max_range: f64,
    /// Members older than this are dropped, s.
    pub max_age: f64,
}

impl Default for HistoryConfig {
    fn default() -> Self {
        Self {
            capacity: 20,
            merge_radius: 0.05,
            max_range: 5.0,
            max_age: 10.0,
        }
    }
}

/// Retained static risk points, oldest first.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HistoricalRiskSet {
    pub cfg: HistoryConfig,
    points: Vec<RiskPoint>,
}

impl HistoricalRiskSet {
    pub fn new(cfg: HistoryConfig) -> Self {
        Self {
            cfg,
            points: Vec::new(),
        }
    }

    pub fn points(&self) -> &[RiskPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Inserts new static points (skipping near-duplicates) then drops members
    /// that are out of range, too old, or beyond capacity (oldest first).
    /// Returns how many points were inserted.
    pub fn update(&mut self, new_points: &[RiskPoint], robot: (f64, f64), now: f64) -> usize {
        let mut inserted = 0;
        let r2 = self.cfg.merge_radius * self.cfg.merge_radius;
        for p in new_points {
            if !matches!(p.kind, RiskKind::Static { .. }) {
                continue;
            }
            if self.points.iter().all(|q| q.position.dist_sq(&p.position) >= r2) {
                self.points.push(*p);
                inserted += 1;
            }
        }
        let robot = Point3::new(robot.0, robot.1, 0.0);
        let range2 = self.cfg.max_range * self.cfg.max_range;
        let max_age = self.cfg.max_age;
        self.points.retain(|q| {
            let born = match q.kind {
                RiskKind::Static { born_time } => born_time,
                RiskKind::Dynamic { .. } => now,
            };
            q.position.planar_dist_sq(&robot) <= range2 && now - born <= max_age
        });
        if self.points.len() > self.cfg.capacity {
            let excess = self.points.len() - self.cfg.capacity;
            self.points.drain(..excess);
        }
        inserted
    }
}
