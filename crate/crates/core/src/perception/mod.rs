//! Geometric perception: raycast sensing, voxel filtering, clustering and
//! static/dynamic classification, ending in an [`FtdMap`].

pub mod classify;
pub mod dbscan;
pub mod sensor;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::ftd_map::{build_ftd, crop_to_window, FtdMap};
use crate::geometry::{voxel_downsample, Aabb, Point3, PointCloud};
use crate::nmpc::{wrap_angle, RobotState};
use crate::tracking::{predict_obstacle_clouds, ObstacleTrack};

pub use classify::{Classification, ClassifierConfig, DynamicDetection, ObstacleTracker};
pub use dbscan::{dbscan, ClusterLabels, Label};
pub use sensor::{sense, RayCaster, SensorConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerceptionConfig {
    pub sensor: SensorConfig,
    pub voxel_resolution: f64,
    pub dbscan_eps: f64,
    pub dbscan_min_pts: usize,
    /// Half side of the square local map window, m.
    pub window_half_extent: f64,
    pub classifier: ClassifierConfig,
}

impl Default for PerceptionConfig {
    fn default() -> Self {
        Self {
            sensor: SensorConfig::default(),
            voxel_resolution: 0.1,
            dbscan_eps: 0.2,
            dbscan_min_pts: 4,
            window_half_extent: 2.5,
            classifier: ClassifierConfig::default(),
        }
    }
}

impl PerceptionConfig {
    pub fn validate(&self) -> Result<()> {
        self.sensor.validate()?;
        if !(self.voxel_resolution > 0.0) {
            return Err(invalid("perception.voxel_resolution", "must be positive"));
        }
        if !(self.dbscan_eps > 0.0) || self.dbscan_min_pts == 0 {
            return Err(invalid("perception.dbscan", "eps must be positive and min_pts >= 1"));
        }
        if !(self.window_half_extent > 0.0) {
            return Err(invalid("perception.window_half_extent", "must be positive"));
        }
        let c = &self.classifier;
        if !(c.v_dyn >= 0.0 && c.gate > 0.0) {
            return Err(invalid("perception.classifier", "need v_dyn >= 0 and gate > 0"));
        }
        if !(c.vote_fraction > 0.0 && c.vote_fraction <= 1.0) || c.vote_window == 0 {
            return Err(invalid(
                "perception.classifier",
                "vote_fraction in (0, 1] and vote_window >= 1",
            ));
        }
        Ok(())
    }
}

impl PerceptionConfig {
    /// Whether a voxel center lies within one voxel of the horizontal field
    /// of view boundary or of the range limit, as seen from `robot`.
    pub fn near_view_edge(&self, robot: &RobotState, p: &Point3) -> bool {
        let s = &self.sensor;
        let dx = p.x - robot.x;
        let dy = p.y - robot.y;
        let dz = p.z - s.mount_height;
        let planar = dx.hypot(dy);
        let range = (planar * planar + dz * dz).sqrt();
        if range >= s.max_range - self.voxel_resolution {
            return true;
        }
        let spacing = s.horizontal_fov / s.rays_horizontal.saturating_sub(1).max(1) as f64;
        let margin = 2.0 * spacing + (self.voxel_resolution / planar.max(1e-6)).min(1.0);
        let bearing = wrap_angle(dy.atan2(dx) - robot.theta).abs();
        bearing >= 0.5 * s.horizontal_fov - margin
    }
}

/// One perception cycle's products.
#[derive(Debug, Clone, Default)]
pub struct PerceptionFrame {
    pub map: FtdMap,
    /// Voxelized static points inside the local window.
    pub static_cloud: PointCloud,
    pub static_clusters: Vec<Aabb>,
    pub detections: Vec<DynamicDetection>,
    pub dynamic_tracks: Vec<ObstacleTrack>,
}

/// Stateful perception loop: holds the obstacle tracker between frames.
#[derive(Debug, Clone)]
pub struct Perception {
    pub cfg: PerceptionConfig,
    tracker: ObstacleTracker,
}

impl Perception {
    pub fn new(cfg: PerceptionConfig) -> Self {
        Self {
            tracker: ObstacleTracker::new(cfg.classifier),
            cfg,
        }
    }

    pub fn tracker(&self) -> &ObstacleTracker {
        &self.tracker
    }

    /// Voxelizes `raw`, clusters, classifies and builds the FTD map for a
    /// horizon of `horizon` steps of `step_dt` seconds.
    pub fn process(&mut self, raw: &PointCloud, robot: &RobotState, horizon: usize, step_dt: f64) -> PerceptionFrame {
        let time = raw.frame_time;
        let voxels = voxel_downsample(raw, self.cfg.voxel_resolution);
        let labels = dbscan(&voxels, self.cfg.dbscan_eps, self.cfg.dbscan_min_pts);
        let cut = |members: &[usize]| {
            members
                .iter()
                .any(|&i| self.cfg.near_view_edge(robot, &voxels.points[i]))
        };
        let cls = self.tracker.classify_with_cut(&voxels, &labels, time, cut);
        let static_cloud = crop_to_window(&cls.static_cloud, (robot.x, robot.y), self.cfg.window_half_extent);
        let dyn_clouds = predict_obstacle_clouds(&cls.dynamic_tracks, horizon, step_dt);
        let map = build_ftd(&static_cloud, &dyn_clouds);
        PerceptionFrame {
            map,
            static_cloud,
            static_clusters: cls.static_clusters,
            detections: cls.detections,
            dynamic_tracks: cls.dynamic_tracks,
        }
    }
}
