//! Deterministic raycast depth sensor.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geometry::{Point3, PointCloud};
use crate::nmpc::RobotState;

/// Anything a ray can hit. Returns the distance along the unit direction to
/// the first surface in `[0, max_range]`.
pub trait RayCaster {
    fn cast(&self, origin: Point3, dir: Point3, max_range: f64) -> Option<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorConfig {
    pub horizontal_fov: f64,
    pub vertical_fov: f64,
    pub max_range: f64,
    pub rays_horizontal: usize,
    pub rays_vertical: usize,
    pub mount_height: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        // Wide-angle stereo camera class: 110° × 70°.
        Self {
            horizontal_fov: 110f64.to_radians(),
            vertical_fov: 70f64.to_radians(),
            max_range: 5.0,
            rays_horizontal: 111,
            rays_vertical: 36,
            mount_height: 0.3,
        }
    }
}

impl SensorConfig {
    pub fn validate(&self) -> Result<()> {
        let tau = std::f64::consts::TAU;
        if !(self.horizontal_fov > 0.0 && self.horizontal_fov < tau) {
            return Err(invalid("sensor.horizontal_fov", "must lie in (0, 2π)"));
        }
        if !(self.vertical_fov > 0.0 && self.vertical_fov < tau) {
            return Err(invalid("sensor.vertical_fov", "must lie in (0, 2π)"));
        }
        if !(self.max_range > 0.0) {
            return Err(invalid("sensor.max_range", "must be positive"));
        }
        if self.rays_horizontal == 0 || self.rays_vertical == 0 {
            return Err(invalid("sensor.rays", "need at least one ray per axis"));
        }
        Ok(())
    }

    fn angles(fov: f64, count: usize) -> impl Iterator<Item = f64> {
        (0..count).map(move |i| {
            if count == 1 {
                0.0
            } else {
                -0.5 * fov + fov * i as f64 / (count - 1) as f64
            }
        })
    }
}

/// Casts the ray fan from the robot pose and returns first hits in the world frame.
pub fn sense(world: &dyn RayCaster, pose: &RobotState, cfg: &SensorConfig, time: f64) -> PointCloud {
    let origin = Point3::new(pose.x, pose.y, cfg.mount_height);
    let mut points = Vec::new();
    for el in SensorConfig::angles(cfg.vertical_fov, cfg.rays_vertical) {
        let (sel, cel) = el.sin_cos();
        for az in SensorConfig::angles(cfg.horizontal_fov, cfg.rays_horizontal) {
            let (s, c) = (pose.theta + az).sin_cos();
            let dir = Point3::new(cel * c, cel * s, sel);
            if let Some(t) = world.cast(origin, dir, cfg.max_range) {
                if t <= cfg.max_range {
                    points.push(origin + dir * t);
                }
            }
        }
    }
    PointCloud::new(points, time)
}
