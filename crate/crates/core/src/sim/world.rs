//! Ground-truth world: static boxes and waypoint-following pedestrians.

use serde::{Deserialize, Serialize};

use crate::geometry::{Aabb, Point3};
use crate::perception::RayCaster;

/// Reported clearance when nothing in the world can be hit.
pub const NO_OBSTACLE_DISTANCE: f64 = 1.0e3;

/// Static body made of axis-aligned boxes (a table is legs plus a slab).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticBody {
    pub name: String,
    pub parts: Vec<Aabb>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pedestrian {
    pub radius: f64,
    pub height: f64,
    pub speed: f64,
    pub waypoints: Vec<[f64; 2]>,
    pub looped: bool,
    /// Current position and the index of the waypoint being approached.
    pub position: [f64; 2],
    pub target: usize,
}

impl Pedestrian {
    pub fn new(radius: f64, height: f64, speed: f64, waypoints: Vec<[f64; 2]>, looped: bool) -> Self {
        assert!(!waypoints.is_empty());
        Self {
            radius,
            height,
            speed,
            position: waypoints[0],
            target: usize::from(waypoints.len() > 1),
            waypoints,
            looped,
        }
    }

    pub fn is_stopped(&self) -> bool {
        self.target >= self.waypoints.len()
    }

    /// Advances `speed · dt` of arc length along the polyline.
    pub fn advance(&mut self, dt: f64) {
        let mut remaining = self.speed * dt;
        let n = self.waypoints.len();
        let mut guard = 0;
        while remaining > 0.0 && !self.is_stopped() && n > 1 {
            let goal = self.waypoints[self.target];
            let dx = goal[0] - self.position[0];
            let dy = goal[1] - self.position[1];
            let d = dx.hypot(dy);
            if remaining < d {
                self.position[0] += dx / d * remaining;
                self.position[1] += dy / d * remaining;
                return;
            }
            self.position = goal;
            remaining -= d;
            self.target += 1;
            if self.target == n && self.looped {
                self.target = 0;
            }
            guard += 1;
            if guard > 4 * n {
                // Degenerate loop of coincident waypoints.
                return;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct WorldModel {
    pub bodies: Vec<StaticBody>,
    pub pedestrians: Vec<Pedestrian>,
    /// `[x_min, x_max, y_min, y_max]` of the arena, informational.
    pub bounds: [f64; 4],
}

/// Advances every pedestrian by `dt`.
pub fn step_world(world: &mut WorldModel, dt: f64) {
    assert!(dt > 0.0);
    for p in &mut world.pedestrians {
        p.advance(dt);
    }
}

impl WorldModel {
    pub fn boxes(&self) -> impl Iterator<Item = &Aabb> {
        self.bodies.iter().flat_map(|b| b.parts.iter())
    }

    /// Planar distance from `(x, y)` to the nearest obstacle surface that
    /// reaches below `height`.
    pub fn clearance(&self, x: f64, y: f64, height: f64) -> f64 {
        let boxes = self
            .boxes()
            .filter(|b| b.min.z < height)
            .map(|b| b.planar_distance(x, y));
        let peds = self
            .pedestrians
            .iter()
            .map(|p| ((x - p.position[0]).hypot(y - p.position[1]) - p.radius).max(0.0));
        boxes.chain(peds).fold(NO_OBSTACLE_DISTANCE, f64::min)
    }
}

fn ray_box(o: Point3, d: Point3, b: &Aabb) -> Option<f64> {
    let mut t0 = 0.0f64;
    let mut t1 = f64::INFINITY;
    for axis in 0..3 {
        let (oa, da) = (o.coord(axis), d.coord(axis));
        let (lo, hi) = (b.min.coord(axis), b.max.coord(axis));
        if da.abs() < 1e-15 {
            if oa < lo || oa > hi {
                return None;
            }
            continue;
        }
        let (mut ta, mut tb) = ((lo - oa) / da, (hi - oa) / da);
        if ta > tb {
            std::mem::swap(&mut ta, &mut tb);
        }
        t0 = t0.max(ta);
        t1 = t1.min(tb);
        if t0 > t1 {
            return None;
        }
    }
    Some(t0)
}

fn ray_cylinder(o: Point3, d: Point3, p: &Pedestrian) -> Option<f64> {
    let (cx, cy) = (p.position[0], p.position[1]);
    let mut best: Option<f64> = None;
    let mut keep = |t: f64| {
        if t >= 0.0 && best.is_none_or(|b| t < b) {
            best = Some(t);
        }
    };
    let (ox, oy) = (o.x - cx, o.y - cy);
    let a = d.x * d.x + d.y * d.y;
    if a > 1e-15 {
        let b = 2.0 * (ox * d.x + oy * d.y);
        let c = ox * ox + oy * oy - p.radius * p.radius;
        let disc = b * b - 4.0 * a * c;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            for t in [(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)] {
                let z = o.z + t * d.z;
                if (0.0..=p.height).contains(&z) {
                    keep(t);
                }
            }
        }
    }
    if d.z.abs() > 1e-15 {
        let t = (p.height - o.z) / d.z;
        let (x, y) = (ox + t * d.x, oy + t * d.y);
        if x * x + y * y <= p.radius * p.radius {
            keep(t);
        }
    }
    best
}

impl RayCaster for WorldModel {
    fn cast(&self, origin: Point3, dir: Point3, max_range: f64) -> Option<f64> {
        let boxes = self.boxes().filter_map(|b| ray_box(origin, dir, b));
        let peds = self.pedestrians.iter().filter_map(|p| ray_cylinder(origin, dir, p));
        boxes.chain(peds).filter(|t| *t <= max_range).min_by(f64::total_cmp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_box(x: f64, y: f64) -> StaticBody {
        StaticBody {
            name: "box".into(),
            parts: vec![Aabb::new(Point3::new(x, y, 0.0), Point3::new(x + 1.0, y + 1.0, 1.0))],
        }
    }

    #[test]
    fn pedestrian_arc_length_motion() {
        let mut p = Pedestrian::new(0.3, 1.7, 1.0, vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]], false);
        p.advance(0.1);
        assert!((p.position[0] - 0.1).abs() < 1e-12 && p.position[1] == 0.0);
        p.advance(1.0);
        assert!((p.position[0] - 1.0).abs() < 1e-12 && (p.position[1] - 0.1).abs() < 1e-12);
        p.advance(5.0);
        assert_eq!(p.position, [1.0, 1.0]);
        assert!(p.is_stopped());
    }

    #[test]
    fn looped_pedestrian_returns_to_start() {
        let mut p = Pedestrian::new(0.3, 1.7, 1.0, vec![[0.0, 0.0], [2.0, 0.0]], true);
        p.advance(3.0);
        assert!((p.position[0] - 1.0).abs() < 1e-12);
        assert!(!p.is_stopped());
    }

    #[test]
    fn zero_speed_leaves_world_unchanged() {
        let mut w = WorldModel {
            pedestrians: vec![Pedestrian::new(0.3, 1.7, 0.0, vec![[0.0, 0.0], [2.0, 0.0]], true)],
            ..Default::default()
        };
        let before = w.clone();
        step_world(&mut w, 0.1);
        assert_eq!(w, before);
    }

    #[test]
    fn clearance_to_box_face() {
        let w = WorldModel {
            bodies: vec![unit_box(1.0, -0.5)],
            ..Default::default()
        };
        assert!((w.clearance(0.6, 0.0, 0.45) - 0.4).abs() < 1e-12);
        assert_eq!(w.clearance(1.5, 0.0, 0.45), 0.0);
        assert_eq!(WorldModel::default().clearance(0.0, 0.0, 0.45), NO_OBSTACLE_DISTANCE);
    }

    #[test]
    fn elevated_slab_ignored_for_clearance() {
        let slab = StaticBody {
            name: "board".into(),
            parts: vec![Aabb::new(Point3::new(-1.0, -1.0, 0.8), Point3::new(1.0, 1.0, 1.8))],
        };
        let w = WorldModel {
            bodies: vec![slab],
            ..Default::default()
        };
        assert_eq!(w.clearance(0.0, 0.0, 0.45), NO_OBSTACLE_DISTANCE);
    }

    #[test]
    fn rays_hit_box_and_cylinder() {
        let w = WorldModel {
            bodies: vec![unit_box(2.0, -0.5)],
            pedestrians: vec![Pedestrian::new(0.5, 1.7, 0.0, vec![[0.0, 3.0]], false)],
            ..Default::default()
        };
        let o = Point3::new(0.0, 0.0, 0.3);
        assert!((w.cast(o, Point3::new(1.0, 0.0, 0.0), 10.0).unwrap() - 2.0).abs() < 1e-12);
        assert!((w.cast(o, Point3::new(0.0, 1.0, 0.0), 10.0).unwrap() - 2.5).abs() < 1e-12);
        assert!(w.cast(o, Point3::new(-1.0, 0.0, 0.0), 10.0).is_none());
        assert!(w.cast(o, Point3::new(1.0, 0.0, 0.0), 1.5).is_none());
    }
}
