//! Forward-time-domain map: one static KD-tree plus one KD-tree per horizon
//! step holding the predicted dynamic obstacle cloud for that step.
//!
//! Queries are planar over points inside the robot's height band. Static and
//! per-step dynamic trees are searched separately and merged at query time.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{Point3, PointCloud};
use crate::kdtree::{KdTree, Metric, ZBand};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeightBand {
    pub z_min: f64,
    pub z_max: f64,
}

impl HeightBand {
    pub fn new(z_min: f64, z_max: f64) -> Result<Self> {
        if !(z_min < z_max) {
            return Err(invalid(
                "height_band",
                format!("z_min {z_min} must be below z_max {z_max}"),
            ));
        }
        Ok(Self { z_min, z_max })
    }

    fn zband(&self) -> ZBand {
        ZBand {
            z_min: self.z_min,
            z_max: self.z_max,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapSource {
    Static,
    Dynamic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapHit {
    pub point: Point3,
    pub index: usize,
    pub dist_sq: f64,
    pub source: MapSource,
}

#[derive(Debug, Clone, Default)]
pub struct FtdMap {
    static_tree: KdTree,
    dyn_trees: Vec<KdTree>,
    pub build_time: f64,
}

/// Keeps points whose (x, y) lie within `half_extent` of `center` on both axes.
pub fn crop_to_window(cloud: &PointCloud, center: (f64, f64), half_extent: f64) -> PointCloud {
    PointCloud::new(
        cloud
            .points
            .iter()
            .filter(|p| (p.x - center.0).abs() <= half_extent && (p.y - center.1).abs() <= half_extent)
            .copied()
            .collect(),
        cloud.frame_time,
    )
}

/// Indexes `static_cloud` and each of the `N = dyn_clouds.len()` predicted clouds.
pub fn build_ftd(static_cloud: &PointCloud, dyn_clouds: &[PointCloud]) -> FtdMap {
    FtdMap {
        static_tree: KdTree::build(static_cloud),
        dyn_trees: dyn_clouds.iter().map(KdTree::build).collect(),
        build_time: static_cloud.frame_time,
    }
}

fn hit(n: crate::kdtree::Neighbor, source: MapSource) -> MapHit {
    MapHit {
        point: n.point,
        index: n.index,
        dist_sq: n.dist_sq,
        source,
    }
}

impl FtdMap {
    /// Number of dynamic trees.
    pub fn horizon(&self) -> usize {
        self.dyn_trees.len()
    }

    /// Total tree count, `N + 1`.
    pub fn tree_count(&self) -> usize {
        self.dyn_trees.len() + 1
    }

    pub fn static_tree(&self) -> &KdTree {
        &self.static_tree
    }

    pub fn dynamic_tree(&self, k: usize) -> Result<&KdTree> {
        self.dyn_trees.get(k).ok_or(Error::StepOutOfRange {
            step: k,
            horizon: self.horizon(),
        })
    }

    pub fn nearest_static(&self, pos: (f64, f64), band: &HeightBand) -> Option<MapHit> {
        let q = Point3::new(pos.0, pos.1, 0.0);
        self.static_tree
            .nearest_with(&q, Metric::Planar, Some(band.zband()))
            .map(|n| hit(n, MapSource::Static))
    }

    pub fn nearest_dynamic(&self, k: usize, pos: (f64, f64), band: &HeightBand) -> Result<Option<MapHit>> {
        let q = Point3::new(pos.0, pos.1, 0.0);
        Ok(self
            .dynamic_tree(k)?
            .nearest_with(&q, Metric::Planar, Some(band.zband()))
            .map(|n| hit(n, MapSource::Dynamic)))
    }

    /// Nearest in-band point of `P_static ∪ P_dyn,k` by planar distance.
    /// Ties prefer the static map, then the smaller index.
    pub fn nearest_at_step(&self, k: usize, pos: (f64, f64), band: &HeightBand) -> Result<Option<MapHit>> {
        let d = self.nearest_dynamic(k, pos, band)?;
        let s = self.nearest_static(pos, band);
        Ok(match (s, d) {
            (Some(s), Some(d)) => Some(if s.dist_sq <= d.dist_sq { s } else { d }),
            (s, d) => s.or(d),
        })
    }

    /// Nearest in-band point with `dist_sq <= delta²`, i.e. barrier value `<= 0`.
    pub fn collides_at_step(&self, k: usize, pos: (f64, f64), band: &HeightBand, delta: f64) -> Result<Option<MapHit>> {
        Ok(self
            .nearest_at_step(k, pos, band)?
            .filter(|h| h.dist_sq <= delta * delta))
    }

    /// Static-only collision check.
    pub fn collides_static(&self, pos: (f64, f64), band: &HeightBand, delta: f64) -> Option<MapHit> {
        self.nearest_static(pos, band).filter(|h| h.dist_sq <= delta * delta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn band() -> HeightBand {
        HeightBand::new(0.05, 0.5).unwrap()
    }

    fn random_cloud(rng: &mut ChaCha8Rng, n: usize) -> PointCloud {
        PointCloud::new(
            (0..n)
                .map(|_| {
                    Point3::new(
                        rng.random_range(-2.5..2.5),
                        rng.random_range(-2.5..2.5),
                        rng.random_range(0.0..1.0),
                    )
                })
                .collect(),
            0.0,
        )
    }

    #[test]
    fn empty_map_and_tree_count() {
        let map = build_ftd(&PointCloud::empty(0.0), &vec![PointCloud::empty(0.0); 30]);
        assert_eq!(map.tree_count(), 31);
        assert!(map.nearest_at_step(0, (0.0, 0.0), &band()).unwrap().is_none());
        assert!(matches!(
            map.nearest_at_step(30, (0.0, 0.0), &band()),
            Err(Error::StepOutOfRange { .. })
        ));
    }

    #[test]
    fn static_only_map_answers_every_step_alike() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let map = build_ftd(&random_cloud(&mut rng, 200), &vec![PointCloud::empty(0.0); 10]);
        let first = map.nearest_at_step(0, (0.3, 0.1), &band()).unwrap();
        for k in 1..10 {
            assert_eq!(map.nearest_at_step(k, (0.3, 0.1), &band()).unwrap(), first);
        }
    }

    #[test]
    fn dynamic_shift_between_steps() {
        // One obstacle point ahead of the query, moving +x at 1 m/s, dt = 0.1.
        let obstacle = Point3::new(1.0, 0.0, 0.3);
        let dyn_clouds: Vec<PointCloud> = (0..10)
            .map(|k| PointCloud::new(vec![obstacle + Point3::new(0.1 * k as f64, 0.0, 0.0)], 0.0))
            .collect();
        let map = build_ftd(&PointCloud::empty(0.0), &dyn_clouds);
        let d0 = map
            .nearest_at_step(0, (0.0, 0.0), &band())
            .unwrap()
            .unwrap()
            .dist_sq
            .sqrt();
        let d5 = map
            .nearest_at_step(5, (0.0, 0.0), &band())
            .unwrap()
            .unwrap()
            .dist_sq
            .sqrt();
        assert!((d5 - d0 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn collision_boundary_is_inclusive() {
        let map = build_ftd(
            &PointCloud::new(vec![Point3::new(0.5, 0.0, 0.2)], 0.0),
            &[PointCloud::empty(0.0)],
        );
        assert!(map.collides_at_step(0, (0.0, 0.0), &band(), 0.5).unwrap().is_some());
        assert!(map.collides_at_step(0, (0.0, 0.0), &band(), 0.25).unwrap().is_none());
    }

    #[test]
    fn out_of_band_points_are_ignored() {
        let map = build_ftd(
            &PointCloud::new(vec![Point3::new(0.1, 0.0, 1.5)], 0.0),
            &[PointCloud::empty(0.0)],
        );
        assert!(map.nearest_at_step(0, (0.0, 0.0), &band()).unwrap().is_none());
    }

    #[test]
    fn queries_match_band_filtered_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let stat = random_cloud(&mut rng, 300);
        let dyns: Vec<PointCloud> = (0..5).map(|_| random_cloud(&mut rng, 40)).collect();
        let map = build_ftd(&stat, &dyns);
        let b = band();
        for _ in 0..200 {
            let k = rng.random_range(0..5);
            let pos = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            let q = Point3::new(pos.0, pos.1, 0.0);
            let mut best: Option<(f64, u8, usize)> = None;
            for (src, cloud) in [(0u8, &stat), (1u8, &dyns[k])] {
                for (i, p) in cloud.iter().enumerate() {
                    if p.z < b.z_min || p.z > b.z_max {
                        continue;
                    }
                    let cand = (p.planar_dist_sq(&q), src, i);
                    if best.is_none_or(|bb| (cand.0, cand.1, cand.2) < bb) {
                        best = Some(cand);
                    }
                }
            }
            let got = map.nearest_at_step(k, pos, &b).unwrap();
            let got_key = got.map(|h| (h.dist_sq, (h.source == MapSource::Dynamic) as u8, h.index));
            assert_eq!(got_key, best);

            let delta = rng.random_range(0.05..0.6);
            let c = map.collides_at_step(k, pos, &b, delta).unwrap();
            assert_eq!(c.is_none(), got.is_none_or(|h| h.dist_sq > delta * delta));
        }
    }
}
