//! Static/dynamic split of clustered points by track velocity voting.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::geometry::{Aabb, Point3, PointCloud};
use crate::tracking::{KalmanConfig, ObstacleTrack};

use super::dbscan::ClusterLabels;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    /// Speed above which a frame votes "dynamic", m/s.
    pub v_dyn: f64,
    pub vote_window: usize,
    /// Required fraction of dynamic votes over a full window.
    pub vote_fraction: f64,
    /// Centroid association gate, m.
    pub gate: f64,
    /// A track is dropped once its missed-association fraction exceeds this.
    pub skip_ratio: f64,
    pub kalman: KalmanConfig,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            v_dyn: 0.1,
            vote_window: 5,
            vote_fraction: 0.8,
            gate: 0.8,
            skip_ratio: 0.5,
            kalman: KalmanConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicDetection {
    pub track_id: u64,
    pub indices: Vec<usize>,
    pub centroid: Point3,
    pub bbox: Aabb,
    pub velocity: Point3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackedObstacle {
    pub track: ObstacleTrack,
    pub votes: VecDeque<bool>,
    pub dynamic: bool,
    /// Cluster bounding boxes over the vote window, oldest first.
    pub extents: VecDeque<(f64, Aabb)>,
}

/// Planar speed of the slower-moving bounding box edge per axis, zero on
/// an axis whose two edges moved apart or together. A static body whose
/// visible part grows or shrinks keeps one edge in place; a moving one
/// carries both.
fn edge_speed(old: &(f64, Aabb), new: &(f64, Aabb)) -> f64 {
    let dt = new.0 - old.0;
    if dt <= 0.0 {
        return 0.0;
    }
    let axis = |lo: f64, hi: f64| if lo * hi <= 0.0 { 0.0 } else { lo.abs().min(hi.abs()) };
    let dx = axis(new.1.min.x - old.1.min.x, new.1.max.x - old.1.max.x);
    let dy = axis(new.1.min.y - old.1.min.y, new.1.max.y - old.1.max.y);
    dx.hypot(dy) / dt
}

#[derive(Debug, Clone, Default)]
pub struct Classification {
    pub static_cloud: PointCloud,
    /// Bounding boxes of clusters classified static.
    pub static_clusters: Vec<Aabb>,
    pub detections: Vec<DynamicDetection>,
    /// Tracks behind `detections`, same order.
    pub dynamic_tracks: Vec<ObstacleTrack>,
}

/// Owns the track list across perception frames.
#[derive(Debug, Clone)]
pub struct ObstacleTracker {
    pub cfg: ClassifierConfig,
    tracks: Vec<TrackedObstacle>,
    next_id: u64,
}

impl ObstacleTracker {
    pub fn new(cfg: ClassifierConfig) -> Self {
        Self {
            cfg,
            tracks: Vec::new(),
            next_id: 0,
        }
    }

    pub fn tracks(&self) -> &[TrackedObstacle] {
        &self.tracks
    }

    /// Associates this frame's clusters to tracks, votes, and partitions the cloud.
    ///
    /// Every input point ends up either in `static_cloud` or in exactly one
    /// detection. Noise points are static.
    pub fn classify(&mut self, cloud: &PointCloud, labels: &ClusterLabels, time: f64) -> Classification {
        self.classify_with_cut(cloud, labels, time, |_| false)
    }

    /// As [`Self::classify`], with `cut(members)` flagging clusters clipped
    /// by the sensor boundary. A clipped cluster's centroid slides as the
    /// view sweeps over it, so it re-anchors its track without a velocity
    /// update or a vote.
    pub fn classify_with_cut(
        &mut self,
        cloud: &PointCloud,
        labels: &ClusterLabels,
        time: f64,
        cut: impl Fn(&[usize]) -> bool,
    ) -> Classification {
        let cfg = self.cfg;
        let clusters = labels.members();
        let centroids: Vec<Point3> = clusters
            .iter()
            .map(|m| m.iter().fold(Point3::default(), |acc, &i| acc + cloud.points[i]) * (1.0 / m.len() as f64))
            .collect();

        let mut pairs = Vec::new();
        for (ci, c) in centroids.iter().enumerate() {
            for (ti, t) in self.tracks.iter().enumerate() {
                let predicted = t.track.position + t.track.velocity * (time - t.track.state_time);
                let d = predicted.dist_sq(c);
                if d <= cfg.gate * cfg.gate {
                    pairs.push((d, ci, ti));
                }
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut cluster_track = vec![None; clusters.len()];
        let mut track_taken = vec![false; self.tracks.len()];
        for (_, ci, ti) in pairs {
            if cluster_track[ci].is_none() && !track_taken[ti] {
                cluster_track[ci] = Some(ti);
                track_taken[ti] = true;
            }
        }

        for (ti, t) in self.tracks.iter_mut().enumerate() {
            if !track_taken[ti] {
                push_bounded(&mut t.track.miss_history, false, cfg.vote_window);
            }
        }

        let boxes: Vec<Aabb> = clusters
            .iter()
            .map(|m| Aabb::from_points(m.iter().map(|&i| &cloud.points[i])).expect("clusters are nonempty"))
            .collect();
        let mut is_dynamic = vec![false; clusters.len()];
        let mut cluster_tid = vec![usize::MAX; clusters.len()];
        for (ci, members) in clusters.iter().enumerate() {
            let extent = (time, boxes[ci]);
            let member_cloud = PointCloud::new(members.iter().map(|&i| cloud.points[i]).collect(), time);
            match cluster_track[ci] {
                Some(ti) => {
                    let t = &mut self.tracks[ti];
                    push_bounded(&mut t.track.miss_history, true, cfg.vote_window);
                    if cut(members) {
                        t.track.reanchor(centroids[ci], member_cloud, time, &cfg.kalman);
                    } else {
                        t.track.absorb(centroids[ci], member_cloud, time, &cfg.kalman);
                        let speed = t.track.planar_speed();
                        let edges = t.extents.front().map_or(0.0, |old| edge_speed(old, &extent));
                        push_bounded(&mut t.votes, speed > cfg.v_dyn && edges > cfg.v_dyn, cfg.vote_window);
                        let yes = t.votes.iter().filter(|v| **v).count() as f64;
                        t.dynamic = speed > cfg.v_dyn && yes / cfg.vote_window as f64 >= cfg.vote_fraction;
                    }
                    t.extents.push_back(extent);
                    while t.extents.len() > cfg.vote_window {
                        t.extents.pop_front();
                    }
                    is_dynamic[ci] = t.dynamic;
                    cluster_tid[ci] = ti;
                }
                None => {
                    let track = ObstacleTrack::new(self.next_id, centroids[ci], member_cloud, time, &cfg.kalman);
                    self.next_id += 1;
                    let mut votes = VecDeque::new();
                    votes.push_back(false);
                    self.tracks.push(TrackedObstacle {
                        track,
                        votes,
                        dynamic: false,
                        extents: VecDeque::from([extent]),
                    });
                    cluster_tid[ci] = self.tracks.len() - 1;
                }
            }
        }

        let mut out = Classification {
            static_cloud: PointCloud::empty(time),
            ..Default::default()
        };
        let mut dynamic_point = vec![false; cloud.len()];
        for (ci, members) in clusters.iter().enumerate() {
            let bbox = boxes[ci];
            if is_dynamic[ci] {
                let t = &self.tracks[cluster_tid[ci]].track;
                for &i in members {
                    dynamic_point[i] = true;
                }
                out.detections.push(DynamicDetection {
                    track_id: t.id,
                    indices: members.clone(),
                    centroid: centroids[ci],
                    bbox,
                    velocity: t.velocity,
                });
                out.dynamic_tracks.push(t.clone());
            } else {
                out.static_clusters.push(bbox);
            }
        }
        out.static_cloud.points = cloud
            .points
            .iter()
            .zip(&dynamic_point)
            .filter(|(_, d)| !**d)
            .map(|(p, _)| *p)
            .collect();

        let skip = cfg.skip_ratio;
        self.tracks.retain(|t| {
            let h = &t.track.miss_history;
            let misses = h.iter().filter(|hit| !**hit).count() as f64;
            misses / h.len() as f64 <= skip
        });
        out
    }
}

fn push_bounded(q: &mut VecDeque<bool>, v: bool, cap: usize) {
    q.push_back(v);
    while q.len() > cap {
        q.pop_front();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perception::dbscan::dbscan;

    fn blob(center: Point3) -> Vec<Point3> {
        let mut v = Vec::new();
        for i in 0..3 {
            for j in 0..3 {
                v.push(center + Point3::new(i as f64 * 0.1, j as f64 * 0.1, 0.0));
            }
        }
        v
    }

    fn run_frames(step: Point3, frames: usize, dt: f64) -> Vec<bool> {
        let mut tracker = ObstacleTracker::new(ClassifierConfig::default());
        let mut decisions = Vec::new();
        for f in 0..frames {
            let c = Point3::new(1.0, 1.0, 0.5) + step * f as f64;
            let cloud = PointCloud::new(blob(c), f as f64 * dt);
            let labels = dbscan(&cloud, 0.2, 4);
            let out = tracker.classify(&cloud, &labels, f as f64 * dt);
            assert_eq!(
                out.static_cloud.len() + out.detections.iter().map(|d| d.indices.len()).sum::<usize>(),
                cloud.len()
            );
            decisions.push(!out.detections.is_empty());
        }
        decisions
    }

    #[test]
    fn stationary_cluster_stays_static() {
        assert_eq!(run_frames(Point3::default(), 5, 0.1), vec![false; 5]);
    }

    #[test]
    fn moving_cluster_becomes_dynamic_after_full_window() {
        // 0.1 m per 0.1 s = 1 m/s. Votes: F (new), T, T, T, T -> 4/5 = 0.8 at frame 5.
        let d = run_frames(Point3::new(0.1, 0.0, 0.0), 6, 0.1);
        assert_eq!(d, vec![false, false, false, false, true, true]);
    }

    #[test]
    fn growing_visible_extent_stays_static() {
        // One edge fixed, the other advancing 0.1 m per frame: the centroid
        // moves at 0.5 m/s but the body does not.
        let mut tracker = ObstacleTracker::new(ClassifierConfig::default());
        for f in 0..8 {
            let pts: Vec<Point3> = (0..3 + f)
                .flat_map(|i| (0..3).map(move |j| Point3::new(1.0 + i as f64 * 0.1, j as f64 * 0.1, 0.5)))
                .collect();
            let cloud = PointCloud::new(pts, f as f64 * 0.1);
            let out = tracker.classify(&cloud, &dbscan(&cloud, 0.2, 4), f as f64 * 0.1);
            assert!(out.detections.is_empty(), "frame {f}");
        }
        assert!(tracker.tracks()[0].track.planar_speed() > 0.1);
    }

    #[test]
    fn edge_speed_needs_both_edges() {
        let b = |x0: f64, x1: f64| Aabb::new(Point3::new(x0, 0.0, 0.0), Point3::new(x1, 1.0, 1.0));
        assert_eq!(edge_speed(&(0.0, b(0.0, 1.0)), &(0.5, b(0.0, 1.5))), 0.0);
        assert_eq!(edge_speed(&(0.0, b(0.0, 1.0)), &(0.5, b(-0.2, 1.2))), 0.0);
        assert!((edge_speed(&(0.0, b(0.0, 1.0)), &(0.5, b(0.3, 1.5))) - 0.6).abs() < 1e-12);
    }

    #[test]
    fn noise_points_are_static() {
        let mut pts = blob(Point3::new(0.0, 0.0, 0.5));
        pts.push(Point3::new(5.0, 5.0, 0.5));
        let cloud = PointCloud::new(pts, 0.0);
        let labels = dbscan(&cloud, 0.2, 4);
        let mut tracker = ObstacleTracker::new(ClassifierConfig::default());
        let out = tracker.classify(&cloud, &labels, 0.0);
        assert_eq!(out.static_cloud.len(), 10);
        assert_eq!(out.static_clusters.len(), 1);
    }

    #[test]
    fn unseen_tracks_are_dropped() {
        let mut tracker = ObstacleTracker::new(ClassifierConfig::default());
        let cloud = PointCloud::new(blob(Point3::new(0.0, 0.0, 0.5)), 0.0);
        tracker.classify(&cloud, &dbscan(&cloud, 0.2, 4), 0.0);
        assert_eq!(tracker.tracks().len(), 1);
        let empty = PointCloud::empty(0.1);
        tracker.classify(&empty, &dbscan(&empty, 0.2, 4), 0.1);
        // history [hit, miss]: 0.5 is not above the ratio
        assert_eq!(tracker.tracks().len(), 1);
        tracker.classify(&empty, &dbscan(&empty, 0.2, 4), 0.2);
        assert!(tracker.tracks().is_empty());
    }
}
