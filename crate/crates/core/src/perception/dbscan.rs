//! Density-based clustering with a deterministic scan order.

use std::collections::VecDeque;

use crate::geometry::PointCloud;
use crate::kdtree::KdTree;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    Noise,
    Cluster(usize),
}

/// One label per input point; cluster ids are dense, in discovery order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterLabels {
    pub labels: Vec<Label>,
    pub num_clusters: usize,
}

impl ClusterLabels {
    /// Point indices of every cluster, ids ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_clusters];
        for (i, l) in self.labels.iter().enumerate() {
            if let Label::Cluster(c) = l {
                out[*c].push(i);
            }
        }
        out
    }
}

/// A point is core when at least `min_pts` points (itself included) lie within
/// `eps`. Points are scanned by ascending index, so a border point reachable
/// from several clusters joins the one discovered first.
pub fn dbscan(cloud: &PointCloud, eps: f64, min_pts: usize) -> ClusterLabels {
    assert!(eps > 0.0 && min_pts >= 1, "dbscan needs eps > 0 and min_pts >= 1");
    let n = cloud.len();
    let tree = KdTree::build(cloud);
    let region = |i: usize| -> Vec<usize> {
        let mut idx: Vec<usize> = tree
            .points_within(&cloud.points[i], eps)
            .into_iter()
            .map(|nb| nb.index)
            .collect();
        idx.sort_unstable();
        idx
    };

    let mut labels: Vec<Option<Label>> = vec![None; n];
    let mut num_clusters = 0;
    let mut queue = VecDeque::new();
    for i in 0..n {
        if labels[i].is_some() {
            continue;
        }
        let seeds = region(i);
        if seeds.len() < min_pts {
            labels[i] = Some(Label::Noise);
            continue;
        }
        let c = num_clusters;
        num_clusters += 1;
        labels[i] = Some(Label::Cluster(c));
        queue.extend(seeds);
        while let Some(j) = queue.pop_front() {
            match labels[j] {
                Some(Label::Noise) => labels[j] = Some(Label::Cluster(c)),
                Some(Label::Cluster(_)) => {}
                None => {
                    labels[j] = Some(Label::Cluster(c));
                    let nb = region(j);
                    if nb.len() >= min_pts {
                        queue.extend(nb);
                    }
                }
            }
        }
    }
    ClusterLabels {
        labels: labels.into_iter().map(|l| l.unwrap_or(Label::Noise)).collect(),
        num_clusters,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(points: Vec<Point3>) -> PointCloud {
        PointCloud::new(points, 0.0)
    }

    #[test]
    fn two_separated_groups() {
        let mut pts = Vec::new();
        for i in 0..10 {
            pts.push(Point3::new(i as f64 * 0.05, 0.0, 0.0));
            pts.push(Point3::new(1.45 + i as f64 * 0.05, 0.0, 0.0));
        }
        let labels = dbscan(&cloud(pts), 0.15, 3);
        assert_eq!(labels.num_clusters, 2);
        assert!(labels.labels.iter().all(|l| *l != Label::Noise));
    }

    #[test]
    fn isolated_point_is_noise() {
        let labels = dbscan(&cloud(vec![Point3::new(0.0, 0.0, 0.0)]), 0.2, 3);
        assert_eq!(labels.labels, vec![Label::Noise]);
        assert_eq!(labels.num_clusters, 0);
    }

    struct Dsu(Vec<usize>);
    impl Dsu {
        fn find(&mut self, i: usize) -> usize {
            if self.0[i] != i {
                let r = self.find(self.0[i]);
                self.0[i] = r;
            }
            self.0[i]
        }
        fn union(&mut self, a: usize, b: usize) {
            let (ra, rb) = (self.find(a), self.find(b));
            self.0[ra] = rb;
        }
    }

    #[test]
    fn matches_core_graph_components() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for trial in 0..20 {
            let n = 60 + trial * 5;
            let pts: Vec<Point3> = (0..n)
                .map(|_| {
                    Point3::new(
                        rng.random_range(0.0..3.0),
                        rng.random_range(0.0..3.0),
                        rng.random_range(0.0..0.5),
                    )
                })
                .collect();
            let (eps, min_pts) = (0.35, 4);
            let got = dbscan(&cloud(pts.clone()), eps, min_pts);

            // O(n²) oracle: core flags and union-find over core-core eps edges.
            let near = |a: usize, b: usize| pts[a].dist_sq(&pts[b]) <= eps * eps;
            let core: Vec<bool> = (0..n)
                .map(|i| (0..n).filter(|&j| near(i, j)).count() >= min_pts)
                .collect();
            let mut dsu = Dsu((0..n).collect());
            for i in 0..n {
                for j in 0..n {
                    if core[i] && core[j] && near(i, j) {
                        dsu.union(i, j);
                    }
                }
            }
            for i in 0..n {
                for j in 0..n {
                    if core[i] && core[j] {
                        let same_oracle = dsu.find(i) == dsu.find(j);
                        let same_got = got.labels[i] == got.labels[j];
                        assert_eq!(same_oracle, same_got);
                    }
                }
                let core_nbr = (0..n).any(|j| core[j] && near(i, j));
                match got.labels[i] {
                    Label::Noise => assert!(!core[i] && !core_nbr),
                    Label::Cluster(_) => {
                        assert!(core[i] || core_nbr);
                        if !core[i] {
                            // Border points join a cluster of some core neighbour.
                            assert!((0..n).any(|j| core[j] && near(i, j) && got.labels[j] == got.labels[i]));
                        }
                    }
                }
            }
        }
    }
}
