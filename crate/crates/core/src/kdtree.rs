//! Static 3-D KD-tree over a point cloud.
//!
//! The tree is an implicit balanced layout: the point array is permuted so that
//! the median of every sub-range sits at the middle slot, and only the split
//! axis per slot is stored. Queries are exact and break distance ties by the
//! smallest original index, so answers are reproducible against a linear scan.

use crate::geometry::{Point3, PointCloud};

/// A query answer: the stored point, its index in the source cloud, and the
/// squared distance under the query metric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub point: Point3,
    pub index: usize,
    pub dist_sq: f64,
}

/// Distance used by a query.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Euclidean,
    /// Distance between (x, y) projections; z only filters.
    Planar,
}

impl Metric {
    #[inline]
    fn dist_sq(self, a: &Point3, b: &Point3) -> f64 {
        match self {
            Metric::Euclidean => a.dist_sq(b),
            Metric::Planar => a.planar_dist_sq(b),
        }
    }
}

/// Optional restriction of candidate points to `z_min <= z <= z_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZBand {
    pub z_min: f64,
    pub z_max: f64,
}

impl ZBand {
    #[inline]
    fn admits(&self, p: &Point3) -> bool {
        p.z >= self.z_min && p.z <= self.z_max
    }
}

#[derive(Debug, Clone, Default)]
pub struct KdTree {
    points: Vec<Point3>,
    indices: Vec<usize>,
    axes: Vec<u8>,
}

#[inline]
fn better(d: f64, idx: usize, best: &Option<Neighbor>) -> bool {
    match best {
        None => true,
        Some(b) => d < b.dist_sq || (d == b.dist_sq && idx < b.index),
    }
}

impl KdTree {
    pub fn build(cloud: &PointCloud) -> Self {
        Self::from_points(&cloud.points)
    }

    pub fn from_points(points: &[Point3]) -> Self {
        let mut items: Vec<(Point3, usize)> = points.iter().copied().zip(0..).collect();
        let mut axes = vec![0u8; items.len()];
        build_range(&mut items, &mut axes);
        let (points, indices) = items.into_iter().unzip();
        Self { points, indices, axes }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Stored points with their original indices, in tree order.
    pub fn iter(&self) -> impl Iterator<Item = (Point3, usize)> + '_ {
        self.points.iter().copied().zip(self.indices.iter().copied())
    }

    /// Point with the given original index, if stored.
    pub fn get(&self, original_index: usize) -> Option<Point3> {
        self.indices
            .iter()
            .position(|&i| i == original_index)
            .map(|pos| self.points[pos])
    }

    /// Exact Euclidean nearest neighbour.
    pub fn nearest(&self, q: &Point3) -> Option<Neighbor> {
        self.nearest_with(q, Metric::Euclidean, None)
    }

    /// All points with squared distance `<= radius²`, ascending by distance then index.
    pub fn points_within(&self, q: &Point3, radius: f64) -> Vec<Neighbor> {
        self.within_with(q, radius, Metric::Euclidean, None)
    }

    pub fn nearest_with(&self, q: &Point3, metric: Metric, band: Option<ZBand>) -> Option<Neighbor> {
        let mut best = None;
        self.nearest_rec(0, self.points.len(), q, metric, band.as_ref(), &mut best);
        best
    }

    pub fn within_with(&self, q: &Point3, radius: f64, metric: Metric, band: Option<ZBand>) -> Vec<Neighbor> {
        let r2 = radius * radius;
        let mut out = Vec::new();
        self.within_rec(0, self.points.len(), q, r2, metric, band.as_ref(), &mut out);
        out.sort_by(|a, b| a.dist_sq.total_cmp(&b.dist_sq).then(a.index.cmp(&b.index)));
        out
    }

    fn nearest_rec(
        &self,
        lo: usize,
        hi: usize,
        q: &Point3,
        metric: Metric,
        band: Option<&ZBand>,
        best: &mut Option<Neighbor>,
    ) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let p = self.points[mid];
        if band.is_none_or(|b| b.admits(&p)) {
            let d = metric.dist_sq(&p, q);
            let idx = self.indices[mid];
            if better(d, idx, best) {
                *best = Some(Neighbor {
                    point: p,
                    index: idx,
                    dist_sq: d,
                });
            }
        }
        let axis = self.axes[mid] as usize;
        let split = p.coord(axis);
        let sides = if q.coord(axis) < split {
            [(lo, mid, true), (mid + 1, hi, false)]
        } else {
            [(mid + 1, hi, false), (lo, mid, true)]
        };
        for (a, b, is_low) in sides {
            if let Some(bound) = Self::side_bound(axis, split, q, is_low, metric, band) {
                if best.as_ref().is_none_or(|bb| bound <= bb.dist_sq) {
                    self.nearest_rec(a, b, q, metric, band, best);
                }
            }
        }
    }

    /// Lower bound on the query distance to any point of one half of a split
    /// (low half: coord <= split, high half: coord >= split), or `None` when
    /// the band excludes that half.
    #[inline]
    fn side_bound(
        axis: usize,
        split: f64,
        q: &Point3,
        is_low: bool,
        metric: Metric,
        band: Option<&ZBand>,
    ) -> Option<f64> {
        if axis == 2 && !Self::band_admits_side(split, is_low, band) {
            return None;
        }
        let c = q.coord(axis);
        let on_side = if is_low { c <= split } else { c >= split };
        if on_side || (axis == 2 && metric == Metric::Planar) {
            Some(0.0)
        } else {
            Some((c - split) * (c - split))
        }
    }

    #[inline]
    fn band_admits_side(split: f64, side_is_low: bool, band: Option<&ZBand>) -> bool {
        match band {
            None => true,
            Some(b) => {
                if side_is_low {
                    split >= b.z_min
                } else {
                    split <= b.z_max
                }
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn within_rec(
        &self,
        lo: usize,
        hi: usize,
        q: &Point3,
        r2: f64,
        metric: Metric,
        band: Option<&ZBand>,
        out: &mut Vec<Neighbor>,
    ) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let p = self.points[mid];
        if band.is_none_or(|b| b.admits(&p)) {
            let d = metric.dist_sq(&p, q);
            if d <= r2 {
                out.push(Neighbor {
                    point: p,
                    index: self.indices[mid],
                    dist_sq: d,
                });
            }
        }
        let axis = self.axes[mid] as usize;
        let split = p.coord(axis);
        for (a, b, is_low) in [(lo, mid, true), (mid + 1, hi, false)] {
            if let Some(bound) = Self::side_bound(axis, split, q, is_low, metric, band) {
                if bound <= r2 {
                    self.within_rec(a, b, q, r2, metric, band, out);
                }
            }
        }
    }
}

fn build_range(items: &mut [(Point3, usize)], axes: &mut [u8]) {
    let n = items.len();
    if n == 0 {
        return;
    }
    let axis = widest_axis(items);
    let mid = n / 2;
    items.select_nth_unstable_by(mid, |a, b| {
        a.0.coord(axis).total_cmp(&b.0.coord(axis)).then(a.1.cmp(&b.1))
    });
    axes[mid] = axis as u8;
    let (left, rest) = items.split_at_mut(mid);
    let (left_axes, rest_axes) = axes.split_at_mut(mid);
    build_range(left, left_axes);
    build_range(&mut rest[1..], &mut rest_axes[1..]);
}

fn widest_axis(items: &[(Point3, usize)]) -> usize {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for (p, _) in items {
        for a in 0..3 {
            lo[a] = lo[a].min(p.coord(a));
            hi[a] = hi[a].max(p.coord(a));
        }
    }
    (0..3)
        .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])).then(b.cmp(&a)))
        .unwrap_or(0)
}
