//! Comparison planners: a greedy single-step depth CBF-QP controller and an
//! NMPC with one ellipse barrier per obstacle cluster.

use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::ftd_map::{FtdMap, HeightBand};
use crate::geometry::Aabb;
use crate::nmpc::{wrap_angle, Barrier, BarrierRow, ControlInput, NmpcParams, RobotState, RowKind};
use crate::perception::DynamicDetection;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    /// Proportional gains of the go-to-goal law.
    pub k_v: f64,
    pub k_omega: f64,
    /// Clusters farther than this (planar, from the robot) get no ellipse.
    pub ellipse_range: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            k_v: 1.0,
            k_omega: 1.5,
            ellipse_range: 4.0,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.k_v > 0.0 && self.k_omega > 0.0) {
            return Err(invalid("baseline.k_v/k_omega", "gains must be positive"));
        }
        if !(self.ellipse_range > 0.0) {
            return Err(invalid("baseline.ellipse_range", "must be positive"));
        }
        Ok(())
    }
}

/// Proportional go-to-goal input, clamped to the input box.
pub fn nominal_control(x: &RobotState, goal: (f64, f64), p: &NmpcParams, cfg: &BaselineConfig) -> ControlInput {
    let dx = goal.0 - x.x;
    let dy = goal.1 - x.y;
    let dist = dx.hypot(dy);
    if dist < 1e-9 {
        return ControlInput::ZERO;
    }
    let err = wrap_angle(dy.atan2(dx) - x.theta);
    let v = (cfg.k_v * dist).min(p.v_max) * err.cos().max(0.0);
    let omega = (cfg.k_omega * err).clamp(-p.omega_max, p.omega_max);
    ControlInput::new(v.clamp(p.v_min, p.v_max), omega)
}

/// `min (v - v_nom)²` subject to `a v ≥ b` and `v ∈ [lo, hi]`; `None` when
/// the feasible interval is empty.
pub fn scalar_cbf_qp(v_nom: f64, a: f64, b: f64, lo: f64, hi: f64) -> Option<f64> {
    let (mut lo, mut hi) = (lo, hi);
    if a > 0.0 {
        lo = lo.max(b / a);
    } else if a < 0.0 {
        hi = hi.min(b / a);
    } else if b > 0.0 {
        return None;
    }
    (lo <= hi).then(|| v_nom.clamp(lo, hi))
}

/// Result of one depth CBF-QP step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthQpOutput {
    pub input: ControlInput,
    pub nominal: ControlInput,
    pub feasible: bool,
    /// Whether a closest point entered the constraint.
    pub constrained: bool,
}

/// Single-step controller: the nominal law with `v` minimally modified so the
/// closest in-band point of the current map satisfies the linearized
/// discrete CBF condition over one planner step. Infeasible gives zero input.
pub fn baseline_depth_cbf_qp(
    x: &RobotState,
    map: &FtdMap,
    goal: (f64, f64),
    p: &NmpcParams,
    cfg: &BaselineConfig,
    band: &HeightBand,
) -> DepthQpOutput {
    let nominal = nominal_control(x, goal, p, cfg);
    let Ok(Some(hit)) = map.nearest_at_step(0, (x.x, x.y), band) else {
        return DepthQpOutput {
            input: nominal,
            nominal,
            feasible: true,
            constrained: false,
        };
    };
    let (rx, ry) = (x.x - hit.point.x, x.y - hit.point.y);
    let h = rx * rx + ry * ry - p.delta_s * p.delta_s;
    // h(p + v dt d) ≥ (1-γ) h(p), dropping the nonnegative v² term.
    let a = 2.0 * p.dt * (rx * x.theta.cos() + ry * x.theta.sin());
    let b = -p.gamma * h;
    match scalar_cbf_qp(nominal.v, a, b, p.v_min, p.v_max) {
        Some(v) => DepthQpOutput {
            input: ControlInput::new(v, nominal.omega),
            nominal,
            feasible: true,
            constrained: true,
        },
        None => DepthQpOutput {
            input: ControlInput::ZERO,
            nominal,
            feasible: false,
            constrained: true,
        },
    }
}

/// Axis-aligned ellipse circumscribing `b`'s footprint, inflated by `margin`.
pub fn circumscribing_ellipse(b: &Aabb, margin: f64) -> ([f64; 2], [f64; 2]) {
    let c = b.center();
    let e = b.extent();
    ([c.x, c.y], [0.5 * e.x * SQRT_2 + margin, 0.5 * e.y * SQRT_2 + margin])
}

/// DCBF rows `h(x_{k+1}) ≥ (1-γ) h(x_k)` for one ellipse per nearby static
/// cluster and per dynamic detection; dynamic centers move with the
/// estimated velocity.
pub fn ellipse_rows(
    x: &RobotState,
    static_clusters: &[Aabb],
    detections: &[DynamicDetection],
    p: &NmpcParams,
    cfg: &BaselineConfig,
) -> Vec<BarrierRow> {
    let n = p.horizon;
    let mut rows = Vec::new();
    for b in static_clusters {
        if b.planar_distance(x.x, x.y) > cfg.ellipse_range {
            continue;
        }
        let (center, semi_axes) = circumscribing_ellipse(b, p.delta_s);
        let e = Barrier::Ellipse { center, semi_axes };
        rows.extend((0..n).map(|k| BarrierRow {
            cur: k,
            next: k + 1,
            cur_barrier: e,
            next_barrier: e,
            gamma: p.gamma,
            kind: RowKind::Ellipse,
        }));
    }
    for d in detections {
        if d.bbox.planar_distance(x.x, x.y) > cfg.ellipse_range {
            continue;
        }
        let (c0, semi_axes) = circumscribing_ellipse(&d.bbox, p.delta_d);
        let at = |k: usize| Barrier::Ellipse {
            center: [
                c0[0] + d.velocity.x * k as f64 * p.dt,
                c0[1] + d.velocity.y * k as f64 * p.dt,
            ],
            semi_axes,
        };
        rows.extend((0..n).map(|k| BarrierRow {
            cur: k,
            next: k + 1,
            cur_barrier: at(k),
            next_barrier: at(k + 1),
            gamma: p.gamma,
            kind: RowKind::Ellipse,
        }));
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ftd_map::build_ftd;
    use crate::geometry::{Point3, PointCloud};
    use crate::nmpc::{Planner, PlannerConfig};

    fn band() -> HeightBand {
        HeightBand::new(0.05, 0.45).unwrap()
    }

    fn map_with(points: Vec<Point3>) -> FtdMap {
        build_ftd(&PointCloud::new(points, 0.0), &vec![PointCloud::empty(0.0); 30])
    }

    #[test]
    fn no_obstacles_returns_nominal() {
        let p = NmpcParams::default();
        let cfg = BaselineConfig::default();
        let x = RobotState::new(0.0, 0.0, 0.3);
        let out = baseline_depth_cbf_qp(&x, &map_with(vec![]), (5.0, 1.0), &p, &cfg, &band());
        assert_eq!(out.input, out.nominal);
        assert!(!out.constrained);
        let err = wrap_angle(1.0f64.atan2(5.0) - 0.3);
        assert!((out.input.omega - 1.5 * err).abs() < 1e-12);
    }

    #[test]
    fn point_ahead_reduces_speed_to_hand_solution() {
        let p = NmpcParams::default();
        let cfg = BaselineConfig::default();
        let x = RobotState::new(0.0, 0.0, 0.0);
        let out = baseline_depth_cbf_qp(
            &x,
            &map_with(vec![Point3::new(0.4, 0.0, 0.2)]),
            (5.0, 0.0),
            &p,
            &cfg,
            &band(),
        );
        // a = 2 dt (p - r)·d = 2·0.1·(-0.4); b = -γ (0.16 - δ²); v = b / a.
        let h = 0.16 - 0.271f64.powi(2);
        let expected = (-0.9 * h) / (2.0 * 0.1 * -0.4);
        assert!(out.nominal.v == 1.2);
        assert!((out.input.v - expected).abs() < 1e-12, "{} vs {expected}", out.input.v);
        assert!(out.input.v < out.nominal.v);
        // Linearized step keeps the exact barrier decay.
        let hn = (0.4 - out.input.v * 0.1).powi(2) - 0.271f64.powi(2);
        assert!(hn >= 0.1 * h - 1e-12);
    }

    #[test]
    fn infeasible_gives_zero() {
        assert_eq!(scalar_cbf_qp(1.0, -1.0, 0.5, 0.0, 1.2), None);
        assert_eq!(scalar_cbf_qp(1.0, 0.0, 0.5, 0.0, 1.2), None);
        assert_eq!(scalar_cbf_qp(1.0, 0.0, -0.5, 0.0, 1.2), Some(1.0));
        let p = NmpcParams::default();
        // Inside the margin and facing the point.
        let x = RobotState::new(0.0, 0.0, 0.0);
        let out = baseline_depth_cbf_qp(
            &x,
            &map_with(vec![Point3::new(0.1, 0.0, 0.2)]),
            (5.0, 0.0),
            &p,
            &BaselineConfig::default(),
            &band(),
        );
        assert!(!out.feasible);
        assert_eq!(out.input, ControlInput::ZERO);
    }

    #[test]
    fn ellipse_circumscribes_box() {
        let b = Aabb::new(Point3::new(1.0, -0.2, 0.0), Point3::new(1.4, 0.4, 0.5));
        let (c, ax) = circumscribing_ellipse(&b, 0.0);
        let e = Barrier::Ellipse {
            center: c,
            semi_axes: ax,
        };
        for (x, y) in [(1.0, -0.2), (1.4, -0.2), (1.0, 0.4), (1.4, 0.4)] {
            assert!(e.value([x, y]).abs() < 1e-12);
        }
        let (_, inflated) = circumscribing_ellipse(&b, 0.271);
        let e2 = Barrier::Ellipse {
            center: c,
            semi_axes: inflated,
        };
        assert!(e2.value([1.4, 0.4]) < 0.0);
    }

    #[test]
    fn planned_path_clears_ellipse() {
        let p = NmpcParams::default();
        let b = Aabb::new(Point3::new(1.5, -0.1, 0.0), Point3::new(1.7, 0.1, 0.4));
        let x0 = RobotState::new(0.0, 0.0, 0.0);
        let rows = ellipse_rows(&x0, &[b], &[], &p, &BaselineConfig::default());
        assert_eq!(rows.len(), 30);
        let mut planner = Planner::new(PlannerConfig::default()).unwrap();
        let out = planner.solve_rows(&x0, (4.0, 0.0), rows.clone(), 0.0).unwrap();
        assert!(out.solution.is_solved());
        let e = rows[0].cur_barrier;
        assert!(out.solution.states.iter().all(|s| e.value([s.x, s.y]) >= -1e-6));
    }

    #[test]
    fn dynamic_ellipse_translates() {
        let p = NmpcParams::default();
        let det = DynamicDetection {
            track_id: 1,
            indices: vec![],
            centroid: Point3::new(2.0, 0.0, 0.8),
            bbox: Aabb::new(Point3::new(1.8, -0.2, 0.0), Point3::new(2.2, 0.2, 1.7)),
            velocity: Point3::new(0.0, 1.0, 0.0),
        };
        let rows = ellipse_rows(&RobotState::default(), &[], &[det], &p, &BaselineConfig::default());
        assert_eq!(rows.len(), 30);
        let Barrier::Ellipse { center, .. } = rows[5].next_barrier else {
            panic!("ellipse expected")
        };
        assert!((center[1] - 0.6).abs() < 1e-12);
    }
}
