//! Barrier functions and discrete CBF constraint rows.
//!
//! A row couples a "current" and a "next" state index and requires
//! `h_next(p_next) - (1 - γ) h_cur(p_cur) >= 0`, the discrete condition
//! `Δh >= -γ h` rearranged.

use serde::{Deserialize, Serialize};

use crate::geometry::Point3;

/// `‖pos − risk_xy‖² − δ²`.
pub fn barrier_value(pos: (f64, f64), risk: &Point3, delta: f64) -> f64 {
    let dx = pos.0 - risk.x;
    let dy = pos.1 - risk.y;
    dx * dx + dy * dy - delta * delta
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Barrier {
    /// Squared distance to a point minus `delta²`.
    Point { center: [f64; 2], delta: f64 },
    /// Axis-aligned ellipse: `((x-cx)/a)² + ((y-cy)/b)² - 1`.
    Ellipse { center: [f64; 2], semi_axes: [f64; 2] },
}

impl Barrier {
    pub fn point(risk: &Point3, delta: f64) -> Self {
        Barrier::Point {
            center: [risk.x, risk.y],
            delta,
        }
    }

    #[inline]
    pub fn value(&self, p: [f64; 2]) -> f64 {
        match *self {
            Barrier::Point { center, delta } => {
                let dx = p[0] - center[0];
                let dy = p[1] - center[1];
                dx * dx + dy * dy - delta * delta
            }
            Barrier::Ellipse { center, semi_axes } => {
                let ex = (p[0] - center[0]) / semi_axes[0];
                let ey = (p[1] - center[1]) / semi_axes[1];
                ex * ex + ey * ey - 1.0
            }
        }
    }

    /// Diagonal of the (constant, diagonal) Hessian.
    #[inline]
    pub fn hessian_diag(&self) -> [f64; 2] {
        match *self {
            Barrier::Point { .. } => [2.0, 2.0],
            Barrier::Ellipse { semi_axes, .. } => {
                [2.0 / (semi_axes[0] * semi_axes[0]), 2.0 / (semi_axes[1] * semi_axes[1])]
            }
        }
    }

    #[inline]
    pub fn gradient(&self, p: [f64; 2]) -> [f64; 2] {
        match *self {
            Barrier::Point { center, .. } => [2.0 * (p[0] - center[0]), 2.0 * (p[1] - center[1])],
            Barrier::Ellipse { center, semi_axes } => [
                2.0 * (p[0] - center[0]) / (semi_axes[0] * semi_axes[0]),
                2.0 * (p[1] - center[1]) / (semi_axes[1] * semi_axes[1]),
            ],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowKind {
    Static,
    Dynamic,
    Ellipse,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarrierRow {
    pub cur: usize,
    pub next: usize,
    pub cur_barrier: Barrier,
    pub next_barrier: Barrier,
    pub gamma: f64,
    pub kind: RowKind,
}

impl BarrierRow {
    /// Row value for planar positions of the current and next states.
    #[inline]
    pub fn value(&self, p_cur: [f64; 2], p_next: [f64; 2]) -> f64 {
        self.next_barrier.value(p_next) - (1.0 - self.gamma) * self.cur_barrier.value(p_cur)
    }

    /// Gradients with respect to `(p_cur, p_next)`.
    #[inline]
    pub fn gradients(&self, p_cur: [f64; 2], p_next: [f64; 2]) -> ([f64; 2], [f64; 2]) {
        let gc = self.cur_barrier.gradient(p_cur);
        let s = -(1.0 - self.gamma);
        ([s * gc[0], s * gc[1]], self.next_barrier.gradient(p_next))
    }
}

impl BarrierRow {
    /// Hessian diagonals with respect to `(p_cur, p_next)`.
    #[inline]
    pub fn hessian_diags(&self) -> ([f64; 2], [f64; 2]) {
        let hc = self.cur_barrier.hessian_diag();
        let s = -(1.0 - self.gamma);
        ([s * hc[0], s * hc[1]], self.next_barrier.hessian_diag())
    }
}
