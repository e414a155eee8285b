//! Dense strictly convex QP solver (Goldfarb-Idnani dual active set).
//!
//! Solves `min ½ xᵀHx + gᵀx  s.t.  a_iᵀx ≥ b_i` for positive definite `H`.
//! The implementation keeps the factorization `J = L⁻ᵀ` (with `H = LLᵀ`) and
//! an upper-triangular `R`, updated with Givens rotations as constraints
//! enter and leave the active set.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpError {
    NotPositiveDefinite,
    Infeasible,
    IterationLimit,
}

impl std::fmt::Display for QpError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            QpError::NotPositiveDefinite => "hessian is not positive definite",
            QpError::Infeasible => "constraints are infeasible",
            QpError::IterationLimit => "active-set iteration limit reached",
        };
        f.write_str(s)
    }
}

impl std::error::Error for QpError {}

/// Inequality-constrained QP with constraint rows stored row-major.
#[derive(Debug, Clone)]
pub struct DenseQp {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    /// Nonzero column range of each row.
    span: Vec<(usize, usize)>,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// One multiplier per constraint row, zero for inactive rows.
    pub multipliers: Vec<f64>,
    pub active: Vec<usize>,
    pub objective: f64,
    pub iterations: usize,
}

impl DenseQp {
    pub fn new(h: DMatrix<f64>, g: DVector<f64>) -> Self {
        assert_eq!(h.nrows(), h.ncols());
        assert_eq!(h.nrows(), g.len());
        Self {
            h,
            g,
            a: Vec::new(),
            b: Vec::new(),
            span: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.g.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.b.len()
    }

    /// Adds `coeffsᵀ x ≥ rhs`.
    pub fn add_row(&mut self, coeffs: &[f64], rhs: f64) {
        assert_eq!(coeffs.len(), self.dim());
        let lo = coeffs.iter().position(|v| *v != 0.0).unwrap_or(0);
        let hi = coeffs.iter().rposition(|v| *v != 0.0).map_or(lo, |i| i + 1);
        self.a.extend_from_slice(coeffs);
        self.b.push(rhs);
        self.span.push((lo, hi));
    }

    /// Adds `x[i] ≥ lo` and/or `x[i] ≤ hi`.
    pub fn add_bounds(&mut self, i: usize, lo: Option<f64>, hi: Option<f64>) {
        let n = self.dim();
        if let Some(lo) = lo {
            let mut row = vec![0.0; n];
            row[i] = 1.0;
            self.add_row(&row, lo);
        }
        if let Some(hi) = hi {
            let mut row = vec![0.0; n];
            row[i] = -1.0;
            self.add_row(&row, -hi);
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.dim();
        &self.a[i * n..(i + 1) * n]
    }

    pub fn rhs(&self, i: usize) -> f64 {
        self.b[i]
    }

    /// `a_iᵀx − b_i`.
    pub fn slack(&self, i: usize, x: &[f64]) -> f64 {
        let (lo, hi) = self.span[i];
        dot(&self.row(i)[lo..hi], &x[lo..hi]) - self.b[i]
    }

    /// `a_iᵀx − b_i` for every row.
    pub fn slacks(&self, x: &DVector<f64>) -> Vec<f64> {
        (0..self.num_constraints())
            .map(|i| self.slack(i, x.as_slice()))
            .collect()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.h * x)) + self.g.dot(x)
    }

    pub fn solve(&self) -> Result<QpSolution, QpError> {
        Solver::new(self)?.run()
    }
}

/// Givens rotation of the adjacent column-major columns `c` and `c + 1`.
fn rotate_columns(m: &mut [f64], n: usize, c: usize, cc: f64, ss: f64, xny: f64) {
    let (left, right) = m[c * n..(c + 2) * n].split_at_mut(n);
    for (t1, t2) in left.iter_mut().zip(right.iter_mut()) {
        let a = *t1 * cc + *t2 * ss;
        *t2 = xny * (*t1 + a) - *t2;
        *t1 = a;
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Solver<'a> {
    qp: &'a DenseQp,
    n: usize,
    j0: DMatrix<f64>,
    j: DMatrix<f64>,
    r: DMatrix<f64>,
    r_norm: f64,
    /// Active constraint indices; slot `iq` holds the candidate.
    act: Vec<usize>,
    u: Vec<f64>,
    iq: usize,
    x: DVector<f64>,
    f: f64,
    tol: f64,
}

impl<'a> Solver<'a> {
    fn new(qp: &'a DenseQp) -> Result<Self, QpError> {
        let n = qp.dim();
        let chol = qp.h.clone().cholesky().ok_or(QpError::NotPositiveDefinite)?;
        let l = chol.l();
        let lt_inv = l.transpose().try_inverse().ok_or(QpError::NotPositiveDefinite)?;
        let x = -chol.solve(&qp.g);
        let f = 0.5 * qp.g.dot(&x);
        let c1 = qp.h.trace().abs();
        let c2 = lt_inv.trace().abs();
        let tol = (qp.num_constraints().max(1) as f64) * f64::EPSILON * c1 * c2 * 100.0;
        Ok(Self {
            qp,
            n,
            j: lt_inv.clone(),
            j0: lt_inv,
            r: DMatrix::zeros(n, n),
            r_norm: 1.0,
            act: vec![0; n + 1],
            u: vec![0.0; n + 1],
            iq: 0,
            x,
            f,
            tol,
        })
    }

    /// `d = Jᵀ a` for constraint row `row`, over its nonzero span.
    fn compute_d(&self, row: usize) -> Vec<f64> {
        let n = self.n;
        let (lo, hi) = self.qp.span[row];
        let a = &self.qp.row(row)[lo..hi];
        self.j
            .as_slice()
            .chunks_exact(n)
            .map(|col| dot(&col[lo..hi], a))
            .collect()
    }

    fn step_z(&self, d: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut z = vec![0.0; n];
        for (c, col) in self.j.as_slice().chunks_exact(n).enumerate().skip(self.iq) {
            let dc = d[c];
            if dc != 0.0 {
                for (zk, jk) in z.iter_mut().zip(col) {
                    *zk += jk * dc;
                }
            }
        }
        z
    }

    fn step_r(&self, d: &[f64]) -> Vec<f64> {
        let mut r = vec![0.0; self.iq];
        for i in (0..self.iq).rev() {
            let mut s = d[i];
            for k in i + 1..self.iq {
                s -= self.r[(i, k)] * r[k];
            }
            r[i] = s / self.r[(i, i)];
        }
        r
    }

    /// Appends a constraint with transformed normal `d`. Returns false (with
    /// `iq` already incremented) when it is linearly dependent on the set.
    fn add_constraint(&mut self, d: &mut [f64]) -> bool {
        let n = self.n;
        let mut jj = n - 1;
        while jj > self.iq {
            let (mut cc, mut ss) = (d[jj - 1], d[jj]);
            let h = cc.hypot(ss);
            if h > f64::EPSILON {
                d[jj] = 0.0;
                ss /= h;
                cc /= h;
                if cc < 0.0 {
                    cc = -cc;
                    ss = -ss;
                    d[jj - 1] = -h;
                } else {
                    d[jj - 1] = h;
                }
                let xny = ss / (1.0 + cc);
                rotate_columns(self.j.as_mut_slice(), n, jj - 1, cc, ss, xny);
            }
            jj -= 1;
        }
        self.iq += 1;
        for i in 0..self.iq {
            self.r[(i, self.iq - 1)] = d[i];
        }
        let diag = d[self.iq - 1].abs();
        if diag <= f64::EPSILON * self.r_norm {
            return false;
        }
        self.r_norm = self.r_norm.max(diag);
        true
    }

    fn delete_constraint(&mut self, l: usize) {
        let n = self.n;
        let Some(qq) = (0..self.iq).find(|&i| self.act[i] == l) else {
            return;
        };
        for i in qq..self.iq - 1 {
            self.act[i] = self.act[i + 1];
            self.u[i] = self.u[i + 1];
            for row in 0..n {
                self.r[(row, i)] = self.r[(row, i + 1)];
            }
        }
        self.act[self.iq - 1] = self.act[self.iq];
        self.u[self.iq - 1] = self.u[self.iq];
        self.act[self.iq] = 0;
        self.u[self.iq] = 0.0;
        for row in 0..self.iq {
            self.r[(row, self.iq - 1)] = 0.0;
        }
        self.iq -= 1;
        if self.iq == 0 {
            return;
        }
        for jj in qq..self.iq {
            let (mut cc, mut ss) = (self.r[(jj, jj)], self.r[(jj + 1, jj)]);
            let h = cc.hypot(ss);
            if h <= f64::EPSILON {
                continue;
            }
            cc /= h;
            ss /= h;
            self.r[(jj + 1, jj)] = 0.0;
            if cc < 0.0 {
                self.r[(jj, jj)] = -h;
                cc = -cc;
                ss = -ss;
            } else {
                self.r[(jj, jj)] = h;
            }
            let xny = ss / (1.0 + cc);
            for k in jj + 1..self.iq {
                let t1 = self.r[(jj, k)];
                let t2 = self.r[(jj + 1, k)];
                let a = t1 * cc + t2 * ss;
                self.r[(jj, k)] = a;
                self.r[(jj + 1, k)] = xny * (t1 + a) - t2;
            }
            rotate_columns(self.j.as_mut_slice(), n, jj, cc, ss, xny);
        }
    }

    /// Rebuilds `J` and `R` from scratch for the given active set.
    fn refactor(&mut self, active: &[usize], mult: &[f64]) {
        self.j = self.j0.clone();
        self.r.fill(0.0);
        self.r_norm = 1.0;
        self.iq = 0;
        for (&c, &m) in active.iter().zip(mult) {
            let mut d = self.compute_d(c);
            self.act[self.iq] = c;
            self.u[self.iq] = m;
            self.add_constraint(&mut d);
        }
    }

    fn run(mut self) -> Result<QpSolution, QpError> {
        let m = self.qp.num_constraints();
        let mut in_active = vec![false; m];
        let mut iterations = 0usize;
        let max_iter = 50 * (m + self.n) + 100;

        'outer: loop {
            iterations += 1;
            if iterations > max_iter {
                return Err(QpError::IterationLimit);
            }
            for i in 0..self.iq {
                in_active[self.act[i]] = true;
            }
            let mut s = self.qp.slacks(&self.x);
            let psi: f64 = s.iter().map(|v| v.min(0.0)).sum();
            if psi.abs() <= self.tol {
                break;
            }
            let u_old = self.u[..self.iq].to_vec();
            let act_old = self.act[..self.iq].to_vec();
            let x_old = self.x.clone();
            let mut excluded = vec![false; m];

            'select: loop {
                let mut ss = 0.0;
                let mut ip = None;
                for i in 0..m {
                    if s[i] < ss && !in_active[i] && !excluded[i] {
                        ss = s[i];
                        ip = Some(i);
                    }
                }
                let Some(ip) = ip else {
                    break 'outer;
                };
                let np = self.qp.row(ip);
                self.u[self.iq] = 0.0;
                self.act[self.iq] = ip;

                loop {
                    iterations += 1;
                    if iterations > max_iter {
                        return Err(QpError::IterationLimit);
                    }
                    let mut d = self.compute_d(ip);
                    let z = self.step_z(&d);
                    let r = self.step_r(&d);

                    let mut t1 = f64::INFINITY;
                    let mut l = None;
                    for k in 0..self.iq {
                        if r[k] > 0.0 && self.u[k] / r[k] < t1 {
                            t1 = self.u[k] / r[k];
                            l = Some(self.act[k]);
                        }
                    }
                    let zz = dot(&z, &z);
                    let znp = dot(&z, np);
                    let mut t2 = f64::INFINITY;
                    if zz > f64::EPSILON {
                        t2 = -s[ip] / znp;
                        if t2 < 0.0 {
                            t2 = f64::INFINITY;
                        }
                    }
                    let t = t1.min(t2);
                    if !t.is_finite() {
                        return Err(QpError::Infeasible);
                    }
                    if !t2.is_finite() {
                        // Dual step only: drop the blocking constraint.
                        for k in 0..self.iq {
                            self.u[k] -= t * r[k];
                        }
                        self.u[self.iq] += t;
                        let l = l.expect("finite t1 has a blocking index");
                        in_active[l] = false;
                        self.delete_constraint(l);
                        continue;
                    }
                    for (xk, zk) in self.x.iter_mut().zip(&z) {
                        *xk += t * zk;
                    }
                    self.f += t * znp * (0.5 * t + self.u[self.iq]);
                    for k in 0..self.iq {
                        self.u[k] -= t * r[k];
                    }
                    self.u[self.iq] += t;

                    if (t - t2).abs() <= f64::EPSILON * t2.abs().max(1.0) {
                        if self.add_constraint(&mut d) {
                            in_active[ip] = true;
                            continue 'outer;
                        }
                        // Degenerate: restore the previous active set and
                        // try a different violated constraint.
                        excluded[ip] = true;
                        in_active.iter_mut().for_each(|v| *v = false);
                        for &c in &act_old {
                            in_active[c] = true;
                        }
                        self.x = x_old.clone();
                        self.refactor(&act_old, &u_old);
                        s = self.qp.slacks(&self.x);
                        continue 'select;
                    }
                    // Partial step: drop the blocking constraint.
                    let l = l.expect("partial step has a blocking index");
                    in_active[l] = false;
                    self.delete_constraint(l);
                    s[ip] = self.qp.slack(ip, self.x.as_slice());
                }
            }
        }

        let mut multipliers = vec![0.0; m];
        let active = self.act[..self.iq].to_vec();
        for (k, &c) in active.iter().enumerate() {
            multipliers[c] = self.u[k];
        }
        let objective = self.qp.objective(&self.x);
        Ok(QpSolution {
            x: self.x,
            multipliers,
            active,
            objective,
            iterations,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Enumerates active sets and returns the KKT point with the lowest
    /// objective, or None when no subset yields a feasible KKT point.
    fn brute_force(qp: &DenseQp) -> Option<DVector<f64>> {
        let n = qp.dim();
        let m = qp.num_constraints();
        let mut best: Option<(f64, DVector<f64>)> = None;
        for mask in 0u32..(1 << m) {
            let set: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
            if set.len() > n {
                continue;
            }
            let k = set.len();
            let mut kkt = DMatrix::zeros(n + k, n + k);
            let mut rhs = DVector::zeros(n + k);
            kkt.view_mut((0, 0), (n, n)).copy_from(&qp.h);
            for i in 0..n {
                rhs[i] = -qp.g[i];
            }
            for (c, &row) in set.iter().enumerate() {
                for i in 0..n {
                    kkt[(i, n + c)] = -qp.row(row)[i];
                    kkt[(n + c, i)] = qp.row(row)[i];
                }
                rhs[n + c] = qp.rhs(row);
            }
            let Some(sol) = kkt.lu().solve(&rhs) else {
                continue;
            };
            let x = sol.rows(0, n).into_owned();
            if (0..k).any(|c| sol[n + c] < -1e-9) {
                continue;
            }
            if qp.slacks(&x).iter().any(|s| *s < -1e-9) {
                continue;
            }
            let f = qp.objective(&x);
            if best.as_ref().is_none_or(|(bf, _)| f < *bf) {
                best = Some((f, x));
            }
        }
        best.map(|(_, x)| x)
    }

    fn random_qp(rng: &mut ChaCha8Rng, n: usize, m: usize) -> DenseQp {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let h = &a * a.transpose() + DMatrix::identity(n, n) * 0.5;
        let g = DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
        let mut qp = DenseQp::new(h, g);
        for _ in 0..m {
            let row: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            qp.add_row(&row, rng.random_range(-1.0..1.0));
        }
        qp
    }

    #[test]
    fn unconstrained_minimum() {
        let h = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 4.0]);
        let qp = DenseQp::new(h, DVector::from_vec(vec![-2.0, -4.0]));
        let s = qp.solve().unwrap();
        assert!((s.x[0] - 1.0).abs() < 1e-12 && (s.x[1] - 1.0).abs() < 1e-12);
        assert!(s.active.is_empty());
    }

    #[test]
    fn single_active_bound() {
        let h = DMatrix::identity(2, 2);
        let mut qp = DenseQp::new(h, DVector::from_vec(vec![-1.0, -1.0]));
        qp.add_bounds(0, None, Some(0.25));
        let s = qp.solve().unwrap();
        assert!((s.x[0] - 0.25).abs() < 1e-12);
        assert!((s.x[1] - 1.0).abs() < 1e-12);
        assert!((s.multipliers[0] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn infeasible_detected() {
        let mut qp = DenseQp::new(DMatrix::identity(1, 1), DVector::zeros(1));
        qp.add_bounds(0, Some(1.0), Some(0.0));
        assert_eq!(qp.solve().unwrap_err(), QpError::Infeasible);
    }

    #[test]
    fn indefinite_rejected() {
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let qp = DenseQp::new(h, DVector::zeros(2));
        assert_eq!(qp.solve().unwrap_err(), QpError::NotPositiveDefinite);
    }

    #[test]
    fn duplicate_rows_are_harmless() {
        let mut qp = DenseQp::new(DMatrix::identity(2, 2), DVector::from_vec(vec![1.0, 1.0]));
        for _ in 0..3 {
            qp.add_row(&[1.0, 1.0], 1.0);
        }
        let s = qp.solve().unwrap();
        assert!((s.x[0] - 0.5).abs() < 1e-10 && (s.x[1] - 0.5).abs() < 1e-10);
    }

    #[test]
    fn matches_active_set_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut solved = 0;
        for trial in 0..300 {
            let n = 2 + trial % 3;
            let m = 1 + trial % 7;
            let qp = random_qp(&mut rng, n, m);
            let oracle = brute_force(&qp);
            match (qp.solve(), oracle) {
                (Ok(s), Some(x)) => {
                    solved += 1;
                    assert!((&s.x - &x).amax() < 1e-7, "trial {trial}: {} vs {}", s.x, x);
                    assert!(s.multipliers.iter().all(|u| *u >= -1e-9));
                }
                (Err(QpError::Infeasible), None) => {}
                (got, want) => panic!("trial {trial}: solver {got:?} oracle {want:?}"),
            }
        }
        assert!(solved > 200);
    }
}
