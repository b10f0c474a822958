//! Compact limited-memory BFGS matrices, the generalized Cauchy point and
//! subspace minimization for box constraints.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

/// Relative curvature threshold below which an `(s, y)` pair is skipped.
pub const CURVATURE_EPS: f64 = 1e-10;

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// The `m` most recent correction pairs.
#[derive(Clone, Debug, Default)]
pub(crate) struct Memory {
    pub s: VecDeque<Vec<f64>>,
    pub y: VecDeque<Vec<f64>>,
    pub capacity: usize,
}

impl Memory {
    pub fn new(capacity: usize) -> Self {
        Self {
            s: VecDeque::with_capacity(capacity),
            y: VecDeque::with_capacity(capacity),
            capacity,
        }
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn clear(&mut self) {
        self.s.clear();
        self.y.clear();
    }

    /// Stores the pair unless `s·y ≤ ε|s||y|`. Returns whether it was kept.
    pub fn push(&mut self, s: Vec<f64>, y: Vec<f64>) -> bool {
        let sy = dot(&s, &y);
        if !(sy > CURVATURE_EPS * norm(&s) * norm(&y)) {
            return false;
        }
        if self.s.len() == self.capacity {
            self.s.pop_front();
            self.y.pop_front();
        }
        self.s.push_back(s);
        self.y.push_back(y);
        true
    }

    /// `θ = y·y / s·y` of the newest pair, 1 when empty.
    pub fn theta(&self) -> f64 {
        match (self.s.back(), self.y.back()) {
            (Some(s), Some(y)) => dot(y, y) / dot(s, y),
            _ => 1.0,
        }
    }

    pub fn pairs(&self) -> Vec<(Vec<f64>, Vec<f64>)> {
        self.s.iter().cloned().zip(self.y.iter().cloned()).collect()
    }
}

/// `B = θI − W M Wᵀ` with `W = [Y, θS]`.
pub(crate) struct Compact {
    pub theta: f64,
    pub w: DMatrix<f64>,
    pub m: DMatrix<f64>,
}

impl Compact {
    pub fn identity(n: usize) -> Self {
        Self {
            theta: 1.0,
            w: DMatrix::zeros(n, 0),
            m: DMatrix::zeros(0, 0),
        }
    }

    /// `None` when the middle matrix is singular.
    pub fn from_memory(mem: &Memory, n: usize) -> Option<Self> {
        let k = mem.len();
        if k == 0 {
            return Some(Self::identity(n));
        }
        let theta = mem.theta();
        let s = DMatrix::from_fn(n, k, |i, j| mem.s[j][i]);
        let y = DMatrix::from_fn(n, k, |i, j| mem.y[j][i]);
        let sy = s.transpose() * &y;
        let ss = s.transpose() * &s;
        let mut middle = DMatrix::zeros(2 * k, 2 * k);
        for i in 0..k {
            middle[(i, i)] = -sy[(i, i)];
            for j in 0..k {
                if i > j {
                    // L in the lower-left block, Lᵀ in the upper-right.
                    middle[(k + i, j)] = sy[(i, j)];
                    middle[(j, k + i)] = sy[(i, j)];
                }
                middle[(k + i, k + j)] = theta * ss[(i, j)];
            }
        }
        let m = middle.try_inverse()?;
        let mut w = DMatrix::zeros(n, 2 * k);
        w.view_mut((0, 0), (n, k)).copy_from(&y);
        w.view_mut((0, k), (n, k)).copy_from(&(s * theta));
        Some(Self { theta, w, m })
    }

    fn cols(&self) -> usize {
        self.w.ncols()
    }

    fn row(&self, i: usize) -> DVector<f64> {
        self.w.row(i).transpose()
    }
}

/// Generalized Cauchy point: first local minimizer of the quadratic model
/// along the projected steepest-descent path. Returns `(x_cp, c)` where
/// `c = Wᵀ(x_cp − x)`.
pub(crate) fn cauchy_point(
    x: &[f64],
    g: &[f64],
    lower: &[f64],
    upper: &[f64],
    b: &Compact,
) -> (Vec<f64>, DVector<f64>) {
    let n = x.len();
    let theta = b.theta;
    let mut t = vec![f64::INFINITY; n];
    let mut d = vec![0.0; n];
    for i in 0..n {
        if g[i] < 0.0 {
            t[i] = (x[i] - upper[i]) / g[i];
        } else if g[i] > 0.0 {
            t[i] = (x[i] - lower[i]) / g[i];
        }
        if t[i] > 0.0 {
            d[i] = -g[i];
        }
    }
    let mut xcp = x.to_vec();
    let mut c = DVector::zeros(b.cols());
    let dv = DVector::from_column_slice(&d);
    let mut p = b.w.transpose() * &dv;
    let mut fp = -dot(&d, &d);
    if fp == 0.0 {
        return (xcp, c);
    }
    let mut fpp = -theta * fp - p.dot(&(&b.m * &p));
    let floor = f64::EPSILON * fp.abs();
    fpp = fpp.max(floor);
    let mut dt_min = -fp / fpp;

    let mut order: Vec<usize> = (0..n).filter(|&i| t[i] > 0.0 && t[i].is_finite()).collect();
    order.sort_by(|&a, &bb| t[a].total_cmp(&t[bb]).then(a.cmp(&bb)));
    let mut t_old = 0.0;
    for &i in &order {
        let dt = t[i] - t_old;
        if dt_min < dt {
            break;
        }
        xcp[i] = if d[i] > 0.0 { upper[i] } else { lower[i] };
        let z = xcp[i] - x[i];
        c += &p * dt;
        let gi = g[i];
        let wi = b.row(i);
        let m_c = &b.m * &c;
        let m_p = &b.m * &p;
        let m_w = &b.m * &wi;
        fp += dt * fpp + gi * gi + theta * gi * z - gi * wi.dot(&m_c);
        fpp += -theta * gi * gi - 2.0 * gi * wi.dot(&m_p) - gi * gi * wi.dot(&m_w);
        p += &wi * gi;
        d[i] = 0.0;
        t_old = t[i];
        fpp = fpp.max(f64::EPSILON * fp.abs());
        dt_min = if fp >= 0.0 { 0.0 } else { -fp / fpp };
    }
    let dt_min = dt_min.max(0.0);
    let t_final = t_old + dt_min;
    for i in 0..n {
        if d[i] != 0.0 {
            xcp[i] = (x[i] + t_final * d[i]).clamp(lower[i], upper[i]);
        }
    }
    c += &p * dt_min;
    (xcp, c)
}

/// Direct primal subspace minimization over the variables that are free at
/// the Cauchy point, followed by projection onto the box. Returns the trial
/// point `x̄`.
pub(crate) fn subspace_minimize(
    x: &[f64],
    g: &[f64],
    lower: &[f64],
    upper: &[f64],
    xcp: &[f64],
    c: &DVector<f64>,
    b: &Compact,
) -> Vec<f64> {
    let n = x.len();
    let free: Vec<usize> = (0..n).filter(|&i| xcp[i] > lower[i] && xcp[i] < upper[i]).collect();
    if free.is_empty() {
        return xcp.to_vec();
    }
    let theta = b.theta;
    let k2 = b.cols();
    let mc = &b.m * c;
    let r: DVector<f64> = DVector::from_iterator(
        free.len(),
        free.iter().map(|&i| g[i] + theta * (xcp[i] - x[i]) - b.w.row(i).transpose().dot(&mc)),
    );
    let mut du = -&r / theta;
    if k2 > 0 {
        let wz = DMatrix::from_fn(free.len(), k2, |a, j| b.w[(free[a], j)]);
        let v = &b.m * (wz.transpose() * &r);
        let nmat = DMatrix::identity(k2, k2) - (&b.m * (wz.transpose() * &wz)) / theta;
        if let Some(v) = nmat.lu().solve(&v) {
            du -= (wz * v) / (theta * theta);
        }
    }
    let mut xbar = xcp.to_vec();
    for (a, &i) in free.iter().enumerate() {
        xbar[i] = (xcp[i] + du[a]).clamp(lower[i], upper[i]);
    }
    // The projected point must give a descent direction; otherwise fall back
    // to the largest feasible step along the unprojected subspace step.
    let dir: Vec<f64> = (0..n).map(|i| xbar[i] - x[i]).collect();
    if dot(g, &dir) < 0.0 {
        return xbar;
    }
    let mut alpha: f64 = 1.0;
    for (a, &i) in free.iter().enumerate() {
        let step = du[a];
        if step > 0.0 {
            alpha = alpha.min((upper[i] - xcp[i]) / step);
        } else if step < 0.0 {
            alpha = alpha.min((lower[i] - xcp[i]) / step);
        }
    }
    let mut xbar = xcp.to_vec();
    for (a, &i) in free.iter().enumerate() {
        xbar[i] = (xcp[i] + alpha * du[a]).clamp(lower[i], upper[i]);
    }
    xbar
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cauchy_point_on_identity_model_is_projected_gradient_step() {
        // Model ½|d|² + gᵀd: unconstrained minimizer x − g.
        let x = [0.0, 0.0, 0.0];
        let g = [1.0, -3.0, 0.5];
        let lo = [-2.0, -2.0, -2.0];
        let hi = [2.0, 2.0, 2.0];
        let (xcp, _) = cauchy_point(&x, &g, &lo, &hi, &Compact::identity(3));
        // The quadratic along the bent path keeps decreasing until t = 1 for
        // the free coordinates once the second one has hit its bound.
        assert!((xcp[1] - 2.0).abs() < 1e-15);
        assert!((xcp[0] + 1.0).abs() < 1e-12, "{xcp:?}");
        assert!((xcp[2] + 0.5).abs() < 1e-12);
    }

    #[test]
    fn compact_form_matches_bfgs_recursion() {
        // Two curvature pairs of a 3-D quadratic; compare B from the compact
        // representation against explicit BFGS updates from B0 = θI.
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 2.0]);
        let s1 = DVector::from_vec(vec![1.0, 0.0, 0.5]);
        let s2 = DVector::from_vec(vec![0.0, 1.0, -0.3]);
        let y1 = &a * &s1;
        let y2 = &a * &s2;
        let mut mem = Memory::new(5);
        assert!(mem.push(s1.as_slice().to_vec(), y1.as_slice().to_vec()));
        assert!(mem.push(s2.as_slice().to_vec(), y2.as_slice().to_vec()));
        let c = Compact::from_memory(&mem, 3).unwrap();
        let compact = DMatrix::identity(3, 3) * c.theta - &c.w * &c.m * c.w.transpose();
        let mut b = DMatrix::identity(3, 3) * c.theta;
        for (s, y) in [(&s1, &y1), (&s2, &y2)] {
            let bs = &b * s;
            b = &b - (&bs * bs.transpose()) / s.dot(&bs) + (y * y.transpose()) / y.dot(s);
        }
        assert!((compact - b).abs().max() < 1e-12);
    }

    #[test]
    fn memory_rejects_bad_curvature_and_evicts_oldest() {
        let mut mem = Memory::new(2);
        assert!(!mem.push(vec![1.0, 0.0], vec![-1.0, 0.0]));
        assert!(!mem.push(vec![1.0, 0.0], vec![0.0, 1.0]));
        assert!(mem.push(vec![1.0, 0.0], vec![1.0, 0.0]));
        assert!(mem.push(vec![0.0, 1.0], vec![0.0, 2.0]));
        assert!(mem.push(vec![1.0, 1.0], vec![3.0, 3.0]));
        assert_eq!(mem.len(), 2);
        assert_eq!(mem.s[0], vec![0.0, 1.0]);
        assert_eq!(mem.theta(), 3.0);
    }
}
