//! Dormand–Prince 5(4) embedded pair with PI step-size control and the
//! standard fourth-order continuous extension.
//!
//! Step-size decisions only look at value parts, so when the state carries
//! dual numbers the step sequence is identical to the plain `f64` run and
//! derivatives flow through a fixed discretization.

use crate::autodiff::Scalar;

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// Fifth-order weights minus embedded fourth-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

// Dense output.
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Absolute / relative tolerances for the scaled RMS error norm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    pub rel: f64,
    pub abs: f64,
}

impl Tolerances {
    /// `sqrt(mean((e_i / (abs + rel·max(|y_i|, |ŷ_i|)))²))`.
    pub fn error_norm<S: Scalar>(&self, err: &[f64], y: &[S], y_new: &[S]) -> f64 {
        let mut acc = 0.0;
        for ((e, a), b) in err.iter().zip(y).zip(y_new) {
            let sc = self.abs + self.rel * a.value().abs().max(b.value().abs());
            let r = e / sc;
            acc += r * r;
        }
        (acc / err.len().max(1) as f64).sqrt()
    }
}

/// PI controller on the scaled error norm (Hairer–Wanner form).
#[derive(Clone, Debug)]
pub struct PiController {
    pub safety: f64,
    pub beta: f64,
    pub min_factor: f64,
    pub max_factor: f64,
    err_old: f64,
    rejected: bool,
}

impl Default for PiController {
    fn default() -> Self {
        Self {
            safety: 0.9,
            beta: 0.04,
            min_factor: 0.2,
            max_factor: 10.0,
            err_old: 1e-4,
            rejected: false,
        }
    }
}

impl PiController {
    fn exponent(&self) -> f64 {
        0.2 - 0.75 * self.beta
    }

    /// Next step after accepting a step of size `h` with error norm `err`.
    pub fn accept(&mut self, err: f64, h: f64) -> f64 {
        let fac11 = err.powf(self.exponent());
        let fac = (fac11 / self.err_old.powf(self.beta) / self.safety)
            .clamp(1.0 / self.max_factor, 1.0 / self.min_factor);
        let mut h_new = h / fac;
        if self.rejected {
            h_new = h_new.min(h);
        }
        self.err_old = err.max(1e-4);
        self.rejected = false;
        h_new
    }

    /// Retry size after rejecting a step of size `h`.
    pub fn reject(&mut self, err: f64, h: f64) -> f64 {
        let fac11 = err.powf(self.exponent());
        self.rejected = true;
        h / (fac11 / self.safety).min(1.0 / self.min_factor)
    }

    /// Accepts or rejects by `err ≤ 1` and returns `(accepted, next_step)`.
    pub fn propose(&mut self, err: f64, h: f64) -> (bool, f64) {
        if err <= 1.0 {
            (true, self.accept(err, h))
        } else {
            (false, self.reject(err, h))
        }
    }
}

/// Stage buffers for one Dormand–Prince step.
#[derive(Clone, Debug)]
pub struct Dopri5<S> {
    /// `k[0]` holds `f(t, y)` on entry; after a step `k[6] = f(t+h, y_new)`.
    pub k: [Vec<S>; 7],
    pub y_new: Vec<S>,
    pub err: Vec<f64>,
    tmp: Vec<S>,
}

impl<S: Scalar> Dopri5<S> {
    pub fn new(dim: usize) -> Self {
        let z = vec![S::zero(); dim];
        Self {
            k: std::array::from_fn(|_| z.clone()),
            y_new: z.clone(),
            err: vec![0.0; dim],
            tmp: z,
        }
    }

    /// Advances from `(t, y)` by `h`, assuming `self.k[0] = f(t, y)`. Fills
    /// `y_new`, the stages and the (value-only) local error estimate.
    pub fn step<F>(&mut self, f: &mut F, t: f64, y: &[S], h: f64)
    where
        F: FnMut(f64, &[S], &mut [S]),
    {
        let n = y.len();
        macro_rules! stage {
            ($out:expr, $c:expr, [$(($a:expr, $kk:expr)),*]) => {{
                for i in 0..n {
                    let mut acc = S::zero();
                    $( acc += self.k[$kk][i] * $a; )*
                    self.tmp[i] = y[i] + acc * h;
                }
                let (head, tail) = self.k.split_at_mut($out);
                let _ = head;
                f(t + $c * h, &self.tmp, &mut tail[0]);
            }};
        }
        stage!(1, C2, [(A21, 0)]);
        stage!(2, C3, [(A31, 0), (A32, 1)]);
        stage!(3, C4, [(A41, 0), (A42, 1), (A43, 2)]);
        stage!(4, C5, [(A51, 0), (A52, 1), (A53, 2), (A54, 3)]);
        stage!(5, 1.0, [(A61, 0), (A62, 1), (A63, 2), (A64, 3), (A65, 4)]);
        for i in 0..n {
            let k = &self.k;
            let acc = k[0][i] * A71 + k[2][i] * A73 + k[3][i] * A74 + k[4][i] * A75 + k[5][i] * A76;
            self.y_new[i] = y[i] + acc * h;
        }
        f(t + h, &self.y_new, &mut self.k[6]);
        for i in 0..n {
            let k = &self.k;
            self.err[i] = h
                * (E1 * k[0][i].value()
                    + E3 * k[2][i].value()
                    + E4 * k[3][i].value()
                    + E5 * k[4][i].value()
                    + E6 * k[5][i].value()
                    + E7 * k[6][i].value());
        }
    }

    /// Continuous extension at `t + θh` for the step just taken from `y`.
    pub fn interpolate(&self, y: &[S], h: f64, theta: f64, out: &mut [S]) {
        let k = &self.k;
        let th1 = 1.0 - theta;
        for i in 0..y.len() {
            let r2 = self.y_new[i] - y[i];
            let r3 = k[0][i] * h - r2;
            let r4 = r2 - k[6][i] * h - r3;
            let r5 = (k[0][i] * D1
                + k[2][i] * D3
                + k[3][i] * D4
                + k[4][i] * D5
                + k[5][i] * D6
                + k[6][i] * D7)
                * h;
            out[i] = y[i] + (r2 + (r3 + (r4 + r5 * th1) * theta) * th1) * theta;
        }
    }

    /// Moves the FSAL stage into `k[0]` for the next step.
    pub fn advance(&mut self) {
        self.k.swap(0, 6);
    }
}

/// Outcome of a single free-standing step.
#[derive(Clone, Debug)]
pub struct StepResult<S> {
    pub y: Vec<S>,
    /// Componentwise difference between the fifth- and fourth-order solutions.
    pub error: Vec<f64>,
    pub error_norm: f64,
    pub accepted: bool,
    pub suggested_step: f64,
}

/// One embedded 5(4) step of size `h` from `(t, y)`, with the controller's
/// proposal for the next step size.
pub fn embedded_rk_step<S, F>(
    mut f: F,
    t: f64,
    y: &[S],
    h: f64,
    tol: Tolerances,
    controller: &mut PiController,
) -> StepResult<S>
where
    S: Scalar,
    F: FnMut(f64, &[S], &mut [S]),
{
    let mut rk = Dopri5::new(y.len());
    f(t, y, &mut rk.k[0]);
    rk.step(&mut f, t, y, h);
    let error_norm = tol.error_norm(&rk.err, y, &rk.y_new);
    let (accepted, suggested_step) = controller.propose(error_norm, h);
    StepResult {
        y: rk.y_new,
        error: rk.err,
        error_norm,
        accepted,
        suggested_step,
    }
}

/// Starting step size from two trial derivative evaluations.
pub(crate) fn initial_step<S, F>(f: &mut F, t0: f64, y0: &[S], f0: &[S], tol: Tolerances, span: f64) -> f64
where
    S: Scalar,
    F: FnMut(f64, &[S], &mut [S]),
{
    let scaled = |v: &[f64]| -> f64 {
        let s: f64 = v
            .iter()
            .zip(y0)
            .map(|(x, y)| {
                let sc = tol.abs + tol.rel * y.value().abs();
                (x / sc).powi(2)
            })
            .sum();
        (s / v.len().max(1) as f64).sqrt()
    };
    let yv: Vec<f64> = y0.iter().map(|v| v.value()).collect();
    let fv: Vec<f64> = f0.iter().map(|v| v.value()).collect();
    let d0 = scaled(&yv);
    let d1 = scaled(&fv);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(span);
    let y1: Vec<S> = y0.iter().zip(f0).map(|(&y, &d)| y + d * h0).collect();
    let mut f1 = vec![S::zero(); y0.len()];
    f(t0 + h0, &y1, &mut f1);
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| (a.value() - b.value()) / h0).collect();
    let d2 = scaled(&diff);
    let dmax = d1.max(d2);
    let h1 = if dmax <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / dmax).powf(1.0 / 5.0)
    };
    (100.0 * h0).min(h1).min(span)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn tableau_rows_sum_to_nodes() {
        assert_relative_eq!(A21, C2, epsilon = 1e-15);
        assert_relative_eq!(A31 + A32, C3, epsilon = 1e-15);
        assert_relative_eq!(A41 + A42 + A43, C4, epsilon = 1e-14);
        assert_relative_eq!(A51 + A52 + A53 + A54, C5, epsilon = 1e-13);
        assert_relative_eq!(A61 + A62 + A63 + A64 + A65, 1.0, epsilon = 1e-13);
        assert_relative_eq!(A71 + A73 + A74 + A75 + A76, 1.0, epsilon = 1e-15);
        assert_relative_eq!(E1 + E3 + E4 + E5 + E6 + E7, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn linear_problem_matches_exponential_to_fifth_order() {
        let lambda = -0.7;
        let mut errs = Vec::new();
        for h in [0.2, 0.1] {
            let r = embedded_rk_step(
                |_t, y: &[f64], dy: &mut [f64]| dy[0] = lambda * y[0],
                0.0,
                &[1.0],
                h,
                Tolerances { rel: 1e-8, abs: 1e-10 },
                &mut PiController::default(),
            );
            errs.push((r.y[0] - (lambda * h).exp()).abs());
        }
        // Local error O(h⁶): halving h shrinks it by about 64.
        let ratio = errs[0] / errs[1];
        assert!(ratio > 50.0 && ratio < 80.0, "ratio {ratio}");
        assert!(errs[1] < 1e-9);
    }

    #[test]
    fn constant_solution_has_zero_error_estimate() {
        let r = embedded_rk_step(
            |_t, _y: &[f64], dy: &mut [f64]| dy.iter_mut().for_each(|d| *d = 0.0),
            0.0,
            &[1.0, -2.0],
            0.5,
            Tolerances { rel: 1e-8, abs: 1e-10 },
            &mut PiController::default(),
        );
        assert_eq!(r.error, vec![0.0, 0.0]);
        assert_eq!(r.error_norm, 0.0);
        assert!(r.accepted);
        assert_eq!(r.suggested_step, 5.0);
    }

    #[test]
    fn dense_output_is_accurate_inside_step() {
        // y' = cos(t), y(0) = 0.
        let mut f = |t: f64, _y: &[f64], dy: &mut [f64]| dy[0] = t.cos();
        let mut rk = Dopri5::<f64>::new(1);
        f(0.0, &[0.0], &mut rk.k[0]);
        let h = 0.2;
        rk.step(&mut f, 0.0, &[0.0], h);
        let mut out = [0.0];
        for theta in [0.0, 0.25, 0.5, 0.9, 1.0] {
            rk.interpolate(&[0.0], h, theta, &mut out);
            assert!((out[0] - (theta * h).sin()).abs() < 1e-7, "theta {theta}");
        }
    }

    #[test]
    fn controller_rejects_large_errors_and_shrinks() {
        let mut c = PiController::default();
        let (ok, h) = c.propose(4.0, 1.0);
        assert!(!ok);
        assert!((0.2..1.0).contains(&h));
        // After a rejection the next accepted step may not grow.
        let (ok, h2) = c.propose(1e-3, h);
        assert!(ok);
        assert!(h2 <= h);
    }
}
