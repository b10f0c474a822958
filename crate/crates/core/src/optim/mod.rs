//! Bound-constrained quasi-Newton minimization.
//!
//! Two modes share the curvature memory and reporting:
//!
//! * `lbfgsb`: generalized Cauchy point, subspace minimization over the free
//!   variables and a strong Wolfe line search on the feasible segment;
//! * `projected_lbfgs`: two-loop direction on the free variables with a
//!   projected backtracking search.

mod lbfgsb;
mod line_search;
mod multistart;

pub use lbfgsb::CURVATURE_EPS;
pub use multistart::{multistart, MultiStartReport, StartRun};

use serde::{Deserialize, Serialize};

use crate::autodiff::grad_dual;
use crate::error::{Error, Result};
use crate::problem::ControlProblem;
use crate::pulses::BoundsSpec;
use lbfgsb::{cauchy_point, dot, norm, subspace_minimize, Compact, Memory};
use line_search::{strong_wolfe, Outcome};

/// Anything with a value and gradient on `R^n`.
pub trait Objective: Sync {
    fn dim(&self) -> usize;
    fn value_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)>;
}

impl Objective for ControlProblem {
    fn dim(&self) -> usize {
        self.n_params()
    }

    fn value_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let r = grad_dual(self, x)?;
        Ok((r.loss_value, r.gradient))
    }
}

/// Wraps a closure returning `(f(x), ∇f(x))`.
pub struct FnObjective<F> {
    pub dim: usize,
    pub f: F,
}

impl<F> Objective for FnObjective<F>
where
    F: Fn(&[f64]) -> (f64, Vec<f64>) + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn value_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        Ok((self.f)(x))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimMode {
    #[default]
    Lbfgsb,
    ProjectedLbfgs,
}

impl std::str::FromStr for OptimMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "lbfgsb" => Ok(OptimMode::Lbfgsb),
            "projected_lbfgs" => Ok(OptimMode::ProjectedLbfgs),
            other => Err(format!("unknown mode `{other}` (expected lbfgsb or projected_lbfgs)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimConfig {
    /// Number of stored correction pairs `m`.
    pub memory: usize,
    pub max_iters: usize,
    /// Stop when the projected gradient's infinity norm falls below this.
    pub grad_tol: f64,
    /// Stop when the relative loss decrease falls below this.
    pub f_tol: f64,
    /// Sufficient-decrease constant.
    pub c1: f64,
    /// Curvature constant.
    pub c2: f64,
    pub max_line_search: usize,
    pub bounds: BoundsSpec,
    pub mode: OptimMode,
}

impl OptimConfig {
    pub fn new(bounds: BoundsSpec) -> Self {
        Self {
            memory: 10,
            max_iters: 500,
            grad_tol: 1e-6,
            f_tol: 1e-10,
            c1: 1e-4,
            c2: 0.9,
            max_line_search: 25,
            bounds,
            mode: OptimMode::Lbfgsb,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.memory == 0 {
            return Err(Error::config("optim.memory", "must be >= 1"));
        }
        if !(self.c1 > 0.0 && self.c1 < self.c2 && self.c2 < 1.0) {
            return Err(Error::config(
                "optim.c1",
                format!("need 0 < c1 < c2 < 1 (got c1 = {}, c2 = {})", self.c1, self.c2),
            ));
        }
        for (key, v) in [("optim.grad_tol", self.grad_tol), ("optim.f_tol", self.f_tol)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(key, "must be finite and >= 0"));
            }
        }
        if self.max_line_search == 0 {
            return Err(Error::config("optim.max_line_search", "must be >= 1"));
        }
        self.bounds.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GradTol,
    FTol,
    MaxIters,
    LineSearchFail,
}

/// One accepted iterate (iteration 0 is the starting point).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Iterate {
    pub iter: usize,
    pub loss: f64,
    /// Infinity norm of `P(x − g) − x`.
    pub pgnorm: f64,
    /// `|x_k − x_{k−1}|₂`.
    pub step: f64,
    pub params: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OptimReport {
    pub best_params: Vec<f64>,
    pub best_loss: f64,
    pub iterates: Vec<Iterate>,
    pub termination: Termination,
    pub loss_evals: usize,
    pub grad_evals: usize,
}

/// Infinity norm of the projected gradient step `P(x − g) − x`.
pub fn projected_gradient_norm(x: &[f64], g: &[f64], bounds: &BoundsSpec) -> f64 {
    x.iter()
        .zip(g)
        .zip(bounds.pairs())
        .map(|((&xi, &gi), (l, u))| ((xi - gi).clamp(l, u) - xi).abs())
        .fold(0.0, f64::max)
}

/// `−H·grad` by the two-loop recursion over the newest `m` pairs, with
/// `H₀ = γI`, `γ = s·y / y·y` of the newest pair.
pub fn two_loop_direction(grad: &[f64], history: &[(Vec<f64>, Vec<f64>)], m: usize) -> Vec<f64> {
    let pairs = &history[history.len().saturating_sub(m)..];
    let mut q = grad.to_vec();
    if pairs.is_empty() {
        q.iter_mut().for_each(|v| *v = -*v);
        return q;
    }
    let mut alphas = vec![0.0; pairs.len()];
    for (k, (s, y)) in pairs.iter().enumerate().rev() {
        let rho = 1.0 / dot(s, y);
        let a = rho * dot(s, &q);
        alphas[k] = a;
        q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
    }
    let (s, y) = pairs.last().expect("non-empty");
    let gamma = dot(s, y) / dot(y, y);
    q.iter_mut().for_each(|v| *v *= gamma);
    for (k, (s, y)) in pairs.iter().enumerate() {
        let rho = 1.0 / dot(s, y);
        let b = rho * dot(y, &q);
        q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (alphas[k] - b) * si);
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

struct Counters {
    evals: usize,
}

impl Counters {
    fn eval<O: Objective + ?Sized>(&mut self, obj: &O, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.evals += 1;
        obj.value_and_gradient(x)
    }
}

/// Minimizes `obj` over the box, calling `on_iterate` after each accepted
/// step (and once for the start point).
pub fn minimize<O, C>(x0: &[f64], obj: &O, cfg: &OptimConfig, mut on_iterate: C) -> Result<OptimReport>
where
    O: Objective + ?Sized,
    C: FnMut(&Iterate),
{
    cfg.validate()?;
    let n = obj.dim();
    if x0.len() != n || cfg.bounds.len() != n {
        return Err(Error::Dimension(format!(
            "start has {} entries, bounds {}, objective {n}",
            x0.len(),
            cfg.bounds.len()
        )));
    }
    let lower = &cfg.bounds.lower;
    let upper = &cfg.bounds.upper;
    let mut x = x0.to_vec();
    if !cfg.bounds.contains(&x) {
        log::warn!("start point outside the bounds; clamping");
        cfg.bounds.project(&mut x);
    }
    let mut counters = Counters { evals: 0 };
    let (mut f, mut g) = counters.eval(obj, &x)?;
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!("non-finite loss or gradient at the start point (loss = {f})")));
    }
    let mut pg = projected_gradient_norm(&x, &g, &cfg.bounds);
    let start = Iterate { iter: 0, loss: f, pgnorm: pg, step: 0.0, params: x.clone() };
    on_iterate(&start);
    let mut iterates = vec![start];
    let mut memory = Memory::new(cfg.memory);
    let mut termination = Termination::MaxIters;

    for iter in 1..=cfg.max_iters {
        if pg <= cfg.grad_tol {
            termination = Termination::GradTol;
            break;
        }
        let step = match cfg.mode {
            OptimMode::Lbfgsb => lbfgsb_step(obj, &mut counters, &x, f, &g, lower, upper, &mut memory, cfg)?,
            OptimMode::ProjectedLbfgs => projected_step(obj, &mut counters, &x, f, &g, &mut memory, cfg)?,
        };
        let Some((x_new, f_new, g_new)) = step else {
            termination = Termination::LineSearchFail;
            break;
        };
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let step_len = norm(&s);
        memory.push(s, y);
        let decrease = f - f_new;
        x = x_new;
        g = g_new;
        let f_old = f;
        f = f_new;
        pg = projected_gradient_norm(&x, &g, &cfg.bounds);
        let it = Iterate { iter, loss: f, pgnorm: pg, step: step_len, params: x.clone() };
        on_iterate(&it);
        iterates.push(it);
        if pg <= cfg.grad_tol {
            termination = Termination::GradTol;
            break;
        }
        if decrease <= cfg.f_tol * f_old.abs().max(f.abs()).max(1.0) {
            termination = Termination::FTol;
            break;
        }
    }

    let best = iterates
        .iter()
        .min_by(|a, b| a.loss.total_cmp(&b.loss))
        .expect("at least the start iterate");
    Ok(OptimReport {
        best_params: best.params.clone(),
        best_loss: best.loss,
        termination,
        loss_evals: counters.evals,
        grad_evals: counters.evals,
        iterates,
    })
}

type Accepted = Option<(Vec<f64>, f64, Vec<f64>)>;

/// One L-BFGS-B iteration. Resets the memory and retries once with the
/// identity model if the search direction or the line search fails.
#[allow(clippy::too_many_arguments)]
fn lbfgsb_step<O: Objective + ?Sized>(
    obj: &O,
    counters: &mut Counters,
    x: &[f64],
    f: f64,
    g: &[f64],
    lower: &[f64],
    upper: &[f64],
    memory: &mut Memory,
    cfg: &OptimConfig,
) -> Result<Accepted> {
    loop {
        let n = x.len();
        let compact = match Compact::from_memory(memory, n) {
            Some(c) => c,
            None => {
                memory.clear();
                Compact::identity(n)
            }
        };
        let (xcp, c) = cauchy_point(x, g, lower, upper, &compact);
        let xbar = subspace_minimize(x, g, lower, upper, &xcp, &c, &compact);
        let mut d: Vec<f64> = xbar.iter().zip(x).map(|(a, b)| a - b).collect();
        if dot(g, &d) >= 0.0 {
            d = xcp.iter().zip(x).map(|(a, b)| a - b).collect();
        }
        let d0 = dot(g, &d);
        if d0 < 0.0 {
            let alpha_init = if memory.is_empty() { (1.0 / norm(&d)).min(1.0) } else { 1.0 };
            if let Some(found) = search_segment(obj, counters, x, f, &d, d0, alpha_init, cfg)? {
                return Ok(Some(found));
            }
        }
        if memory.is_empty() {
            return Ok(None);
        }
        memory.clear();
    }
}

/// Strong Wolfe search on `x + α·d`, `α ∈ (0, 1]`; `x + d` is feasible.
#[allow(clippy::too_many_arguments)]
fn search_segment<O: Objective + ?Sized>(
    obj: &O,
    counters: &mut Counters,
    x: &[f64],
    f: f64,
    d: &[f64],
    d0: f64,
    alpha_init: f64,
    cfg: &OptimConfig,
) -> Result<Accepted> {
    let mut hard_error = None;
    let outcome = strong_wolfe(
        |alpha| {
            let mut xt: Vec<f64> = x.iter().zip(d).map(|(a, b)| a + alpha * b).collect();
            cfg.bounds.project(&mut xt);
            match counters.eval(obj, &xt) {
                Ok((ft, gt)) => {
                    let slope = dot(&gt, d);
                    Some((ft, slope, (xt, gt)))
                }
                Err(e) if e.is_config() => {
                    hard_error = Some(e);
                    None
                }
                Err(_) => None,
            }
        },
        f,
        d0,
        alpha_init,
        1.0,
        cfg.c1,
        cfg.c2,
        cfg.max_line_search,
    );
    if let Some(e) = hard_error {
        return Err(e);
    }
    Ok(match outcome {
        Outcome::Converged(t) => Some((t.payload.0, t.value, t.payload.1)),
        Outcome::Exhausted(Some(t)) if t.value < f => Some((t.payload.0, t.value, t.payload.1)),
        Outcome::Exhausted(_) => None,
    })
}

/// One projected L-BFGS iteration with backtracking.
fn projected_step<O: Objective + ?Sized>(
    obj: &O,
    counters: &mut Counters,
    x: &[f64],
    f: f64,
    g: &[f64],
    memory: &mut Memory,
    cfg: &OptimConfig,
) -> Result<Accepted> {
    let bounds = &cfg.bounds;
    let active: Vec<bool> = x
        .iter()
        .zip(g)
        .zip(bounds.pairs())
        .map(|((&xi, &gi), (l, u))| (xi <= l && gi > 0.0) || (xi >= u && gi < 0.0))
        .collect();
    loop {
        let masked: Vec<f64> = g.iter().zip(&active).map(|(&gi, &a)| if a { 0.0 } else { gi }).collect();
        let pairs: Vec<(Vec<f64>, Vec<f64>)> = memory
            .pairs()
            .into_iter()
            .map(|(s, y)| {
                let mask = |v: Vec<f64>| v.into_iter().zip(&active).map(|(vi, &a)| if a { 0.0 } else { vi }).collect();
                (mask(s), mask(y))
            })
            .filter(|(s, y): &(Vec<f64>, Vec<f64>)| dot(s, y) > CURVATURE_EPS * norm(s) * norm(y))
            .collect();
        let mut d = two_loop_direction(&masked, &pairs, cfg.memory);
        d.iter_mut().zip(&active).for_each(|(di, &a)| {
            if a {
                *di = 0.0
            }
        });
        if dot(g, &d) >= 0.0 {
            d = masked.iter().map(|v| -v).collect();
        }
        if dot(g, &d) < 0.0 {
            let mut alpha = if memory.is_empty() { (1.0 / norm(&d)).min(1.0) } else { 1.0 };
            for _ in 0..cfg.max_line_search {
                let mut xt: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + alpha * b).collect();
                bounds.project(&mut xt);
                let moved: Vec<f64> = xt.iter().zip(x).map(|(a, b)| a - b).collect();
                match counters.eval(obj, &xt) {
                    Ok((ft, gt)) if ft.is_finite() && ft <= f + cfg.c1 * dot(g, &moved) && ft < f => {
                        return Ok(Some((xt, ft, gt)));
                    }
                    Err(e) if e.is_config() => return Err(e),
                    _ => alpha *= 0.5,
                }
            }
        }
        if memory.is_empty() {
            return Ok(None);
        }
        memory.clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;

    fn quadratic(c: Vec<f64>) -> FnObjective<impl Fn(&[f64]) -> (f64, Vec<f64>) + Sync> {
        let n = c.len();
        FnObjective {
            dim: n,
            f: move |x: &[f64]| {
                let f = x.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum();
                let g = x.iter().zip(&c).map(|(a, b)| 2.0 * (a - b)).collect();
                (f, g)
            },
        }
    }

    fn rosenbrock() -> FnObjective<impl Fn(&[f64]) -> (f64, Vec<f64>) + Sync> {
        FnObjective {
            dim: 2,
            f: |x: &[f64]| {
                let (a, b) = (x[0], x[1]);
                let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
                let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
                (f, g)
            },
        }
    }

    fn config(lo: f64, hi: f64, n: usize, mode: OptimMode) -> OptimConfig {
        let mut cfg = OptimConfig::new(BoundsSpec::from_pairs(&vec![(lo, hi); n]));
        cfg.mode = mode;
        cfg
    }

    const MODES: [OptimMode; 2] = [OptimMode::Lbfgsb, OptimMode::ProjectedLbfgs];

    #[test]
    fn empty_history_is_steepest_descent() {
        assert_eq!(two_loop_direction(&[1.0, -2.0], &[], 5), vec![-1.0, 2.0]);
    }

    #[test]
    fn identity_pair_is_a_fixpoint() {
        let d = two_loop_direction(&[0.3, -1.0, 2.0], &[(vec![1.0, 2.0, 0.5], vec![1.0, 2.0, 0.5])], 5);
        for (a, b) in d.iter().zip([-0.3, 1.0, -2.0]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn conjugate_pairs_give_the_newton_direction() {
        let a = DMatrix::from_row_slice(
            4,
            4,
            &[5.0, 1.0, 0.5, 0.0, 1.0, 4.0, 0.3, 0.2, 0.5, 0.3, 3.0, 0.1, 0.0, 0.2, 0.1, 2.0],
        );
        // A-conjugate directions by Gram–Schmidt in the A inner product.
        let mut dirs: Vec<DVector<f64>> = Vec::new();
        for k in 0..4 {
            let mut v = DVector::from_fn(4, |i, _| if i == k { 1.0 } else { 0.3 * (i as f64 + 1.0) });
            for p in &dirs {
                v -= p * (p.dot(&(&a * &v)) / p.dot(&(&a * p)));
            }
            dirs.push(v);
        }
        let history: Vec<(Vec<f64>, Vec<f64>)> =
            dirs.iter().map(|s| (s.as_slice().to_vec(), (&a * s).as_slice().to_vec())).collect();
        let g = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
        let newton = -a.clone().lu().solve(&g).unwrap();
        let d = two_loop_direction(g.as_slice(), &history, 10);
        for i in 0..4 {
            assert!((d[i] - newton[i]).abs() < 1e-6, "{i}: {} vs {}", d[i], newton[i]);
        }
    }

    #[test]
    fn quadratic_with_interior_minimum() {
        let c = vec![0.3, -1.2, 1.7, 0.0, -0.4];
        for mode in MODES {
            let r = minimize(&[1.5; 5], &quadratic(c.clone()), &config(-2.0, 2.0, 5, mode), |_| {}).unwrap();
            assert!(r.iterates.len() <= 31, "{mode:?}: {} iterations", r.iterates.len() - 1);
            for (a, b) in r.best_params.iter().zip(&c) {
                assert!((a - b).abs() < 1e-8, "{mode:?}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn quadratic_with_exterior_minimum_lands_on_projection() {
        let c = vec![3.0, -0.5, -7.0, 1.9];
        let cfg_bounds = BoundsSpec::from_pairs(&[(-2.0, 2.0); 4]);
        let mut expect = c.clone();
        cfg_bounds.project(&mut expect);
        for mode in MODES {
            let r = minimize(&[0.0; 4], &quadratic(c.clone()), &config(-2.0, 2.0, 4, mode), |_| {}).unwrap();
            for (a, b) in r.best_params.iter().zip(&expect) {
                assert!((a - b).abs() < 1e-8, "{mode:?}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn rosenbrock_in_box() {
        for mode in MODES {
            let mut cfg = config(-2.0, 2.0, 2, mode);
            cfg.grad_tol = 1e-9;
            cfg.f_tol = 0.0;
            let r = minimize(&[-1.2, 1.0], &rosenbrock(), &cfg, |_| {}).unwrap();
            let n_iter = r.iterates.len() - 1;
            assert!(n_iter <= 200, "{mode:?}: {n_iter} iterations");
            assert!((r.best_params[0] - 1.0).abs() < 1e-6, "{mode:?}: {:?}", r.best_params);
            assert!((r.best_params[1] - 1.0).abs() < 1e-6, "{mode:?}: {:?}", r.best_params);
        }
    }

    #[test]
    fn both_modes_agree_on_convex_quadratic() {
        let c = vec![2.5, 0.1, -3.0];
        let runs: Vec<Vec<f64>> = MODES
            .iter()
            .map(|&m| minimize(&[0.5; 3], &quadratic(c.clone()), &config(-2.0, 2.0, 3, m), |_| {}).unwrap().best_params)
            .collect();
        for (a, b) in runs[0].iter().zip(&runs[1]) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn start_outside_is_clamped_and_nan_start_is_an_error() {
        let r = minimize(&[5.0, 5.0], &quadratic(vec![0.0, 0.0]), &config(-1.0, 1.0, 2, OptimMode::Lbfgsb), |_| {}).unwrap();
        assert_eq!(r.iterates[0].params, vec![1.0, 1.0]);
        let bad = FnObjective { dim: 1, f: |_: &[f64]| (f64::NAN, vec![0.0]) };
        assert!(minimize(&[0.0], &bad, &config(-1.0, 1.0, 1, OptimMode::Lbfgsb), |_| {}).is_err());
    }

    #[test]
    fn deterministic_reports() {
        let cfg = config(-2.0, 2.0, 2, OptimMode::Lbfgsb);
        let a = minimize(&[-1.2, 1.0], &rosenbrock(), &cfg, |_| {}).unwrap();
        let b = minimize(&[-1.2, 1.0], &rosenbrock(), &cfg, |_| {}).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_config() {
        let mut cfg = config(-1.0, 1.0, 1, OptimMode::Lbfgsb);
        cfg.c1 = 0.95;
        assert!(cfg.validate().is_err());
        cfg.c1 = 1e-4;
        cfg.memory = 0;
        assert!(cfg.validate().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn iterates_stay_feasible_and_losses_decrease(
            c in prop::collection::vec(-4.0f64..4.0, 3),
            scale in prop::collection::vec(0.1f64..10.0, 3),
            x0 in prop::collection::vec(-1.0f64..1.0, 3),
            projected in prop::bool::ANY,
        ) {
            // Anisotropic quadratic plus a quartic coupling term.
            let obj = FnObjective {
                dim: 3,
                f: move |x: &[f64]| {
                    let mut f = 0.0;
                    let mut g = vec![0.0; 3];
                    for i in 0..3 {
                        let r = x[i] - c[i];
                        f += scale[i] * r * r;
                        g[i] += 2.0 * scale[i] * r;
                    }
                    let q = x[0] * x[1];
                    f += 0.1 * q * q;
                    g[0] += 0.2 * q * x[1];
                    g[1] += 0.2 * q * x[0];
                    (f, g)
                },
            };
            let mode = if projected { OptimMode::ProjectedLbfgs } else { OptimMode::Lbfgsb };
            let cfg = config(-1.0, 1.0, 3, mode);
            let mut seen = Vec::new();
            let r = minimize(&x0, &obj, &cfg, |it| seen.push(it.clone())).unwrap();
            prop_assert_eq!(&seen, &r.iterates);
            for it in &r.iterates {
                prop_assert!(cfg.bounds.contains(&it.params));
            }
            for w in r.iterates.windows(2) {
                prop_assert!(w[1].loss <= w[0].loss);
            }
            prop_assert_eq!(r.best_loss, r.iterates.last().unwrap().loss);
        }
    }
}
