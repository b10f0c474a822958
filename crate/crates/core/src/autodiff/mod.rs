//! Forward-mode automatic differentiation and the finite-difference oracle.
//!
//! Gradients are taken of the discretized loss: step-size control only looks
//! at value parts, so the dual pass differentiates exactly the map that the
//! `f64` pass evaluates.

mod dual;
mod scalar;

pub use dual::Dual;
pub use scalar::{sigmoid_f64, softplus_f64, Scalar};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ode::Schedule;
use crate::problem::ControlProblem;
use crate::pulses::param_label;

/// Number of partials carried per dual pass. Problems with more parameters
/// are differentiated in several passes.
pub const GRADIENT_WIDTH: usize = 16;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FdScheme {
    Forward,
    #[default]
    Central,
}

impl std::str::FromStr for FdScheme {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "forward" => Ok(FdScheme::Forward),
            "central" => Ok(FdScheme::Central),
            other => Err(format!("unknown scheme `{other}` (expected forward or central)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMethod {
    Dual,
    FiniteDiff(FdScheme),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradientReport {
    pub gradient: Vec<f64>,
    pub loss_value: f64,
    pub method: GradientMethod,
    /// Loss evaluations: dual passes, or `n + 1` / `2n + 1` for differences.
    pub evaluations: usize,
}

/// Finite-difference settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FdOptions {
    /// Relative step; the absolute step for `p_i` is `h·max(|p_i|, 1)`.
    pub h: f64,
    pub scheme: FdScheme,
    /// Replay the base point's step sequence at the perturbed points, so the
    /// difference quotient sees the same discretization as the dual pass.
    pub frozen_steps: bool,
}

impl Default for FdOptions {
    fn default() -> Self {
        Self {
            h: 1e-4,
            scheme: FdScheme::Central,
            frozen_steps: true,
        }
    }
}

fn dual_pass<const N: usize>(
    problem: &ControlProblem,
    params: &[f64],
    first: usize,
    gradient: &mut [f64],
) -> Result<f64> {
    let seeded: Vec<Dual<N>> = params
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            if i >= first && i < first + N {
                Dual::variable(p, i - first)
            } else {
                Dual::constant(p)
            }
        })
        .collect();
    let total = problem.evaluate(&seeded, Schedule::Adaptive)?.breakdown.total();
    for (k, g) in gradient.iter_mut().skip(first).take(N).enumerate() {
        *g = total.eps[k];
    }
    Ok(total.re)
}

/// Exact gradient of the discretized loss by vector-mode dual numbers.
pub fn grad_dual(problem: &ControlProblem, params: &[f64]) -> Result<GradientReport> {
    let n = params.len();
    let mut gradient = vec![0.0; n];
    let (loss_value, evaluations) = if n <= 4 {
        (dual_pass::<4>(problem, params, 0, &mut gradient)?, 1)
    } else if n <= 8 {
        (dual_pass::<8>(problem, params, 0, &mut gradient)?, 1)
    } else {
        let mut value = 0.0;
        let mut passes = 0;
        for first in (0..n).step_by(GRADIENT_WIDTH) {
            value = dual_pass::<GRADIENT_WIDTH>(problem, params, first, &mut gradient)?;
            passes += 1;
        }
        (value, passes)
    };
    if let Some(i) = gradient.iter().position(|g| !g.is_finite()) {
        return Err(Error::Numerical(format!(
            "non-finite partial derivative for parameter {i} ({})",
            param_label(i)
        )));
    }
    Ok(GradientReport {
        gradient,
        loss_value,
        method: GradientMethod::Dual,
        evaluations,
    })
}

/// Finite-difference gradient of an arbitrary objective. Perturbed points are
/// evaluated in parallel.
pub fn fd_gradient<F>(f: F, params: &[f64], base: f64, h: f64, scheme: FdScheme) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::config("h", format!("relative step must be > 0 (got {h})")));
    }
    (0..params.len())
        .into_par_iter()
        .map(|i| {
            let step = h * params[i].abs().max(1.0);
            let mut x = params.to_vec();
            let plus = params[i] + step;
            x[i] = plus;
            let f_plus = f(&x)?;
            match scheme {
                FdScheme::Forward => Ok((f_plus - base) / (plus - params[i])),
                FdScheme::Central => {
                    let minus = params[i] - step;
                    x[i] = minus;
                    let f_minus = f(&x)?;
                    Ok((f_plus - f_minus) / (plus - minus))
                }
            }
        })
        .collect()
}

fn fd_evaluations(n: usize, scheme: FdScheme) -> usize {
    match scheme {
        FdScheme::Forward => n + 1,
        FdScheme::Central => 2 * n + 1,
    }
}

/// Finite-difference gradient of the control loss.
pub fn grad_fd(problem: &ControlProblem, params: &[f64], opts: FdOptions) -> Result<GradientReport> {
    let base = problem.evaluate(params, Schedule::Adaptive)?;
    let loss_value = base.breakdown.total();
    let gradient = if opts.frozen_steps {
        let log = &base.log;
        // A replayed discretization can be unstable far from the base
        // point; such points are re-integrated adaptively.
        fd_gradient(
            |x| match problem.evaluate(x, Schedule::Replay(log)) {
                Ok(e) if e.breakdown.total().is_finite() => Ok(e.breakdown.total()),
                Ok(_) | Err(Error::Numerical(_)) => problem.loss(x),
                Err(e) => Err(e),
            },
            params,
            loss_value,
            opts.h,
            opts.scheme,
        )?
    } else {
        fd_gradient(|x| problem.loss(x), params, loss_value, opts.h, opts.scheme)?
    };
    Ok(GradientReport {
        gradient,
        loss_value,
        method: GradientMethod::FiniteDiff(opts.scheme),
        evaluations: fd_evaluations(params.len(), opts.scheme),
    })
}

/// `Σ p_i²`, used to self-test the difference machinery.
pub fn quadratic_loss<S: Scalar>(params: &[S]) -> S {
    let mut acc = S::zero();
    for &p in params {
        acc += p * p;
    }
    acc
}

/// Dual and finite-difference gradients of [`quadratic_loss`].
pub fn quadratic_self_test(params: &[f64], opts: FdOptions) -> Result<(GradientReport, GradientReport)> {
    let n = params.len();
    let mut exact = vec![0.0; n];
    for first in (0..n).step_by(GRADIENT_WIDTH) {
        let seeded: Vec<Dual<GRADIENT_WIDTH>> = params
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                if i >= first && i < first + GRADIENT_WIDTH {
                    Dual::variable(p, i - first)
                } else {
                    Dual::constant(p)
                }
            })
            .collect();
        let v = quadratic_loss(&seeded);
        for (k, g) in exact.iter_mut().skip(first).take(GRADIENT_WIDTH).enumerate() {
            *g = v.eps[k];
        }
    }
    let value = quadratic_loss(params);
    let dual = GradientReport {
        gradient: exact,
        loss_value: value,
        method: GradientMethod::Dual,
        evaluations: n.div_ceil(GRADIENT_WIDTH).max(1),
    };
    let fd = GradientReport {
        gradient: fd_gradient(|x| Ok(quadratic_loss(x)), params, value, opts.h, opts.scheme)?,
        loss_value: value,
        method: GradientMethod::FiniteDiff(opts.scheme),
        evaluations: fd_evaluations(n, opts.scheme),
    };
    Ok((dual, fd))
}

/// Largest entry, with any NaN counting as infinite.
pub fn max_error(errors: &[f64]) -> f64 {
    errors
        .iter()
        .map(|&e| if e.is_nan() { f64::INFINITY } else { e })
        .fold(0.0, f64::max)
}

/// `|a − b| / (|a| + floor)` per component.
pub fn relative_errors(reference: &[f64], other: &[f64], floor: f64) -> Vec<f64> {
    reference
        .iter()
        .zip(other)
        .map(|(a, b)| (a - b).abs() / (a.abs() + floor))
        .collect()
}
