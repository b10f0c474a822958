//! Line searches along a feasible direction.

/// One trial point: `φ(α)`, `φ'(α)` and whatever the caller wants back
/// (typically the point and its gradient).
pub(crate) struct Trial<P> {
    pub alpha: f64,
    pub value: f64,
    pub slope: f64,
    pub payload: P,
}

pub(crate) enum Outcome<P> {
    /// Strong Wolfe conditions hold, or sufficient decrease holds at `α_max`.
    Converged(Trial<P>),
    /// Trial budget exhausted; the best point with sufficient decrease, if any.
    Exhausted(Option<Trial<P>>),
}

/// Minimizer of the cubic through `(a, fa, da)` and `(b, fb, db)`.
fn cubic_min(a: f64, fa: f64, da: f64, b: f64, fb: f64, db: f64) -> f64 {
    let d1 = da + db - 3.0 * (fa - fb) / (a - b);
    let disc = d1 * d1 - da * db;
    if !(disc >= 0.0) {
        return f64::NAN;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    b - (b - a) * (db + d2 - d1) / (db - da + 2.0 * d2)
}

/// Strong Wolfe search on `(0, α_max]` (bracketing, then zoom with safeguarded
/// cubic interpolation). `eval` returns `None` when the objective cannot be
/// evaluated at `α`, which is treated as an infinite value.
pub(crate) fn strong_wolfe<P, F>(
    mut eval: F,
    f0: f64,
    d0: f64,
    alpha_init: f64,
    alpha_max: f64,
    c1: f64,
    c2: f64,
    max_trials: usize,
) -> Outcome<P>
where
    F: FnMut(f64) -> Option<(f64, f64, P)>,
{
    let mut trials = 0;
    let mut best: Option<Trial<P>> = None;
    let mut probe = |alpha: f64, trials: &mut usize| -> Trial<Option<P>> {
        *trials += 1;
        match eval(alpha) {
            Some((value, slope, payload)) if value.is_finite() && slope.is_finite() => Trial {
                alpha,
                value,
                slope,
                payload: Some(payload),
            },
            _ => Trial {
                alpha,
                value: f64::INFINITY,
                slope: f64::NAN,
                payload: None,
            },
        }
    };
    let armijo = |t: &Trial<Option<P>>| t.value <= f0 + c1 * t.alpha * d0;
    let keep = |t: Trial<Option<P>>, best: &mut Option<Trial<P>>| {
        let better = best.as_ref().is_none_or(|b| t.value < b.value);
        if better {
            if let Some(p) = t.payload {
                *best = Some(Trial {
                    alpha: t.alpha,
                    value: t.value,
                    slope: t.slope,
                    payload: p,
                });
            }
        }
    };
    let done = |t: Trial<Option<P>>| -> Outcome<P> {
        Outcome::Converged(Trial {
            alpha: t.alpha,
            value: t.value,
            slope: t.slope,
            payload: t.payload.expect("converged trial has a payload"),
        })
    };

    // Bracketing phase.
    let (mut lo, mut hi): ((f64, f64, f64), (f64, f64, f64));
    let mut prev = (0.0, f0, d0);
    let mut alpha = alpha_init.min(alpha_max);
    loop {
        if trials >= max_trials {
            return Outcome::Exhausted(best);
        }
        let t = probe(alpha, &mut trials);
        let cur = (t.alpha, t.value, t.slope);
        if !armijo(&t) || (trials > 1 && t.value >= prev.1) {
            lo = prev;
            hi = cur;
            break;
        }
        if t.slope.abs() <= -c2 * d0 {
            return done(t);
        }
        if t.slope >= 0.0 {
            lo = cur;
            hi = prev;
            keep(t, &mut best);
            break;
        }
        if alpha >= alpha_max {
            return done(t);
        }
        keep(t, &mut best);
        prev = cur;
        alpha = (4.0 * alpha).min(alpha_max);
    }

    // Zoom phase; `lo` always satisfies sufficient decrease and has the
    // lowest value seen in the bracket.
    while trials < max_trials {
        let width = hi.0 - lo.0;
        if width.abs() <= f64::EPSILON * lo.0.abs().max(1e-300) {
            break;
        }
        let mut a = if hi.1.is_finite() && hi.2.is_finite() {
            cubic_min(lo.0, lo.1, lo.2, hi.0, hi.1, hi.2)
        } else {
            f64::NAN
        };
        let (a_min, a_max) = (lo.0.min(hi.0), lo.0.max(hi.0));
        let margin = 0.1 * (a_max - a_min);
        if !(a.is_finite() && a >= a_min + margin && a <= a_max - margin) {
            a = 0.5 * (lo.0 + hi.0);
        }
        let t = probe(a, &mut trials);
        let cur = (t.alpha, t.value, t.slope);
        if !armijo(&t) || t.value >= lo.1 {
            hi = cur;
        } else {
            if t.slope.abs() <= -c2 * d0 {
                return done(t);
            }
            if t.slope * (hi.0 - lo.0) >= 0.0 {
                hi = lo;
            }
            lo = cur;
            keep(t, &mut best);
        }
    }
    Outcome::Exhausted(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_quadratic_minimum_in_one_interpolation() {
        // φ(α) = (α − 0.3)², φ'(0) = −0.6.
        let phi = |a: f64| Some(((a - 0.3) * (a - 0.3), 2.0 * (a - 0.3), ()));
        match strong_wolfe(phi, 0.09, -0.6, 1.0, 1.0, 1e-4, 0.1, 25) {
            Outcome::Converged(t) => assert!((t.alpha - 0.3).abs() < 0.05, "{}", t.alpha),
            Outcome::Exhausted(_) => panic!("line search failed"),
        }
    }

    #[test]
    fn accepts_alpha_max_when_still_descending() {
        let phi = |a: f64| Some((-a, -1.0, ()));
        match strong_wolfe(phi, 0.0, -1.0, 0.5, 2.0, 1e-4, 0.9, 25) {
            Outcome::Converged(t) => assert_eq!(t.alpha, 2.0),
            Outcome::Exhausted(_) => panic!("line search failed"),
        }
    }

    #[test]
    fn survives_unevaluable_points() {
        let phi = |a: f64| if a > 0.5 { None } else { Some(((a - 0.2).powi(2), 2.0 * (a - 0.2), ())) };
        match strong_wolfe(phi, 0.04, -0.4, 1.0, 1.0, 1e-4, 0.9, 25) {
            Outcome::Converged(t) => assert!(t.alpha <= 0.5 && t.value < 0.04),
            Outcome::Exhausted(_) => panic!("line search failed"),
        }
    }
}
