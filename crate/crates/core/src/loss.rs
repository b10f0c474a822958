//! The scalar objective: population penalties, terminal transfer error,
//! soft pulse-ordering terms and softplus box barriers.

use serde::{Deserialize, Serialize};

use crate::autodiff::Scalar;
use crate::error::{Error, Result};
use crate::ode::{DensityState, Trajectory};
use crate::pulses::BoundsSpec;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    /// `∫_{T/2}^{T} ρ₁₁ dt`.
    #[serde(rename = "w_init")]
    pub init: f64,
    /// `Σ_k ∫_0^T ρ_kk dt` over intermediate levels.
    #[serde(rename = "w_mid")]
    pub mid: f64,
    /// `(ρ_NN(T) − 1)²`.
    #[serde(rename = "w_final")]
    pub terminal: f64,
    #[serde(rename = "w_order")]
    pub order: f64,
    #[serde(rename = "w_barrier")]
    pub barrier: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            init: 1.0,
            mid: 1.0,
            terminal: 1.0,
            order: 1.0,
            barrier: 1.0,
        }
    }
}

/// Whether an ordering term rewards (`1 − P`) or penalizes (`P`) the pattern.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrderingMode {
    #[default]
    Encourage,
    Discourage,
}

/// Soft constraint on the pulse centers. Pulse indices are 1-based.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum OrderingConstraint {
    /// `s = +1`: pulse `pulse` comes last; `s = −1`: it comes first.
    Reference {
        pulse: usize,
        sign: i8,
        #[serde(default)]
        mode: OrderingMode,
    },
    /// `order = [a, b, c]` asks for `t_a > t_b > t_c`.
    Chain {
        order: Vec<usize>,
        #[serde(default)]
        mode: OrderingMode,
    },
}

impl OrderingConstraint {
    pub fn mode(&self) -> OrderingMode {
        match self {
            OrderingConstraint::Reference { mode, .. } | OrderingConstraint::Chain { mode, .. } => *mode,
        }
    }

    pub fn validate(&self, n_channels: usize, key: &str) -> Result<()> {
        let in_range = |i: usize| i >= 1 && i <= n_channels;
        match self {
            OrderingConstraint::Reference { pulse, sign, .. } => {
                if !in_range(*pulse) {
                    return Err(Error::config(
                        format!("{key}.pulse"),
                        format!("pulse {pulse} outside 1..={n_channels}"),
                    ));
                }
                if *sign != 1 && *sign != -1 {
                    return Err(Error::config(format!("{key}.sign"), "must be +1 or -1"));
                }
            }
            OrderingConstraint::Chain { order, .. } => {
                if order.len() < 2 {
                    return Err(Error::config(format!("{key}.order"), "need at least two pulses"));
                }
                for (i, &a) in order.iter().enumerate() {
                    if !in_range(a) {
                        return Err(Error::config(
                            format!("{key}.order"),
                            format!("pulse {a} outside 1..={n_channels}"),
                        ));
                    }
                    if order[..i].contains(&a) {
                        return Err(Error::config(format!("{key}.order"), format!("pulse {a} repeated")));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossConfig {
    pub weights: LossWeights,
    pub ordering: Vec<OrderingConstraint>,
    /// `k` in the softplus barriers.
    pub barrier_sharpness: f64,
    /// `k_sharp` in the ordering sigmoids, units of `Γ`.
    pub order_sharpness: f64,
    pub horizon: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            weights: LossWeights::default(),
            ordering: Vec::new(),
            barrier_sharpness: 10.0,
            order_sharpness: 5.0,
            horizon: 45.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self, n_channels: usize) -> Result<()> {
        let w = &self.weights;
        for (key, v) in [
            ("loss.w_init", w.init),
            ("loss.w_mid", w.mid),
            ("loss.w_final", w.terminal),
            ("loss.w_order", w.order),
            ("loss.w_barrier", w.barrier),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(key, format!("must be finite and >= 0 (got {v})")));
            }
        }
        for (key, v) in [
            ("loss.barrier_sharpness", self.barrier_sharpness),
            ("loss.order_sharpness", self.order_sharpness),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(key, format!("must be finite and > 0 (got {v})")));
            }
        }
        for (i, c) in self.ordering.iter().enumerate() {
            c.validate(n_channels, &format!("loss.ordering[{i}]"))?;
        }
        Ok(())
    }
}

/// Soft indicator in `(0, 1)` that the centers follow the constraint.
///
/// Reference: `Π_{k≠j} σ(s·k_sharp·(t_j − t_k))`. Chain: product of
/// `σ(k_sharp·(t_a − t_b))` over consecutive entries.
pub fn ordering_penalty<S: Scalar>(centers: &[S], c: &OrderingConstraint, k_sharp: f64) -> S {
    let mut p = S::constant(1.0);
    match c {
        OrderingConstraint::Reference { pulse, sign, .. } => {
            let j = pulse - 1;
            let s = f64::from(*sign) * k_sharp;
            for (k, &tk) in centers.iter().enumerate() {
                if k != j {
                    p *= ((centers[j] - tk) * s).sigmoid();
                }
            }
        }
        OrderingConstraint::Chain { order, .. } => {
            for pair in order.windows(2) {
                let (a, b) = (pair[0] - 1, pair[1] - 1);
                p *= ((centers[a] - centers[b]) * k_sharp).sigmoid();
            }
        }
    }
    p
}

/// `Σ_i [softplus(k(l_i − x_i)) + softplus(k(x_i − u_i))] / k`.
pub fn barrier_penalty<S: Scalar>(params: &[S], bounds: &BoundsSpec, k: f64) -> S {
    let mut acc = S::zero();
    for (&x, (l, u)) in params.iter().zip(bounds.pairs()) {
        acc += ((-x + l) * k).softplus() + ((x - u) * k).softplus();
    }
    acc / k
}

/// Every additive piece of the objective.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossBreakdown<S = f64> {
    /// `w_init · ∫ g(t) ρ₁₁ dt`.
    pub init: S,
    /// `w_mid · Σ_k ∫ ρ_kk dt`.
    pub mid: S,
    /// `w_final · (ρ_NN(T) − 1)²`.
    pub terminal: S,
    /// `w_order · Σ (1 − P)` (or `P` for discouraged patterns).
    pub order: S,
    /// `w_barrier · barrier`.
    pub barrier: S,
}

impl<S: Scalar> LossBreakdown<S> {
    pub fn dynamics(&self) -> S {
        self.init + self.mid + self.terminal
    }

    pub fn total(&self) -> S {
        self.init + self.mid + self.terminal + self.order + self.barrier
    }

    pub fn values(&self) -> LossBreakdown<f64> {
        LossBreakdown {
            init: self.init.value(),
            mid: self.mid.value(),
            terminal: self.terminal.value(),
            order: self.order.value(),
            barrier: self.barrier.value(),
        }
    }
}

/// The three dynamical terms from the final augmented state.
pub fn dynamics_terms<S: Scalar>(state: &DensityState<S>, w: &LossWeights) -> (S, S, S) {
    let init = state.late_initial_integral() * w.init;
    let mut mid = S::zero();
    for &q in state.intermediate_integrals() {
        mid += q;
    }
    let miss = state.population(state.n_levels) - 1.0;
    (init, mid * w.mid, miss * miss * w.terminal)
}

/// Sum of the ordering contributions, already weighted.
pub fn ordering_terms<S: Scalar>(centers: &[S], cfg: &LossConfig) -> S {
    let mut acc = S::zero();
    for c in &cfg.ordering {
        let p = ordering_penalty(centers, c, cfg.order_sharpness);
        acc += match c.mode() {
            OrderingMode::Encourage => -p + 1.0,
            OrderingMode::Discourage => p,
        };
    }
    acc * cfg.weights.order
}

/// `w_init·∫_{T/2}^T ρ₁₁ + w_mid·Σ∫ρ_kk + w_final·(ρ_NN(T) − 1)²` from a
/// trajectory's quadrature states.
pub fn loss_dynamics(traj: &Trajectory, cfg: &LossConfig) -> Result<f64> {
    if traj.horizon != cfg.horizon {
        return Err(Error::config(
            "loss.horizon",
            format!("trajectory spans [0, {}] but the loss expects T = {}", traj.horizon, cfg.horizon),
        ));
    }
    let (a, b, c) = dynamics_terms(&traj.final_state, &cfg.weights);
    Ok(a + b + c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{sigmoid_f64, softplus_f64};
    use crate::fixtures;
    use crate::ode::{quad_len, IntegrationStats, StepLog};
    use crate::pulses::default_bounds;
    use proptest::prelude::*;

    fn reference(pulse: usize, sign: i8) -> OrderingConstraint {
        OrderingConstraint::Reference { pulse, sign, mode: OrderingMode::Encourage }
    }

    fn chain(order: &[usize]) -> OrderingConstraint {
        OrderingConstraint::Chain { order: order.to_vec(), mode: OrderingMode::Encourage }
    }

    /// A trajectory whose state sits in `level` for the whole horizon.
    fn static_trajectory(level: usize, horizon: f64) -> Trajectory {
        let n = 5;
        let mut y = vec![0.0; n * n + quad_len(n)];
        y[level - 1] = 1.0;
        let q = n * n;
        if level == 1 {
            y[q] = horizon / 2.0;
        } else if level < n {
            y[q + level - 1] = horizon;
        }
        let final_state = DensityState { n_levels: n, y };
        Trajectory {
            horizon,
            times: vec![0.0, horizon],
            populations: vec![final_state.populations(); 2],
            coherence_norms: vec![0.0; 2],
            rabi: vec![vec![0.0; 4]; 2],
            final_state,
            stats: IntegrationStats::default(),
            log: StepLog::default(),
        }
    }

    #[test]
    fn perfect_transfer_costs_nothing() {
        let cfg = LossConfig { horizon: 40.0, ..Default::default() };
        assert_eq!(loss_dynamics(&static_trajectory(5, 40.0), &cfg).unwrap(), 0.0);
    }

    #[test]
    fn static_ground_state_closed_form() {
        let cfg = LossConfig { horizon: 40.0, ..Default::default() };
        assert_eq!(loss_dynamics(&static_trajectory(1, 40.0), &cfg).unwrap(), 21.0);
        assert_eq!(loss_dynamics(&static_trajectory(3, 40.0), &cfg).unwrap(), 41.0);
    }

    #[test]
    fn horizon_mismatch_is_a_config_error() {
        let cfg = LossConfig { horizon: 45.0, ..Default::default() };
        assert!(matches!(
            loss_dynamics(&static_trajectory(1, 40.0), &cfg),
            Err(Error::Config { .. })
        ));
    }

    #[test]
    fn coincident_centers_give_one_eighth() {
        let t = [20.0; 4];
        assert_eq!(ordering_penalty(&t, &reference(1, 1), 5.0), 0.125);
    }

    #[test]
    fn saturated_margins() {
        let k = 5.0;
        let m = 100.0 / k;
        let t = [10.0 + m, 10.0, 10.0, 10.0];
        assert!((ordering_penalty(&t, &reference(1, 1), k) - 1.0).abs() < 1e-9);
        assert!(ordering_penalty(&t, &reference(1, -1), k) < 1e-9);
    }

    #[test]
    fn chain_on_first_reference_set_is_violated() {
        // t4 > t2 > t3 > t1 fails at t2 − t3 ≈ −5.995.
        let t = fixtures::table1().centers();
        let k = 5.0;
        let p = ordering_penalty(&t, &chain(&[4, 2, 3, 1]), k);
        let direct = sigmoid_f64(k * (t[3] - t[1])) * sigmoid_f64(k * (t[1] - t[2])) * sigmoid_f64(k * (t[2] - t[0]));
        assert!((p - direct).abs() < 1e-15);
        assert!(p < sigmoid_f64(-5.995 * k));
        assert!(p < 1e-12);
    }

    #[test]
    fn barrier_values() {
        let b = default_bounds(1);
        let k = 10.0;
        let center = b.center();
        let at_center = barrier_penalty(&center, &b, k);
        assert!(at_center < 4.0 * 1e-4);
        // x = u on every coordinate: ≈ ln 2 / k each.
        let at_upper = barrier_penalty(&b.upper, &b, k);
        let expect: f64 = b.pairs().map(|(l, u)| (softplus_f64(0.0) + softplus_f64(k * (l - u))) / k).sum();
        assert!((at_upper - expect).abs() < 1e-15);
        assert!((at_upper / 4.0 - 2f64.ln() / k).abs() < 1e-9);
        // One unit outside is in the linear regime.
        let one = BoundsSpec::from_pairs(&[(-5.0, 5.0)]);
        let v = barrier_penalty(&[6.0], &one, k);
        assert!((v - 1.000_004_539_889_921_7).abs() < 1e-12, "{v}");
    }

    #[test]
    fn validation_of_constraints() {
        assert!(chain(&[1, 1]).validate(4, "c").is_err());
        assert!(chain(&[5, 1]).validate(4, "c").is_err());
        assert!(reference(2, 0).validate(4, "c").is_err());
        assert!(reference(2, -1).validate(4, "c").is_ok());
    }

    #[test]
    fn encourage_and_discourage_are_complementary() {
        let t = [20.0, 21.0, 19.0, 22.0];
        let mut cfg = LossConfig { ordering: vec![reference(2, 1)], ..Default::default() };
        let enc = ordering_terms(&t, &cfg);
        cfg.ordering = vec![OrderingConstraint::Reference { pulse: 2, sign: 1, mode: OrderingMode::Discourage }];
        let dis = ordering_terms(&t, &cfg);
        assert!((enc + dis - 1.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn penalty_in_open_unit_interval_and_shift_invariant(
            t in prop::collection::vec(10.0f64..30.0, 4),
            shift in -20.0f64..20.0,
            j in 1usize..=4,
            s in prop::bool::ANY,
        ) {
            let c = reference(j, if s { 1 } else { -1 });
            let k = 1.0;
            let p = ordering_penalty(&t, &c, k);
            prop_assert!(p > 0.0 && p < 1.0);
            let shifted: Vec<f64> = t.iter().map(|x| x + shift).collect();
            prop_assert!((ordering_penalty(&shifted, &c, k) - p).abs() < 1e-12);
        }

        #[test]
        fn swapping_a_satisfied_pair_does_not_increase(
            t in prop::collection::vec(10.0f64..30.0, 4),
            k_idx in 0usize..4,
        ) {
            let j = 0;
            prop_assume!(k_idx != j && t[j] > t[k_idx]);
            let c = reference(j + 1, 1);
            let p = ordering_penalty(&t, &c, 5.0);
            let mut swapped = t.clone();
            swapped.swap(j, k_idx);
            prop_assert!(ordering_penalty(&swapped, &c, 5.0) <= p);
        }

        #[test]
        fn barrier_symmetric_under_reflection(x in -20.0f64..20.0, half in 0.5f64..10.0) {
            let b = BoundsSpec::from_pairs(&[(-half, half)]);
            let a = barrier_penalty(&[x], &b, 10.0);
            let r = barrier_penalty(&[-x], &b, 10.0);
            prop_assert!((a - r).abs() <= 1e-12 * a.abs().max(1.0));
            prop_assert!(a >= 0.0);
        }
    }
}
