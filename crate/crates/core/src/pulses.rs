//! Gaussian pulse parameterization, flat parameter vectors and box bounds.
//!
//! The envelope is `Ω(t) = Ω₀·exp(−(t − t₀)² / σ²)`. Note the exponent
//! divides by `σ²`, not the `2σ²` used for a normal distribution.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Scalar;
use crate::error::{Error, Result};

/// Number of scalars describing one pulse channel.
pub const PARAMS_PER_CHANNEL: usize = 4;

/// One Gaussian pulse. Times are in units of `1/Γ`, frequencies in `Γ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseParams<S = f64> {
    /// Pulse center.
    pub t0: S,
    /// Temporal width.
    pub sigma: S,
    /// Peak Rabi frequency.
    pub omega0: S,
    /// Detuning.
    pub delta: S,
}

impl<S: Scalar> PulseParams<S> {
    /// Rabi frequency of this pulse at time `t`.
    #[inline]
    pub fn rabi(&self, t: f64) -> S {
        rabi_envelope(self, t)
    }
}

impl PulseParams<f64> {
    pub fn new(t0: f64, sigma: f64, omega0: f64, delta: f64) -> Self {
        Self {
            t0,
            sigma,
            omega0,
            delta,
        }
    }

    /// A channel that never drives its transition.
    pub fn off() -> Self {
        Self::new(25.0, 3.0, 0.0, 0.0)
    }

    pub fn validate(&self, key: &str) -> Result<()> {
        for (name, v) in [
            ("t0", self.t0),
            ("sigma", self.sigma),
            ("omega0", self.omega0),
            ("delta", self.delta),
        ] {
            if !v.is_finite() {
                return Err(Error::config(format!("{key}.{name}"), "must be finite"));
            }
        }
        if self.sigma <= 0.0 {
            return Err(Error::config(
                format!("{key}.sigma"),
                format!("must be > 0 (got {})", self.sigma),
            ));
        }
        if self.omega0 < 0.0 {
            return Err(Error::config(
                format!("{key}.omega0"),
                format!("must be >= 0 (got {})", self.omega0),
            ));
        }
        Ok(())
    }
}

/// `Ω₀·exp(−(t − t₀)²/σ²)`.
#[inline]
pub fn rabi_envelope<S: Scalar>(p: &PulseParams<S>, t: f64) -> S {
    let x = (-p.t0 + t) / p.sigma;
    p.omega0 * (-(x * x)).exp()
}

/// The ordered list of pulses, one per chain transition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PulseSet {
    pub channels: Vec<PulseParams>,
}

impl PulseSet {
    pub fn new(channels: Vec<PulseParams>) -> Self {
        Self { channels }
    }

    /// `n_channels` pulses with zero amplitude.
    pub fn off(n_channels: usize) -> Self {
        Self::new(vec![PulseParams::off(); n_channels])
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    /// Flat vector `[t₁, σ₁, Ω₁, Δ₁, t₂, σ₂, Ω₂, Δ₂, ...]`.
    pub fn pack(&self) -> Vec<f64> {
        self.channels
            .iter()
            .flat_map(|p| [p.t0, p.sigma, p.omega0, p.delta])
            .collect()
    }

    /// Inverse of [`PulseSet::pack`].
    pub fn unpack(params: &[f64]) -> Result<Self> {
        Ok(Self::new(unpack_params(params)?))
    }

    pub fn centers(&self) -> Vec<f64> {
        self.channels.iter().map(|p| p.t0).collect()
    }

    pub fn validate(&self) -> Result<()> {
        for (i, p) in self.channels.iter().enumerate() {
            p.validate(&format!("pulses[{i}]"))?;
        }
        Ok(())
    }
}

/// Splits a flat parameter vector into per-channel pulses (generic over the
/// scalar so dual-seeded vectors unpack the same way).
pub fn unpack_params<S: Scalar>(params: &[S]) -> Result<Vec<PulseParams<S>>> {
    if !params.len().is_multiple_of(PARAMS_PER_CHANNEL) {
        return Err(Error::Dimension(format!(
            "parameter vector length {} is not a multiple of {PARAMS_PER_CHANNEL}",
            params.len()
        )));
    }
    Ok(params
        .chunks_exact(PARAMS_PER_CHANNEL)
        .map(|c| PulseParams {
            t0: c[0],
            sigma: c[1],
            omega0: c[2],
            delta: c[3],
        })
        .collect())
}

/// Parameter name used in CSV headers, e.g. `t1`, `s1`, `o1`, `d1`.
pub fn param_label(index: usize) -> String {
    let channel = index / PARAMS_PER_CHANNEL + 1;
    let kind = ["t", "s", "o", "d"][index % PARAMS_PER_CHANNEL];
    format!("{kind}{channel}")
}

/// Per-parameter box `lower ≤ x ≤ upper`, laid out like [`PulseSet::pack`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundsSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Default ranges per parameter kind, in pack order (t, σ, Ω₀, Δ).
pub const DEFAULT_RANGES: [(f64, f64); PARAMS_PER_CHANNEL] =
    [(15.0, 35.0), (2.0, 4.0), (1.0, 35.0), (-5.0, 5.0)];

/// The physically motivated default box for `n_channels` pulses.
pub fn default_bounds(n_channels: usize) -> BoundsSpec {
    BoundsSpec::from_ranges(n_channels, DEFAULT_RANGES)
}

impl BoundsSpec {
    /// Same `(lower, upper)` per parameter kind for every channel.
    pub fn from_ranges(n_channels: usize, ranges: [(f64, f64); PARAMS_PER_CHANNEL]) -> Self {
        let (lower, upper) = (0..n_channels).flat_map(|_| ranges).unzip();
        Self { lower, upper }
    }

    pub fn from_pairs(pairs: &[(f64, f64)]) -> Self {
        let (lower, upper) = pairs.iter().copied().unzip();
        Self { lower, upper }
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.lower.iter().copied().zip(self.upper.iter().copied())
    }

    pub fn validate(&self) -> Result<()> {
        if self.lower.len() != self.upper.len() {
            return Err(Error::Dimension(format!(
                "bounds have {} lower and {} upper entries",
                self.lower.len(),
                self.upper.len()
            )));
        }
        for (i, (l, u)) in self.pairs().enumerate() {
            if !(l.is_finite() && u.is_finite() && l <= u) {
                return Err(Error::config(
                    format!("optim.bounds[{i}]"),
                    format!("need finite lower <= upper, got ({l}, {u})"),
                ));
            }
        }
        Ok(())
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.len() && x.iter().zip(self.pairs()).all(|(&v, (l, u))| l <= v && v <= u)
    }

    /// Componentwise clamp onto the box.
    pub fn project(&self, x: &mut [f64]) {
        for (v, (l, u)) in x.iter_mut().zip(self.pairs()) {
            *v = v.clamp(l, u);
        }
    }

    pub fn center(&self) -> Vec<f64> {
        self.pairs().map(|(l, u)| 0.5 * (l + u)).collect()
    }

    /// Uniform draw inside the box. Degenerate ranges yield their value.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.pairs().map(|(l, u)| if l < u { rng.random_range(l..u) } else { l }).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use proptest::prelude::*;

    #[test]
    fn envelope_peak_is_amplitude() {
        let p = PulseParams::new(18.9032811, 3.227598027, 3.552287843, -0.208536178);
        assert_eq!(rabi_envelope(&p, p.t0), 3.552287843);
    }

    #[test]
    fn envelope_one_width_out_is_amplitude_over_e() {
        let p = PulseParams::new(10.0, 2.5, 7.0, 0.0);
        let v = rabi_envelope(&p, 12.5);
        assert!((v - 7.0 * (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn zero_amplitude_is_zero_everywhere() {
        let p = PulseParams::new(10.0, 2.5, 0.0, 1.0);
        for t in [0.0, 5.0, 10.0, 40.0] {
            assert_eq!(rabi_envelope(&p, t), 0.0);
        }
    }

    #[test]
    fn pack_layout_follows_channel_order() {
        let v = fixtures::table2().pack();
        assert_eq!(v.len(), 16);
        assert_eq!(&v[..4], &[25.99837314, 3.622208677, 13.00608085, 3.571861571]);
        assert!(PulseSet::new(vec![]).pack().is_empty());
    }

    #[test]
    fn unpack_rejects_ragged_vectors() {
        assert!(matches!(PulseSet::unpack(&[1.0, 2.0, 3.0]), Err(Error::Dimension(_))));
    }

    #[test]
    fn default_bounds_shape() {
        let b = default_bounds(4);
        assert_eq!(b.len(), 16);
        for c in 0..4 {
            assert_eq!((b.lower[4 * c], b.upper[4 * c]), (15.0, 35.0));
        }
        assert_eq!(default_bounds(1).len(), 4);
        b.validate().unwrap();
    }

    #[test]
    fn table3_lies_inside_default_bounds() {
        let b = default_bounds(4);
        assert!(b.contains(&fixtures::table3().pack()));
        // Sets 1 and 2 are not fully inside the optimizer box.
        assert!(!b.contains(&fixtures::table1().pack()));
    }

    #[test]
    fn labels() {
        assert_eq!(param_label(0), "t1");
        assert_eq!(param_label(5), "s2");
        assert_eq!(param_label(15), "d4");
    }

    #[test]
    fn validation_names_the_key() {
        let mut ps = fixtures::table3();
        ps.channels[2].sigma = -1.0;
        match ps.validate() {
            Err(Error::Config { key, .. }) => assert_eq!(key, "pulses[2].sigma"),
            other => panic!("unexpected {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn pack_unpack_is_bit_exact(v in prop::collection::vec(-1e6f64..1e6, 0..6).prop_map(|v| {
            v.into_iter().flat_map(|x| [x, x.abs() + 0.1, x * 0.5, -x]).collect::<Vec<_>>()
        })) {
            let ps = PulseSet::unpack(&v).unwrap();
            let back = ps.pack();
            prop_assert_eq!(back.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
                            v.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
        }

        #[test]
        fn envelope_symmetric_and_decreasing(
            t0 in 0.0f64..40.0, sigma in 0.5f64..6.0, amp in 0.1f64..40.0,
            x in 0.0f64..10.0, dx in 0.01f64..5.0,
        ) {
            let p = PulseParams::new(t0, sigma, amp, 0.0);
            let (right, left) = (rabi_envelope(&p, t0 + x), rabi_envelope(&p, t0 - x));
            prop_assert!((right - left).abs() <= 1e-12 * right.max(left), "{right} vs {left}");
            let near = rabi_envelope(&p, t0 + x);
            let far = rabi_envelope(&p, t0 + x + dx);
            prop_assert!(near >= far);
            prop_assert!(near > 0.0 || x / sigma > 25.0);
        }
    }
}
