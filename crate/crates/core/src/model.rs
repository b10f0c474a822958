//! The driven chain system: jump channels, the rotating-frame Hamiltonian and
//! the Lindblad right-hand side.
//!
//! Levels are numbered from 1 in every public type (`|1⟩ … |N⟩`), matching
//! configuration files. Channel `j` drives `|j⟩ ↔ |j+1⟩`. Even-numbered
//! levels are the excited states of the chain; odd-numbered levels are ground
//! states. Units: `ħ = 1`, rates and frequencies in `Γ`, time in `1/Γ`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::autodiff::Scalar;
use crate::error::{Error, Result};
use crate::pulses::PulseParams;

/// Incoherent channel with collapse operator `L = |to⟩⟨from|` and rate `rate`.
/// `from == to` describes pure dephasing of that level.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpChannel {
    pub from: usize,
    pub to: usize,
    pub rate: f64,
}

impl JumpChannel {
    pub fn new(from: usize, to: usize, rate: f64) -> Self {
        Self { from, to, rate }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SystemSpec {
    pub n_levels: usize,
    /// Longitudinal decay rate Γ of each excited level (1 in normalized units).
    pub gamma_natural: f64,
    /// Extra collisional dephasing γ_c; the coherence decay rate is `Γ/2 + γ_c`.
    pub gamma_collisional: f64,
    pub jump_channels: Vec<JumpChannel>,
    /// Use `e^{−iΔt}` on every upper-triangle coupling instead of the
    /// alternating `e^{∓iΔt}` pattern.
    pub uniform_phase_convention: bool,
}

impl Default for SystemSpec {
    fn default() -> Self {
        Self::m_type()
    }
}

impl SystemSpec {
    /// The five-level M-type system with Γ = 1 and no collisional dephasing.
    pub fn m_type() -> Self {
        Self::chain(5, 1.0)
    }

    /// An `n`-level chain whose excited levels decay at total rate `gamma`,
    /// split evenly between their neighbours.
    pub fn chain(n_levels: usize, gamma: f64) -> Self {
        Self {
            n_levels,
            gamma_natural: gamma,
            gamma_collisional: 0.0,
            jump_channels: default_jump_channels(n_levels, gamma),
            uniform_phase_convention: false,
        }
    }

    /// Same system with every incoherent process switched off.
    pub fn without_dissipation(mut self) -> Self {
        self.gamma_collisional = 0.0;
        self.jump_channels.clear();
        self
    }

    pub fn n_channels(&self) -> usize {
        self.n_levels.saturating_sub(1)
    }

    /// 1-based indices of the excited (even) levels.
    pub fn excited_levels(&self) -> impl Iterator<Item = usize> {
        (2..=self.n_levels).step_by(2)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_levels < 2 {
            return Err(Error::config("system.n_levels", "need at least 2 levels"));
        }
        for (key, v) in [
            ("system.gamma_natural", self.gamma_natural),
            ("system.gamma_collisional", self.gamma_collisional),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(key, format!("must be finite and >= 0 (got {v})")));
            }
        }
        for (i, ch) in self.jump_channels.iter().enumerate() {
            let key = format!("system.jumps[{i}]");
            for (name, level) in [("from", ch.from), ("to", ch.to)] {
                if level < 1 || level > self.n_levels {
                    return Err(Error::config(
                        format!("{key}.{name}"),
                        format!("level {level} outside 1..={}", self.n_levels),
                    ));
                }
            }
            if !(ch.rate.is_finite() && ch.rate >= 0.0) {
                return Err(Error::config(
                    format!("{key}.rate"),
                    format!("must be finite and >= 0 (got {})", ch.rate),
                ));
            }
        }
        Ok(())
    }
}

/// Each excited level decays to its chain neighbours with the total rate
/// split evenly. For five levels this is `|1⟩⟨2|, |3⟩⟨2|, |3⟩⟨4|, |5⟩⟨4|`
/// at `Γ/2` each.
pub fn default_jump_channels(n_levels: usize, gamma: f64) -> Vec<JumpChannel> {
    let mut out = Vec::new();
    for e in (2..=n_levels).step_by(2) {
        let neighbours: Vec<usize> = [e - 1, e + 1]
            .into_iter()
            .filter(|&g| g >= 1 && g <= n_levels)
            .collect();
        let share = gamma / neighbours.len() as f64;
        out.extend(neighbours.into_iter().map(|g| JumpChannel::new(e, g, share)));
    }
    out
}

/// Pure-dephasing projectors `|e⟩⟨e|` on the excited levels with rate `2γ_c`,
/// so a coherence touching an excited level decays at `Γ/2 + γ_c`. Empty
/// when `γ_c = 0`.
pub fn dephasing_channels(spec: &SystemSpec) -> Result<Vec<(usize, f64)>> {
    let gc = spec.gamma_collisional;
    if !(gc.is_finite() && gc >= 0.0) {
        return Err(Error::config(
            "system.gamma_collisional",
            format!("must be finite and >= 0 (got {gc})"),
        ));
    }
    if gc == 0.0 {
        return Ok(Vec::new());
    }
    Ok(spec.excited_levels().map(|e| (e, 2.0 * gc)).collect())
}

/// Jump channels plus dephasing projectors.
pub fn all_channels(spec: &SystemSpec) -> Result<Vec<JumpChannel>> {
    let mut out = spec.jump_channels.clone();
    out.extend(
        dephasing_channels(spec)?
            .into_iter()
            .map(|(e, rate)| JumpChannel::new(e, e, rate)),
    );
    Ok(out)
}

/// Complex number over a generic scalar, used only for the chain couplings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cplx<S> {
    pub re: S,
    pub im: S,
}

/// Chain Hamiltonian, stored as its upper off-diagonal `H[j, j+1]`. The
/// lower off-diagonal is the conjugate and every other entry is zero, so
/// the matrix is Hermitian by construction.
#[derive(Clone, Debug, PartialEq)]
pub struct Hamiltonian<S = f64> {
    pub couplings: Vec<Cplx<S>>,
}

impl<S: Scalar> Hamiltonian<S> {
    pub fn n_levels(&self) -> usize {
        self.couplings.len() + 1
    }
}

impl Hamiltonian<f64> {
    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let n = self.n_levels();
        let mut h = DMatrix::zeros(n, n);
        for (j, c) in self.couplings.iter().enumerate() {
            h[(j, j + 1)] = Complex64::new(c.re, c.im);
            h[(j + 1, j)] = Complex64::new(c.re, -c.im);
        }
        h
    }
}

/// `H[j, j+1] = Ω_j(t)·e^{−i s_j Δ_j t}` with `s_j = +1` for odd channels
/// (1, 3, …) and `−1` for even channels, or `+1` throughout under the uniform
/// convention. No factor ½ on Ω.
pub fn build_hamiltonian<S: Scalar>(
    spec: &SystemSpec,
    pulses: &[PulseParams<S>],
    t: f64,
) -> Result<Hamiltonian<S>> {
    if pulses.len() != spec.n_channels() {
        return Err(Error::Dimension(format!(
            "{} levels need {} pulse channels, got {}",
            spec.n_levels,
            spec.n_channels(),
            pulses.len()
        )));
    }
    Ok(hamiltonian_unchecked(pulses, t, spec.uniform_phase_convention))
}

#[inline]
pub(crate) fn hamiltonian_unchecked<S: Scalar>(
    pulses: &[PulseParams<S>],
    t: f64,
    uniform_phase: bool,
) -> Hamiltonian<S> {
    let couplings = pulses
        .iter()
        .enumerate()
        .map(|(j, p)| {
            let omega = p.rabi(t);
            let sign = if uniform_phase || j % 2 == 0 { 1.0 } else { -1.0 };
            let phase = p.delta * (sign * t);
            Cplx {
                re: omega * phase.cos(),
                im: -(omega * phase.sin()),
            }
        })
        .collect();
    Hamiltonian { couplings }
}

/// Index of the real part of `ρ[i][j]` (`i < j`, 0-based) in the packed
/// Hermitian layout; the imaginary part follows it.
///
/// Layout: `N` real diagonal entries, then `(Re, Im)` of each upper-triangle
/// entry in row-major order. Total length `N²`.
#[inline]
pub fn offdiag_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    n + 2 * (i * (2 * n - i - 1) / 2 + (j - i - 1))
}

/// Packs a Hermitian matrix (upper triangle is read).
pub fn pack_density(rho: &DMatrix<Complex64>) -> Vec<f64> {
    let n = rho.nrows();
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        out[i] = rho[(i, i)].re;
        for j in i + 1..n {
            let k = offdiag_index(n, i, j);
            out[k] = rho[(i, j)].re;
            out[k + 1] = rho[(i, j)].im;
        }
    }
    out
}

pub fn unpack_density(n: usize, packed: &[f64]) -> DMatrix<Complex64> {
    let mut rho = DMatrix::zeros(n, n);
    for i in 0..n {
        rho[(i, i)] = Complex64::new(packed[i], 0.0);
        for j in i + 1..n {
            let k = offdiag_index(n, i, j);
            let z = Complex64::new(packed[k], packed[k + 1]);
            rho[(i, j)] = z;
            rho[(j, i)] = z.conj();
        }
    }
    rho
}

/// Reference right-hand side `−i[H,ρ] + Σ_k γ_k (L_k ρ L_k† − ½{L_k†L_k, ρ})`
/// built from explicit dense operators.
pub fn lindblad_rhs(
    spec: &SystemSpec,
    h: &Hamiltonian<f64>,
    rho: &DMatrix<Complex64>,
) -> Result<DMatrix<Complex64>> {
    let n = spec.n_levels;
    if h.n_levels() != n || rho.nrows() != n || rho.ncols() != n {
        return Err(Error::Dimension(format!(
            "system has {n} levels, H is {0}x{0}, rho is {1}x{2}",
            h.n_levels(),
            rho.nrows(),
            rho.ncols()
        )));
    }
    let hd = h.to_dense();
    let minus_i = Complex64::new(0.0, -1.0);
    let mut out = (&hd * rho - rho * &hd) * minus_i;
    for ch in all_channels(spec)? {
        let mut l = DMatrix::<Complex64>::zeros(n, n);
        l[(ch.to - 1, ch.from - 1)] = Complex64::new(1.0, 0.0);
        let ld = l.adjoint();
        let ldl = &ld * &l;
        let term = &l * rho * &ld - (&ldl * rho + rho * &ldl) * Complex64::new(0.5, 0.0);
        out += term * Complex64::new(ch.rate, 0.0);
    }
    Ok(out)
}

/// Precomputed Lindblad generator acting on packed density vectors.
///
/// For `L = |a⟩⟨b|` the dissipator only feeds `ρ_aa` from `ρ_bb` and damps
/// every entry in row or column `b`, so it reduces to per-entry decay rates
/// plus a list of population feeds.
#[derive(Clone, Debug)]
pub struct LindbladOperator {
    n: usize,
    /// Decay rate of each packed entry (shared by Re and Im parts).
    decay: Vec<f64>,
    /// `(to, from, rate)`, 0-based.
    feeds: Vec<(usize, usize, f64)>,
}

impl LindbladOperator {
    pub fn new(spec: &SystemSpec) -> Result<Self> {
        spec.validate()?;
        let n = spec.n_levels;
        let mut decay = vec![0.0; n * n];
        let mut feeds = Vec::new();
        for ch in all_channels(spec)? {
            if ch.rate == 0.0 {
                continue;
            }
            let (a, b) = (ch.to - 1, ch.from - 1);
            feeds.push((a, b, ch.rate));
            let half = 0.5 * ch.rate;
            decay[b] += ch.rate;
            for k in 0..n {
                if k != b {
                    let (i, j) = if k < b { (k, b) } else { (b, k) };
                    let idx = offdiag_index(n, i, j);
                    decay[idx] += half;
                    decay[idx + 1] += half;
                }
            }
        }
        Ok(Self { n, decay, feeds })
    }

    pub fn n_levels(&self) -> usize {
        self.n
    }

    /// Writes `dρ/dt` for the packed state `rho` into `out` (both length `N²`).
    pub fn rhs<S: Scalar>(&self, h: &Hamiltonian<S>, rho: &[S], out: &mut [S]) {
        let n = self.n;
        let zero = S::zero();
        let get = |i: usize, j: usize| -> Cplx<S> {
            use std::cmp::Ordering::*;
            match i.cmp(&j) {
                Equal => Cplx { re: rho[i], im: zero },
                Less => {
                    let k = offdiag_index(n, i, j);
                    Cplx { re: rho[k], im: rho[k + 1] }
                }
                Greater => {
                    let k = offdiag_index(n, j, i);
                    Cplx { re: rho[k], im: -rho[k + 1] }
                }
            }
        };
        let c = &h.couplings;
        for i in 0..n {
            for j in i..n {
                // C = (Hρ − ρH)_ij on the tridiagonal H.
                let mut cre = zero;
                let mut cim = zero;
                if i + 1 < n {
                    // + H[i,i+1] ρ[i+1,j]
                    let (a, b) = (c[i], get(i + 1, j));
                    cre += a.re * b.re - a.im * b.im;
                    cim += a.re * b.im + a.im * b.re;
                }
                if i > 0 {
                    // + conj(c[i-1]) ρ[i-1,j]
                    let (a, b) = (c[i - 1], get(i - 1, j));
                    cre += a.re * b.re + a.im * b.im;
                    cim += a.re * b.im - a.im * b.re;
                }
                if j > 0 {
                    // − ρ[i,j-1] c[j-1]
                    let (a, b) = (get(i, j - 1), c[j - 1]);
                    cre -= a.re * b.re - a.im * b.im;
                    cim -= a.re * b.im + a.im * b.re;
                }
                if j + 1 < n {
                    // − ρ[i,j+1] conj(c[j])
                    let (a, b) = (get(i, j + 1), c[j]);
                    cre -= a.re * b.re + a.im * b.im;
                    cim -= a.im * b.re - a.re * b.im;
                }
                // −i·C
                if i == j {
                    out[i] = cim - rho[i] * self.decay[i];
                } else {
                    let k = offdiag_index(n, i, j);
                    out[k] = cim - rho[k] * self.decay[k];
                    out[k + 1] = -cre - rho[k + 1] * self.decay[k + 1];
                }
            }
        }
        for &(a, b, rate) in &self.feeds {
            out[a] += rho[b] * rate;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::pulses::PulseSet;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn projector(n: usize, k: usize) -> DMatrix<Complex64> {
        let mut m = DMatrix::zeros(n, n);
        m[(k - 1, k - 1)] = c(1.0, 0.0);
        m
    }

    fn single_drive(amp: f64, delta: f64) -> PulseSet {
        let mut ps = PulseSet::off(4);
        ps.channels[0] = PulseParams::new(0.0, 1e9, amp, delta);
        ps
    }

    #[test]
    fn default_jumps_are_the_m_type_channels() {
        let spec = SystemSpec::m_type();
        let got: Vec<_> = spec.jump_channels.iter().map(|c| (c.to, c.from, c.rate)).collect();
        assert_eq!(got, vec![(1, 2, 0.5), (3, 2, 0.5), (3, 4, 0.5), (5, 4, 0.5)]);
    }

    #[test]
    fn zero_amplitudes_give_zero_hamiltonian() {
        let spec = SystemSpec::m_type();
        let h = build_hamiltonian(&spec, &PulseSet::off(4).channels, 3.7).unwrap();
        assert!(h.to_dense().iter().all(|z| *z == c(0.0, 0.0)));
    }

    #[test]
    fn resonant_hamiltonian_is_real_symmetric() {
        let spec = SystemSpec::m_type();
        let mut ps = fixtures::table3();
        for p in &mut ps.channels {
            p.delta = 0.0;
        }
        let t = 21.3;
        let h = build_hamiltonian(&spec, &ps.channels, t).unwrap().to_dense();
        for j in 0..4 {
            let omega = ps.channels[j].rabi(t);
            assert_eq!(h[(j, j + 1)], c(omega, 0.0));
            assert_eq!(h[(j + 1, j)], c(omega, 0.0));
        }
    }

    #[test]
    fn coupling_modulus_at_pulse_peak() {
        let spec = SystemSpec::m_type();
        let ps = fixtures::table3();
        let h = build_hamiltonian(&spec, &ps.channels, ps.channels[0].t0).unwrap().to_dense();
        assert!((h[(0, 1)].norm() - 32.0).abs() < 1e-12);
    }

    #[test]
    fn alternating_phase_signs() {
        let spec = SystemSpec::m_type();
        let mut ps = PulseSet::off(4);
        for p in &mut ps.channels {
            *p = PulseParams::new(1.0, 1e9, 1.0, 0.3);
        }
        let t = 2.0;
        let h = build_hamiltonian(&spec, &ps.channels, t).unwrap().to_dense();
        let down = Complex64::from_polar(1.0, -0.3 * t);
        let up = Complex64::from_polar(1.0, 0.3 * t);
        for (j, expect) in [down, up, down, up].into_iter().enumerate() {
            assert!((h[(j, j + 1)] - expect).norm() < 1e-14, "channel {}", j + 1);
        }
        let uniform = SystemSpec { uniform_phase_convention: true, ..spec };
        let h = build_hamiltonian(&uniform, &ps.channels, t).unwrap().to_dense();
        for j in 0..4 {
            assert!((h[(j, j + 1)] - down).norm() < 1e-14);
        }
    }

    #[test]
    fn channel_count_mismatch_is_rejected() {
        let spec = SystemSpec::m_type();
        let r = build_hamiltonian(&spec, &PulseSet::off(3).channels, 0.0);
        assert!(matches!(r, Err(Error::Dimension(_))));
    }

    #[test]
    fn pure_excited_state_decays_into_neighbours() {
        let spec = SystemSpec {
            jump_channels: vec![JumpChannel::new(2, 1, 0.3), JumpChannel::new(2, 3, 0.7)],
            ..SystemSpec::m_type()
        };
        let h = build_hamiltonian(&spec, &PulseSet::off(4).channels, 0.0).unwrap();
        let d = lindblad_rhs(&spec, &h, &projector(5, 2)).unwrap();
        assert!((d[(0, 0)] - c(0.3, 0.0)).norm() < 1e-15);
        assert!((d[(2, 2)] - c(0.7, 0.0)).norm() < 1e-15);
        assert!((d[(1, 1)] - c(-1.0, 0.0)).norm() < 1e-15);
        for i in 0..5 {
            for j in 0..5 {
                if i != j {
                    assert_eq!(d[(i, j)], c(0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn maximally_mixed_state_is_stationary_without_jumps() {
        let spec = SystemSpec::m_type().without_dissipation();
        let h = build_hamiltonian(&spec, &PulseSet::off(4).channels, 0.0).unwrap();
        let rho = DMatrix::<Complex64>::identity(5, 5) * c(0.2, 0.0);
        let d = lindblad_rhs(&spec, &h, &rho).unwrap();
        assert!(d.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn commutator_sign_for_ground_state_under_resonant_drive() {
        // dρ₁₂/dt = −i(H₁₂ρ₂₂ − ρ₁₁H₁₂) = +i for H₁₂ = 1, ρ = |1⟩⟨1|.
        let spec = SystemSpec::m_type().without_dissipation();
        let h = build_hamiltonian(&spec, &single_drive(1.0, 0.0).channels, 0.0).unwrap();
        let d = lindblad_rhs(&spec, &h, &projector(5, 1)).unwrap();
        assert!((d[(0, 1)] - c(0.0, 1.0)).norm() < 1e-15);
        assert!((d[(1, 0)] - c(0.0, -1.0)).norm() < 1e-15);
        let packed = rhs_packed_f64(&spec, &h, &projector(5, 1));
        assert!((packed[(0, 1)] - c(0.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn dephasing_channels_follow_collisional_rate() {
        let mut spec = SystemSpec::m_type();
        assert!(dephasing_channels(&spec).unwrap().is_empty());
        spec.gamma_collisional = 0.5;
        assert_eq!(dephasing_channels(&spec).unwrap(), vec![(2, 1.0), (4, 1.0)]);
        spec.gamma_collisional = -0.1;
        assert!(matches!(dephasing_channels(&spec), Err(Error::Config { .. })));
    }

    #[test]
    fn validate_catches_bad_channels() {
        let mut spec = SystemSpec::m_type();
        spec.jump_channels.push(JumpChannel::new(6, 1, 1.0));
        assert!(spec.validate().is_err());
        let mut spec = SystemSpec::m_type();
        spec.jump_channels[0].rate = -1.0;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn three_level_defaults() {
        let spec = SystemSpec::chain(3, 1.0);
        let got: Vec<_> = spec.jump_channels.iter().map(|c| (c.to, c.from, c.rate)).collect();
        assert_eq!(got, vec![(1, 2, 0.5), (3, 2, 0.5)]);
    }

    fn rhs_packed_f64(
        spec: &SystemSpec,
        h: &Hamiltonian<f64>,
        rho: &DMatrix<Complex64>,
    ) -> DMatrix<Complex64> {
        let op = LindbladOperator::new(spec).unwrap();
        let packed = pack_density(rho);
        let mut out = vec![0.0; packed.len()];
        op.rhs(h, &packed, &mut out);
        unpack_density(spec.n_levels, &out)
    }

    fn random_state(values: &[f64], n: usize) -> DMatrix<Complex64> {
        // A·A† normalized: Hermitian, positive, unit trace.
        let a = DMatrix::from_fn(n, n, |i, j| c(values[2 * (i * n + j)], values[2 * (i * n + j) + 1]));
        let rho = &a * a.adjoint();
        let tr = rho.trace().re;
        rho / c(tr, 0.0)
    }

    fn arb_case() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, f64, f64)> {
        (
            prop::collection::vec(-1.0f64..1.0, 50),
            prop::collection::vec(0.0f64..1.0, 16),
            0.0f64..40.0,
            0.0f64..2.0,
        )
    }

    fn case_system(gc: f64, uniform: bool) -> SystemSpec {
        SystemSpec {
            gamma_collisional: gc,
            uniform_phase_convention: uniform,
            ..SystemSpec::m_type()
        }
    }

    fn case_pulses(u: &[f64]) -> PulseSet {
        PulseSet::new(
            u.chunks(4)
                .map(|c| PulseParams::new(15.0 + 20.0 * c[0], 2.0 + 2.0 * c[1], 35.0 * c[2], 10.0 * c[3] - 5.0))
                .collect(),
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn rhs_is_hermitian_and_traceless((vals, u, t, gc) in arb_case()) {
            let spec = case_system(gc, false);
            let h = build_hamiltonian(&spec, &case_pulses(&u).channels, t).unwrap();
            let rho = random_state(&vals, 5);
            let d = lindblad_rhs(&spec, &h, &rho).unwrap();
            prop_assert!(d.trace().norm() < 1e-12);
            prop_assert!((&d - d.adjoint()).iter().all(|z| z.norm() < 1e-12));
        }

        #[test]
        fn packed_rhs_matches_dense_reference((vals, u, t, gc) in arb_case(), uniform in any::<bool>()) {
            let spec = case_system(gc, uniform);
            let h = build_hamiltonian(&spec, &case_pulses(&u).channels, t).unwrap();
            let rho = random_state(&vals, 5);
            let dense = lindblad_rhs(&spec, &h, &rho).unwrap();
            let packed = rhs_packed_f64(&spec, &h, &rho);
            prop_assert!((&dense - &packed).iter().all(|z| z.norm() < 1e-12));
        }

        #[test]
        fn hamiltonian_is_exactly_hermitian(u in prop::collection::vec(0.0f64..1.0, 16), t in 0.0f64..45.0) {
            let spec = SystemSpec::m_type();
            let h = build_hamiltonian(&spec, &case_pulses(&u).channels, t).unwrap().to_dense();
            prop_assert_eq!(h.adjoint(), h.clone());
            for i in 0..5 {
                prop_assert_eq!(h[(i, i)], c(0.0, 0.0));
                for j in 0..5 {
                    if i.abs_diff(j) > 1 {
                        prop_assert_eq!(h[(i, j)], c(0.0, 0.0));
                    }
                }
            }
        }
    }
}
