//! Adaptive integration of the master equation on `[0, T]`.
//!
//! The state vector is the packed Hermitian density matrix followed by
//! quadrature states that accumulate the loss integrals alongside the
//! dynamics:
//!
//! * `q[0] = ∫ g(t)·ρ₁₁ dt`, with `g` a gate that switches on at `T/2`;
//! * `q[k] = ∫ ρ_{k+1,k+1} dt` for the intermediate levels `2 ..= N−1`.

mod rk;

pub use rk::{embedded_rk_step, Dopri5, PiController, StepResult, Tolerances};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::autodiff::Scalar;
use crate::error::{Error, Result};
use crate::model::{hamiltonian_unchecked, offdiag_index, pack_density, unpack_density, LindbladOperator, SystemSpec};
use crate::pulses::{PulseParams, PulseSet};

/// How the `t ≥ T/2` indicator of the initial-level penalty is realized.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GateMode {
    /// `σ(k·(t − T/2))`, continuous in time.
    Smooth { sharpness: f64 },
    /// Integrate `[0, T/2]` and `[T/2, T]` as separate segments with the
    /// indicator constant on each.
    HardSplit,
}

impl Default for GateMode {
    fn default() -> Self {
        GateMode::Smooth { sharpness: 50.0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Chosen automatically when `None`.
    pub initial_step: Option<f64>,
    /// Cap on attempted (accepted + rejected) steps.
    pub max_steps: usize,
    /// Horizon `T`; integration runs over `[0, T]`.
    pub horizon: f64,
    pub gate: GateMode,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            initial_step: None,
            max_steps: 1_000_000,
            horizon: 45.0,
            gate: GateMode::default(),
        }
    }
}

impl IntegratorConfig {
    pub fn tolerances(&self) -> Tolerances {
        Tolerances {
            rel: self.rel_tol,
            abs: self.abs_tol,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("integrator.rel_tol", self.rel_tol),
            ("integrator.abs_tol", self.abs_tol),
            ("integrator.horizon", self.horizon),
        ];
        for (key, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(key, format!("must be finite and > 0 (got {v})")));
            }
        }
        if let Some(h) = self.initial_step {
            if !(h.is_finite() && h > 0.0) {
                return Err(Error::config("integrator.initial_step", "must be > 0"));
            }
        }
        if self.max_steps == 0 {
            return Err(Error::config("integrator.max_steps", "must be >= 1"));
        }
        if let GateMode::Smooth { sharpness } = self.gate {
            if !(sharpness.is_finite() && sharpness > 0.0) {
                return Err(Error::config("integrator.gate_sharpness", "must be > 0"));
            }
        }
        Ok(())
    }
}

/// Packed density matrix plus the running loss integrals.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityState<S = f64> {
    pub n_levels: usize,
    pub y: Vec<S>,
}

impl<S: Scalar> DensityState<S> {
    pub fn rho(&self) -> &[S] {
        &self.y[..self.n_levels * self.n_levels]
    }

    pub fn quad(&self) -> &[S] {
        &self.y[self.n_levels * self.n_levels..]
    }

    /// Population of 1-based level `k`.
    pub fn population(&self, k: usize) -> S {
        self.y[k - 1]
    }

    pub fn trace(&self) -> S {
        let mut t = S::zero();
        for v in &self.y[..self.n_levels] {
            t += *v;
        }
        t
    }

    /// `∫ g(t)·ρ₁₁ dt` over the horizon.
    pub fn late_initial_integral(&self) -> S {
        self.quad()[0]
    }

    /// `∫ ρ_kk dt` for `k = 2 ..= N−1`, in level order.
    pub fn intermediate_integrals(&self) -> &[S] {
        &self.quad()[1..]
    }

    pub fn values(&self) -> DensityState<f64> {
        DensityState {
            n_levels: self.n_levels,
            y: self.y.iter().map(|v| v.value()).collect(),
        }
    }
}

/// Number of quadrature states for an `n`-level chain.
pub fn quad_len(n_levels: usize) -> usize {
    n_levels.saturating_sub(1).max(1)
}

impl DensityState<f64> {
    /// `|k⟩⟨k|` with zeroed integrals.
    pub fn pure(n_levels: usize, k: usize) -> Self {
        let mut y = vec![0.0; n_levels * n_levels + quad_len(n_levels)];
        y[k - 1] = 1.0;
        Self { n_levels, y }
    }

    /// Everything in `|1⟩`.
    pub fn ground(n_levels: usize) -> Self {
        Self::pure(n_levels, 1)
    }

    pub fn from_matrix(rho: &DMatrix<Complex64>) -> Self {
        let n = rho.nrows();
        let mut y = pack_density(rho);
        y.extend(std::iter::repeat_n(0.0, quad_len(n)));
        Self { n_levels: n, y }
    }

    pub fn to_matrix(&self) -> DMatrix<Complex64> {
        unpack_density(self.n_levels, self.rho())
    }

    pub fn populations(&self) -> Vec<f64> {
        self.y[..self.n_levels].to_vec()
    }

    /// `tr(ρ²)`.
    pub fn purity(&self) -> f64 {
        let n = self.n_levels;
        let mut p: f64 = self.y[..n].iter().map(|d| d * d).sum();
        for i in 0..n {
            for j in i + 1..n {
                let k = offdiag_index(n, i, j);
                p += 2.0 * (self.y[k].powi(2) + self.y[k + 1].powi(2));
            }
        }
        p
    }

    /// `sqrt(Σ_{i<j} |ρ_ij|²)`.
    pub fn coherence_norm(&self) -> f64 {
        let n = self.n_levels;
        self.y[n..n * n].iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Smallest eigenvalue of ρ.
    pub fn min_eigenvalue(&self) -> f64 {
        self.to_matrix()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn validate_initial(&self, n_levels: usize) -> Result<()> {
        if self.n_levels != n_levels || self.y.len() != n_levels * n_levels + quad_len(n_levels) {
            return Err(Error::Dimension(format!(
                "initial state is for {} levels, system has {n_levels}",
                self.n_levels
            )));
        }
        if !self.y.iter().all(|v| v.is_finite()) {
            return Err(Error::Numerical("initial state is not finite".into()));
        }
        let tr = self.trace();
        if (tr - 1.0).abs() > 1e-10 {
            return Err(Error::config("initial_state", format!("trace must be 1 (got {tr})")));
        }
        Ok(())
    }
}

/// Accepted step sizes of an adaptive run, per gate segment. Replaying a log
/// reproduces the exact same discretization.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepLog {
    pub segments: Vec<Vec<f64>>,
}

impl StepLog {
    pub fn len(&self) -> usize {
        self.segments.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Step-size policy for one integration.
#[derive(Clone, Copy, Debug)]
pub enum Schedule<'a> {
    Adaptive,
    /// Take exactly the logged steps, without error control.
    Replay(&'a StepLog),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct IntegrationStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

/// Result of integrating to the horizon without sampling.
#[derive(Clone, Debug)]
pub struct Evolution<S> {
    pub final_state: DensityState<S>,
    pub stats: IntegrationStats,
    pub log: StepLog,
}

/// Sampled solution on a uniform time grid.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub horizon: f64,
    pub times: Vec<f64>,
    /// `populations[s][k]` is `ρ_{k+1,k+1}` at `times[s]`.
    pub populations: Vec<Vec<f64>>,
    pub coherence_norms: Vec<f64>,
    /// `rabi[s][j]` is `Ω_{j+1}` at `times[s]`.
    pub rabi: Vec<Vec<f64>>,
    pub final_state: DensityState<f64>,
    pub stats: IntegrationStats,
    pub log: StepLog,
}

impl Trajectory {
    pub fn n_levels(&self) -> usize {
        self.final_state.n_levels
    }

    /// Largest sampled population of 1-based level `k`.
    pub fn max_population(&self, k: usize) -> f64 {
        self.populations
            .iter()
            .map(|row| row[k - 1])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest `|Σ_k ρ_kk − 1|` over the samples.
    pub fn max_trace_drift(&self) -> f64 {
        self.populations
            .iter()
            .map(|row| (row.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

struct Segment {
    end: f64,
    /// `None` means the smooth gate.
    gate: Option<f64>,
}

fn segments(cfg: &IntegratorConfig) -> Vec<Segment> {
    let t = cfg.horizon;
    match cfg.gate {
        GateMode::Smooth { .. } => vec![Segment { end: t, gate: None }],
        GateMode::HardSplit => vec![
            Segment { end: 0.5 * t, gate: Some(0.0) },
            Segment { end: t, gate: Some(1.0) },
        ],
    }
}

/// Right-hand side of the augmented system.
struct MasterEquation<'a, S> {
    op: &'a LindbladOperator,
    pulses: &'a [PulseParams<S>],
    uniform_phase: bool,
    half_horizon: f64,
    sharpness: f64,
}

impl<S: Scalar> MasterEquation<'_, S> {
    fn gate(&self, t: f64, fixed: Option<f64>) -> f64 {
        fixed.unwrap_or_else(|| crate::autodiff::sigmoid_f64(self.sharpness * (t - self.half_horizon)))
    }

    fn eval(&self, t: f64, gate: f64, y: &[S], dy: &mut [S]) {
        let n = self.op.n_levels();
        let nn = n * n;
        let h = hamiltonian_unchecked(self.pulses, t, self.uniform_phase);
        self.op.rhs(&h, &y[..nn], &mut dy[..nn]);
        dy[nn] = y[0] * gate;
        let q = quad_len(n);
        dy[nn + 1..nn + q].copy_from_slice(&y[1..q]);
    }
}

/// Integrates from `rho0` at `t = 0` to the horizon with any scalar type,
/// calling `observer(t, h, y, rk)` after every accepted step.
fn run<S, O>(
    spec: &SystemSpec,
    pulses: &[PulseParams<S>],
    cfg: &IntegratorConfig,
    rho0: &DensityState<f64>,
    schedule: Schedule<'_>,
    mut observer: O,
) -> Result<Evolution<S>>
where
    S: Scalar,
    O: FnMut(f64, f64, &[S], &Dopri5<S>),
{
    spec.validate()?;
    cfg.validate()?;
    if pulses.len() != spec.n_channels() {
        return Err(Error::Dimension(format!(
            "{} levels need {} pulse channels, got {}",
            spec.n_levels,
            spec.n_channels(),
            pulses.len()
        )));
    }
    rho0.validate_initial(spec.n_levels)?;
    let op = LindbladOperator::new(spec)?;
    let sys = MasterEquation {
        op: &op,
        pulses,
        uniform_phase: spec.uniform_phase_convention,
        half_horizon: 0.5 * cfg.horizon,
        sharpness: match cfg.gate {
            GateMode::Smooth { sharpness } => sharpness,
            GateMode::HardSplit => 0.0,
        },
    };
    let tol = cfg.tolerances();
    let dim = rho0.y.len();
    let mut y: Vec<S> = rho0.y.iter().map(|&v| S::constant(v)).collect();
    let mut rk = Dopri5::<S>::new(dim);
    let mut stats = IntegrationStats::default();
    let mut log = StepLog::default();
    let rhs_evals = std::cell::Cell::new(0usize);
    let mut t = 0.0;
    let mut h = cfg.initial_step.unwrap_or(0.0);

    for (seg_index, seg) in segments(cfg).iter().enumerate() {
        let gate = seg.gate;
        let mut f = |t: f64, y: &[S], dy: &mut [S]| {
            rhs_evals.set(rhs_evals.get() + 1);
            sys.eval(t, sys.gate(t, gate), y, dy)
        };
        f(t, &y, &mut rk.k[0]);
        let mut steps = Vec::new();
        match schedule {
            Schedule::Replay(recorded) => {
                let planned = recorded.segments.get(seg_index).ok_or_else(|| {
                    Error::Integration { t, reason: "step log has too few segments".into() }
                })?;
                for (i, &hs) in planned.iter().enumerate() {
                    rk.step(&mut f, t, &y, hs);
                    let t_next = if i + 1 == planned.len() { seg.end } else { t + hs };
                    observer(t, hs, &y, &rk);
                    std::mem::swap(&mut y, &mut rk.y_new);
                    rk.advance();
                    t = t_next;
                    steps.push(hs);
                }
                stats.accepted += planned.len();
                if t != seg.end {
                    return Err(Error::Integration {
                        t,
                        reason: "replayed steps do not reach the segment end".into(),
                    });
                }
            }
            Schedule::Adaptive => {
                if h <= 0.0 {
                    let f0 = rk.k[0].clone();
                    h = rk::initial_step(&mut f, t, &y, &f0, tol, seg.end - t);
                }
                let mut controller = PiController::default();
                while t < seg.end {
                    if stats.accepted + stats.rejected >= cfg.max_steps {
                        return Err(Error::Integration {
                            t,
                            reason: format!("max_steps ({}) exceeded", cfg.max_steps),
                        });
                    }
                    let last = t + 1.01 * h >= seg.end;
                    if last {
                        h = seg.end - t;
                    }
                    if h <= 16.0 * f64::EPSILON * t.abs().max(1.0) {
                        return Err(Error::Integration {
                            t,
                            reason: format!("step size underflow (h = {h:e})"),
                        });
                    }
                    rk.step(&mut f, t, &y, h);
                    let err = tol.error_norm(&rk.err, &y, &rk.y_new);
                    if !err.is_finite() {
                        return Err(Error::Numerical(format!(
                            "non-finite state in master-equation right-hand side at t = {t}"
                        )));
                    }
                    let (accepted, h_next) = controller.propose(err, h);
                    if accepted {
                        observer(t, h, &y, &rk);
                        std::mem::swap(&mut y, &mut rk.y_new);
                        rk.advance();
                        steps.push(h);
                        t = if last { seg.end } else { t + h };
                        stats.accepted += 1;
                    } else {
                        stats.rejected += 1;
                    }
                    h = h_next;
                }
            }
        }
        log.segments.push(steps);
    }

    stats.rhs_evals = rhs_evals.get();
    if !y.iter().all(|v| v.is_finite()) {
        return Err(Error::Numerical("non-finite final state".into()));
    }
    Ok(Evolution {
        final_state: DensityState { n_levels: spec.n_levels, y },
        stats,
        log,
    })
}

/// Integrates to the horizon and returns only the final state. Generic over
/// the scalar, which is how dual-number gradients flow through the solver.
pub fn evolve<S: Scalar>(
    spec: &SystemSpec,
    pulses: &[PulseParams<S>],
    cfg: &IntegratorConfig,
    rho0: &DensityState<f64>,
    schedule: Schedule<'_>,
) -> Result<Evolution<S>> {
    run(spec, pulses, cfg, rho0, schedule, |_, _, _, _| {})
}

/// Integrates and samples the solution on `samples` uniformly spaced times
/// (including `0` and `T`) through the pair's continuous extension.
pub fn integrate(
    spec: &SystemSpec,
    pulses: &PulseSet,
    cfg: &IntegratorConfig,
    rho0: &DensityState<f64>,
    samples: usize,
) -> Result<Trajectory> {
    if samples < 2 {
        return Err(Error::config("output.samples", "need at least 2 samples"));
    }
    let n = spec.n_levels;
    let horizon = cfg.horizon;
    let grid: Vec<f64> = (0..samples)
        .map(|i| {
            if i + 1 == samples {
                horizon
            } else {
                horizon * i as f64 / (samples - 1) as f64
            }
        })
        .collect();
    let mut populations = Vec::with_capacity(samples);
    let mut coherence_norms = Vec::with_capacity(samples);
    let mut record = |y: &[f64]| {
        let s = DensityState { n_levels: n, y: y.to_vec() };
        populations.push(s.populations());
        coherence_norms.push(s.coherence_norm());
    };
    record(&rho0.y);
    let mut next = 1;
    let mut buf = vec![0.0; rho0.y.len()];
    let evolution = run(spec, &pulses.channels, cfg, rho0, Schedule::Adaptive, |t, h, y, rk| {
        let t_end = t + h;
        while next < samples && grid[next] <= t_end {
            let theta = ((grid[next] - t) / h).clamp(0.0, 1.0);
            if theta == 1.0 {
                record(&rk.y_new);
            } else {
                rk.interpolate(y, h, theta, &mut buf);
                record(&buf);
            }
            next += 1;
        }
    })?;
    // Rounding in the step sum can leave the final grid point unvisited.
    while next < samples {
        record(&evolution.final_state.y);
        next += 1;
    }
    let rabi = grid
        .iter()
        .map(|&t| pulses.channels.iter().map(|p| p.rabi(t)).collect())
        .collect();
    Ok(Trajectory {
        horizon,
        times: grid,
        populations,
        coherence_norms,
        rabi,
        final_state: evolution.final_state,
        stats: evolution.stats,
        log: evolution.log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::JumpChannel;

    fn quiet_pulses(n_channels: usize) -> PulseSet {
        PulseSet::off(n_channels)
    }

    #[test]
    fn stationary_without_drive_or_decay() {
        let spec = SystemSpec::m_type().without_dissipation();
        let cfg = IntegratorConfig { horizon: 10.0, ..Default::default() };
        let traj = integrate(&spec, &quiet_pulses(4), &cfg, &DensityState::ground(5), 11).unwrap();
        for row in &traj.populations {
            assert_eq!(row, &vec![1.0, 0.0, 0.0, 0.0, 0.0]);
        }
        assert_eq!(traj.times.first(), Some(&0.0));
        assert_eq!(traj.times.last(), Some(&10.0));
    }

    #[test]
    fn quadratures_integrate_populations() {
        // ρ₃₃ ≡ 1 → ∫ρ₃₃ = T; gate integral of ρ₁₁ is 0.
        let spec = SystemSpec::m_type().without_dissipation();
        let cfg = IntegratorConfig { horizon: 40.0, ..Default::default() };
        let ev = evolve::<f64>(&spec, &quiet_pulses(4).channels, &cfg, &DensityState::pure(5, 3), Schedule::Adaptive)
            .unwrap();
        let q = ev.final_state.quad();
        assert!((q[2] - 40.0).abs() < 1e-9);
        assert_eq!(q[0], 0.0);
        // ρ₁₁ ≡ 1 with the hard split: exactly T/2.
        let cfg = IntegratorConfig { horizon: 40.0, gate: GateMode::HardSplit, ..Default::default() };
        let ev = evolve::<f64>(&spec, &quiet_pulses(4).channels, &cfg, &DensityState::ground(5), Schedule::Adaptive)
            .unwrap();
        assert!((ev.final_state.late_initial_integral() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn replay_reproduces_adaptive_run_bit_for_bit() {
        let spec = SystemSpec::m_type();
        let ps = crate::fixtures::table2();
        let cfg = IntegratorConfig::default();
        let a = evolve::<f64>(&spec, &ps.channels, &cfg, &DensityState::ground(5), Schedule::Adaptive).unwrap();
        let b = evolve::<f64>(&spec, &ps.channels, &cfg, &DensityState::ground(5), Schedule::Replay(&a.log)).unwrap();
        assert_eq!(a.final_state, b.final_state);
        assert_eq!(a.log, b.log);
    }

    #[test]
    fn max_steps_exhaustion_reports_time() {
        let spec = SystemSpec::m_type();
        let cfg = IntegratorConfig { max_steps: 5, ..Default::default() };
        let err = evolve::<f64>(&spec, &crate::fixtures::table3().channels, &cfg, &DensityState::ground(5), Schedule::Adaptive)
            .unwrap_err();
        match err {
            Error::Integration { t, .. } => assert!((0.0..45.0).contains(&t)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn nan_parameters_are_numerical_errors() {
        let spec = SystemSpec::m_type();
        let mut ps = crate::fixtures::table3();
        ps.channels[0].omega0 = f64::NAN;
        let err = evolve::<f64>(&spec, &ps.channels, &IntegratorConfig::default(), &DensityState::ground(5), Schedule::Adaptive)
            .unwrap_err();
        assert!(matches!(err, Error::Numerical(_)), "{err:?}");
    }

    #[test]
    fn initial_state_must_have_unit_trace() {
        let spec = SystemSpec::m_type();
        let mut rho0 = DensityState::ground(5);
        rho0.y[0] = 0.5;
        let r = integrate(&spec, &quiet_pulses(4), &IntegratorConfig::default(), &rho0, 10);
        assert!(matches!(r, Err(Error::Config { .. })));
    }

    #[test]
    fn custom_single_channel_decay() {
        let spec = SystemSpec {
            n_levels: 3,
            gamma_natural: 1.0,
            gamma_collisional: 0.0,
            jump_channels: vec![JumpChannel::new(2, 1, 2.0)],
            uniform_phase_convention: false,
        };
        let cfg = IntegratorConfig { horizon: 1.0, ..Default::default() };
        let traj = integrate(&spec, &quiet_pulses(2), &cfg, &DensityState::pure(3, 2), 3).unwrap();
        let p = traj.final_state.population(2);
        assert!((p - (-2.0f64).exp()).abs() < 1e-8);
    }
}
