//! A complete control problem: system, integrator, loss and bounds, with the
//! composite objective evaluated over a flat parameter vector.

use crate::autodiff::Scalar;
use crate::error::{Error, Result};
use crate::loss::{barrier_penalty, dynamics_terms, ordering_terms, LossBreakdown, LossConfig};
use crate::model::SystemSpec;
use crate::ode::{evolve, integrate, DensityState, IntegratorConfig, Schedule, StepLog, Trajectory};
use crate::pulses::{default_bounds, unpack_params, BoundsSpec, PulseParams, PulseSet, PARAMS_PER_CHANNEL};

#[derive(Clone, Debug)]
pub struct ControlProblem {
    pub system: SystemSpec,
    pub integrator: IntegratorConfig,
    pub loss: LossConfig,
    pub bounds: BoundsSpec,
    pub initial_state: DensityState,
}

/// Loss pieces plus the discretization that produced them.
#[derive(Clone, Debug)]
pub struct Evaluation<S> {
    pub breakdown: LossBreakdown<S>,
    pub final_state: DensityState<S>,
    pub log: StepLog,
}

impl ControlProblem {
    /// Default problem for `system`: ground-state start, default tolerances,
    /// unit weights and the default box.
    pub fn for_system(system: SystemSpec) -> Result<Self> {
        system.validate()?;
        let n = system.n_levels;
        let problem = Self {
            bounds: default_bounds(system.n_channels()),
            initial_state: DensityState::ground(n),
            integrator: IntegratorConfig::default(),
            loss: LossConfig::default(),
            system,
        };
        problem.validate()?;
        Ok(problem)
    }

    pub fn m_type() -> Self {
        Self::for_system(SystemSpec::m_type()).expect("default M-type problem is valid")
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        self.integrator.validate()?;
        self.loss.validate(self.system.n_channels())?;
        self.bounds.validate()?;
        if self.bounds.len() != self.n_params() {
            return Err(Error::config(
                "optim.bounds",
                format!("expected {} bounds, got {}", self.n_params(), self.bounds.len()),
            ));
        }
        if self.loss.horizon != self.integrator.horizon {
            return Err(Error::config(
                "loss.horizon",
                format!(
                    "loss horizon {} differs from integrator horizon {}",
                    self.loss.horizon, self.integrator.horizon
                ),
            ));
        }
        self.initial_state.validate_initial(self.system.n_levels)
    }

    pub fn n_params(&self) -> usize {
        PARAMS_PER_CHANNEL * self.system.n_channels()
    }

    /// Sets the horizon of both the integrator and the loss.
    pub fn set_horizon(&mut self, horizon: f64) {
        self.integrator.horizon = horizon;
        self.loss.horizon = horizon;
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n_params() {
            return Err(Error::Dimension(format!(
                "expected {} parameters, got {len}",
                self.n_params()
            )));
        }
        Ok(())
    }

    /// Evaluates every loss piece with any scalar type.
    pub fn evaluate<S: Scalar>(&self, params: &[S], schedule: Schedule<'_>) -> Result<Evaluation<S>> {
        self.check_len(params.len())?;
        let pulses: Vec<PulseParams<S>> = unpack_params(params)?;
        let evolution = evolve(&self.system, &pulses, &self.integrator, &self.initial_state, schedule)?;
        let (init, mid, terminal) = dynamics_terms(&evolution.final_state, &self.loss.weights);
        let centers: Vec<S> = pulses.iter().map(|p| p.t0).collect();
        let order = ordering_terms(&centers, &self.loss);
        let barrier = if self.loss.weights.barrier == 0.0 {
            S::zero()
        } else {
            barrier_penalty(params, &self.bounds, self.loss.barrier_sharpness) * self.loss.weights.barrier
        };
        Ok(Evaluation {
            breakdown: LossBreakdown { init, mid, terminal, order, barrier },
            final_state: evolution.final_state,
            log: evolution.log,
        })
    }

    pub fn loss(&self, params: &[f64]) -> Result<f64> {
        Ok(self.evaluate(params, Schedule::Adaptive)?.breakdown.total())
    }

    pub fn breakdown(&self, params: &[f64]) -> Result<LossBreakdown> {
        Ok(self.evaluate(params, Schedule::Adaptive)?.breakdown)
    }

    /// Sampled trajectory for plotting and reporting.
    pub fn simulate(&self, params: &[f64], samples: usize) -> Result<Trajectory> {
        self.check_len(params.len())?;
        let pulses = PulseSet::unpack(params)?;
        integrate(&self.system, &pulses, &self.integrator, &self.initial_state, samples)
    }
}

/// Integrates and sums the dynamical, ordering and barrier terms.
pub fn total_loss(
    spec: &SystemSpec,
    pulses: &PulseSet,
    cfg_ode: &IntegratorConfig,
    cfg_loss: &LossConfig,
    bounds: &BoundsSpec,
) -> Result<f64> {
    let problem = ControlProblem {
        system: spec.clone(),
        integrator: cfg_ode.clone(),
        loss: cfg_loss.clone(),
        bounds: bounds.clone(),
        initial_state: DensityState::ground(spec.n_levels),
    };
    problem.validate()?;
    problem.loss(&pulses.pack())
}
