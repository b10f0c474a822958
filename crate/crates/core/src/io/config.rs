//! TOML problem configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{LossConfig, LossWeights, OrderingConstraint};
use crate::model::{default_jump_channels, JumpChannel, SystemSpec};
use crate::ode::{DensityState, GateMode, IntegratorConfig};
use crate::optim::{OptimConfig, OptimMode};
use crate::problem::ControlProblem;
use crate::pulses::{BoundsSpec, PulseParams, PulseSet, DEFAULT_RANGES, PARAMS_PER_CHANNEL};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemSection {
    pub n_levels: usize,
    pub gamma_natural: f64,
    pub gamma_collisional: f64,
    pub uniform_phase_convention: bool,
    /// 1-based level the population starts in.
    pub initial_level: usize,
    /// Replaces the default equal-branching decay channels when present.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jumps: Option<Vec<JumpChannel>>,
}

impl Default for SystemSection {
    fn default() -> Self {
        Self {
            n_levels: 5,
            gamma_natural: 1.0,
            gamma_collisional: 0.0,
            uniform_phase_convention: false,
            initial_level: 1,
            jumps: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateKind {
    #[default]
    Smooth,
    HardSplit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorSection {
    pub rel_tol: f64,
    pub abs_tol: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_step: Option<f64>,
    pub max_steps: usize,
    pub horizon: f64,
    pub gate: GateKind,
    pub gate_sharpness: f64,
}

impl Default for IntegratorSection {
    fn default() -> Self {
        let d = IntegratorConfig::default();
        Self {
            rel_tol: d.rel_tol,
            abs_tol: d.abs_tol,
            initial_step: d.initial_step,
            max_steps: d.max_steps,
            horizon: d.horizon,
            gate: GateKind::Smooth,
            gate_sharpness: 50.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossSection {
    pub w_init: f64,
    pub w_mid: f64,
    pub w_final: f64,
    pub w_order: f64,
    pub w_barrier: f64,
    pub barrier_sharpness: f64,
    pub order_sharpness: f64,
    pub ordering: Vec<OrderingConstraint>,
}

impl Default for LossSection {
    fn default() -> Self {
        let d = LossConfig::default();
        Self {
            w_init: d.weights.init,
            w_mid: d.weights.mid,
            w_final: d.weights.terminal,
            w_order: d.weights.order,
            w_barrier: d.weights.barrier,
            barrier_sharpness: d.barrier_sharpness,
            order_sharpness: d.order_sharpness,
            ordering: Vec::new(),
        }
    }
}

/// Box bounds: one `[lower, upper]` range per parameter kind, applied to every
/// channel, unless explicit per-parameter vectors are given.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundsSection {
    pub t0: [f64; 2],
    pub sigma: [f64; 2],
    pub omega0: [f64; 2],
    pub delta: [f64; 2],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lower: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub upper: Option<Vec<f64>>,
}

impl Default for BoundsSection {
    fn default() -> Self {
        let r = DEFAULT_RANGES;
        Self {
            t0: [r[0].0, r[0].1],
            sigma: [r[1].0, r[1].1],
            omega0: [r[2].0, r[2].1],
            delta: [r[3].0, r[3].1],
            lower: None,
            upper: None,
        }
    }
}

impl BoundsSection {
    pub fn to_bounds(&self, n_channels: usize) -> Result<BoundsSpec> {
        let n = n_channels * PARAMS_PER_CHANNEL;
        let bounds = match (&self.lower, &self.upper) {
            (None, None) => {
                for (name, r) in [("t0", self.t0), ("sigma", self.sigma), ("omega0", self.omega0), ("delta", self.delta)] {
                    if !(r[0].is_finite() && r[1].is_finite() && r[0] <= r[1]) {
                        return Err(Error::config(
                            format!("optim.bounds.{name}"),
                            format!("need finite [lower, upper] with lower <= upper, got {r:?}"),
                        ));
                    }
                }
                let ranges = [
                    (self.t0[0], self.t0[1]),
                    (self.sigma[0], self.sigma[1]),
                    (self.omega0[0], self.omega0[1]),
                    (self.delta[0], self.delta[1]),
                ];
                BoundsSpec::from_ranges(n_channels, ranges)
            }
            (Some(lower), Some(upper)) => {
                for (key, v) in [("optim.bounds.lower", lower), ("optim.bounds.upper", upper)] {
                    if v.len() != n {
                        return Err(Error::config(key, format!("expected {n} entries, got {}", v.len())));
                    }
                }
                BoundsSpec { lower: lower.clone(), upper: upper.clone() }
            }
            _ => {
                return Err(Error::config(
                    "optim.bounds.lower",
                    "`lower` and `upper` must be given together",
                ))
            }
        };
        bounds.validate()?;
        Ok(bounds)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimSection {
    pub mode: OptimMode,
    pub memory: usize,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub f_tol: f64,
    pub c1: f64,
    pub c2: f64,
    pub max_line_search: usize,
    pub starts: usize,
    pub seed: u64,
    pub bounds: BoundsSection,
}

impl Default for OptimSection {
    fn default() -> Self {
        let d = OptimConfig::new(BoundsSpec::from_pairs(&[]));
        Self {
            mode: d.mode,
            memory: d.memory,
            max_iters: d.max_iters,
            grad_tol: d.grad_tol,
            f_tol: d.f_tol,
            c1: d.c1,
            c2: d.c2,
            max_line_search: d.max_line_search,
            starts: 8,
            seed: 42,
            bounds: BoundsSection::default(),
        }
    }
}

/// Output file names, relative to the `--out` directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    /// Number of uniformly spaced trajectory samples, including both ends.
    pub samples: usize,
    pub trajectory: String,
    pub summary: String,
    pub trace: String,
    /// Best parameters, written as a complete configuration.
    pub params: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            samples: 1000,
            trajectory: "trajectory.csv".into(),
            summary: "summary.json".into(),
            trace: "trace.csv".into(),
            params: "best.toml".into(),
        }
    }
}

/// Everything one run needs. Every field has a default, so an empty file is
/// a valid configuration.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProblemConfig {
    pub system: SystemSection,
    pub integrator: IntegratorSection,
    pub loss: LossSection,
    pub optim: OptimSection,
    pub output: OutputSection,
    /// One entry per channel; all channels are off when omitted.
    pub pulses: Vec<PulseParams>,
}

/// Every configuration key, as `section.key` (array tables use `[]`).
pub const CONFIG_KEYS: &[&str] = &[
    "system.n_levels",
    "system.gamma_natural",
    "system.gamma_collisional",
    "system.uniform_phase_convention",
    "system.initial_level",
    "system.jumps[].from",
    "system.jumps[].to",
    "system.jumps[].rate",
    "pulses[].t0",
    "pulses[].sigma",
    "pulses[].omega0",
    "pulses[].delta",
    "integrator.rel_tol",
    "integrator.abs_tol",
    "integrator.initial_step",
    "integrator.max_steps",
    "integrator.horizon",
    "integrator.gate",
    "integrator.gate_sharpness",
    "loss.w_init",
    "loss.w_mid",
    "loss.w_final",
    "loss.w_order",
    "loss.w_barrier",
    "loss.barrier_sharpness",
    "loss.order_sharpness",
    "loss.ordering[].kind",
    "loss.ordering[].pulse",
    "loss.ordering[].sign",
    "loss.ordering[].order",
    "loss.ordering[].mode",
    "optim.mode",
    "optim.memory",
    "optim.max_iters",
    "optim.grad_tol",
    "optim.f_tol",
    "optim.c1",
    "optim.c2",
    "optim.max_line_search",
    "optim.starts",
    "optim.seed",
    "optim.bounds.t0",
    "optim.bounds.sigma",
    "optim.bounds.omega0",
    "optim.bounds.delta",
    "optim.bounds.lower",
    "optim.bounds.upper",
    "output.samples",
    "output.trajectory",
    "output.summary",
    "output.trace",
    "output.params",
];

impl ProblemConfig {
    /// Parses TOML text, fills defaults and validates. `origin` is used in
    /// error messages.
    pub fn from_toml(text: &str, origin: &Path) -> Result<Self> {
        let mut cfg: ProblemConfig = toml::from_str(text).map_err(|e| Error::ConfigParse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        if cfg.pulses.is_empty() {
            cfg.pulses = PulseSet::off(cfg.system.n_levels.saturating_sub(1)).channels;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn n_channels(&self) -> usize {
        self.system.n_levels.saturating_sub(1)
    }

    pub fn validate(&self) -> Result<()> {
        let system = self.system_spec();
        system.validate()?;
        let n = system.n_levels;
        if self.system.initial_level < 1 || self.system.initial_level > n {
            return Err(Error::config(
                "system.initial_level",
                format!("level {} outside 1..={n}", self.system.initial_level),
            ));
        }
        if self.pulses.len() != self.n_channels() {
            return Err(Error::config(
                "pulses",
                format!("{n} levels need {} pulses, got {}", self.n_channels(), self.pulses.len()),
            ));
        }
        self.pulse_set().validate()?;
        self.integrator_config().validate()?;
        self.loss_config().validate(self.n_channels())?;
        if self.output.samples < 2 {
            return Err(Error::config("output.samples", "need at least 2 samples"));
        }
        if self.optim.starts == 0 {
            return Err(Error::config("optim.starts", "must be >= 1"));
        }
        self.optim_config()?.validate()
    }

    pub fn system_spec(&self) -> SystemSpec {
        let s = &self.system;
        SystemSpec {
            n_levels: s.n_levels,
            gamma_natural: s.gamma_natural,
            gamma_collisional: s.gamma_collisional,
            jump_channels: s
                .jumps
                .clone()
                .unwrap_or_else(|| default_jump_channels(s.n_levels, s.gamma_natural)),
            uniform_phase_convention: s.uniform_phase_convention,
        }
    }

    pub fn integrator_config(&self) -> IntegratorConfig {
        let s = &self.integrator;
        IntegratorConfig {
            rel_tol: s.rel_tol,
            abs_tol: s.abs_tol,
            initial_step: s.initial_step,
            max_steps: s.max_steps,
            horizon: s.horizon,
            gate: match s.gate {
                GateKind::Smooth => GateMode::Smooth { sharpness: s.gate_sharpness },
                GateKind::HardSplit => GateMode::HardSplit,
            },
        }
    }

    pub fn loss_config(&self) -> LossConfig {
        let s = &self.loss;
        LossConfig {
            weights: LossWeights {
                init: s.w_init,
                mid: s.w_mid,
                terminal: s.w_final,
                order: s.w_order,
                barrier: s.w_barrier,
            },
            ordering: s.ordering.clone(),
            barrier_sharpness: s.barrier_sharpness,
            order_sharpness: s.order_sharpness,
            horizon: self.integrator.horizon,
        }
    }

    pub fn bounds(&self) -> Result<BoundsSpec> {
        self.optim.bounds.to_bounds(self.n_channels())
    }

    pub fn optim_config(&self) -> Result<OptimConfig> {
        let s = &self.optim;
        Ok(OptimConfig {
            memory: s.memory,
            max_iters: s.max_iters,
            grad_tol: s.grad_tol,
            f_tol: s.f_tol,
            c1: s.c1,
            c2: s.c2,
            max_line_search: s.max_line_search,
            bounds: self.bounds()?,
            mode: s.mode,
        })
    }

    pub fn pulse_set(&self) -> PulseSet {
        PulseSet::new(self.pulses.clone())
    }

    pub fn problem(&self) -> Result<ControlProblem> {
        let system = self.system_spec();
        let problem = ControlProblem {
            initial_state: DensityState::pure(system.n_levels, self.system.initial_level),
            integrator: self.integrator_config(),
            loss: self.loss_config(),
            bounds: self.bounds()?,
            system,
        };
        problem.validate()?;
        Ok(problem)
    }

    /// Copy of this configuration with the pulses replaced by `params`.
    pub fn with_params(&self, params: &[f64]) -> Result<Self> {
        let mut out = self.clone();
        out.pulses = PulseSet::unpack(params)?.channels;
        Ok(out)
    }
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ProblemConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::ConfigMissing {
        path: path.to_path_buf(),
        source,
    })?;
    ProblemConfig::from_toml(&text, path)
}

pub fn write_config(cfg: &ProblemConfig, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, cfg.to_toml()).map_err(|source| Error::Io {
        path: PathBuf::from(path),
        source,
    })
}
