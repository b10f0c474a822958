//! Python bindings: a `Problem` class over the core control problem plus a
//! few free helpers.

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use lindblad_pulse::autodiff::{grad_dual, grad_fd, FdOptions, FdScheme};
use lindblad_pulse::io::load_config;
use lindblad_pulse::model::SystemSpec;
use lindblad_pulse::optim::{multistart, OptimConfig, OptimMode};
use lindblad_pulse::pulses::{self, PulseParams};
use lindblad_pulse::{fixtures, ControlProblem, Error};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Config { .. } | Error::Dimension(_) | Error::ConfigParse { .. } => PyValueError::new_err(e.to_string()),
        Error::ConfigMissing { .. } | Error::Io { .. } => PyIOError::new_err(e.to_string()),
        Error::Integration { .. } | Error::Numerical(_) => PyRuntimeError::new_err(e.to_string()),
    }
}

/// A control problem: system, integrator settings, loss and parameter box.
#[pyclass(module = "lindblad_pulse_py")]
struct Problem {
    inner: ControlProblem,
    optim: OptimConfig,
}

#[pymethods]
impl Problem {
    /// Loads `config` (a TOML file), or builds the default problem for an
    /// `n_levels` chain when no path is given.
    #[new]
    #[pyo3(signature = (config=None, n_levels=5))]
    fn new(config: Option<&str>, n_levels: usize) -> PyResult<Self> {
        match config {
            Some(path) => {
                let cfg = load_config(path).map_err(to_py)?;
                Ok(Self {
                    inner: cfg.problem().map_err(to_py)?,
                    optim: cfg.optim_config().map_err(to_py)?,
                })
            }
            None => {
                let inner = ControlProblem::for_system(SystemSpec::chain(n_levels, 1.0)).map_err(to_py)?;
                let optim = OptimConfig::new(inner.bounds.clone());
                Ok(Self { inner, optim })
            }
        }
    }

    #[getter]
    fn n_levels(&self) -> usize {
        self.inner.system.n_levels
    }

    #[getter]
    fn n_params(&self) -> usize {
        self.inner.n_params()
    }

    #[getter]
    fn horizon(&self) -> f64 {
        self.inner.integrator.horizon
    }

    #[getter]
    fn bounds(&self) -> Vec<(f64, f64)> {
        self.inner.bounds.pairs().collect()
    }

    fn loss(&self, py: Python<'_>, params: Vec<f64>) -> PyResult<f64> {
        py.detach(|| self.inner.loss(&params)).map_err(to_py)
    }

    /// Loss pieces as a dict with keys `total, init, mid, terminal, order, barrier`.
    fn breakdown<'py>(&self, py: Python<'py>, params: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
        let b = py.detach(|| self.inner.breakdown(&params)).map_err(to_py)?;
        let d = PyDict::new(py);
        d.set_item("total", b.total())?;
        d.set_item("init", b.init)?;
        d.set_item("mid", b.mid)?;
        d.set_item("terminal", b.terminal)?;
        d.set_item("order", b.order)?;
        d.set_item("barrier", b.barrier)?;
        Ok(d)
    }

    /// Gradient by dual numbers (`method="dual"`) or finite differences
    /// (`method="fd"`, relative step `h`, `scheme` "central" or "forward").
    #[pyo3(signature = (params, method="dual", h=1e-4, scheme="central"))]
    fn gradient(&self, py: Python<'_>, params: Vec<f64>, method: &str, h: f64, scheme: &str) -> PyResult<Vec<f64>> {
        let report = match method {
            "dual" => py.detach(|| grad_dual(&self.inner, &params)),
            "fd" => {
                let scheme: FdScheme = scheme.parse().map_err(|e: String| PyValueError::new_err(e))?;
                let opts = FdOptions { h, scheme, ..FdOptions::default() };
                py.detach(|| grad_fd(&self.inner, &params, opts))
            }
            other => return Err(PyValueError::new_err(format!("unknown method `{other}`, expected dual or fd"))),
        };
        Ok(report.map_err(to_py)?.gradient)
    }

    /// Sampled trajectory as a dict of `times`, `populations` (one row per
    /// sample), `rabi` and `final_populations`.
    #[pyo3(signature = (params, samples=1000))]
    fn simulate<'py>(&self, py: Python<'py>, params: Vec<f64>, samples: usize) -> PyResult<Bound<'py, PyDict>> {
        let traj = py.detach(|| self.inner.simulate(&params, samples)).map_err(to_py)?;
        let d = PyDict::new(py);
        d.set_item("times", traj.times.clone())?;
        d.set_item("populations", traj.populations.clone())?;
        d.set_item("rabi", traj.rabi.clone())?;
        d.set_item("final_populations", traj.final_state.populations())?;
        Ok(d)
    }

    /// Seeded multi-start minimization. Returns the best start's `params`,
    /// `loss`, `termination`, `iterations` and its `trace` of losses.
    #[pyo3(signature = (starts=8, seed=42, mode=None, max_iters=None, threads=None))]
    fn optimize<'py>(
        &self,
        py: Python<'py>,
        starts: usize,
        seed: u64,
        mode: Option<&str>,
        max_iters: Option<usize>,
        threads: Option<usize>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let mut cfg = self.optim.clone();
        if let Some(m) = mode {
            cfg.mode = m.parse::<OptimMode>().map_err(|e: String| PyValueError::new_err(e))?;
        }
        if let Some(n) = max_iters {
            cfg.max_iters = n;
        }
        let report = py.detach(|| multistart(&self.inner, &cfg, starts, seed, threads)).map_err(to_py)?;
        let best = report.best_report();
        let d = PyDict::new(py);
        d.set_item("params", best.best_params.clone())?;
        d.set_item("loss", best.best_loss)?;
        d.set_item("termination", format!("{:?}", best.termination))?;
        d.set_item("iterations", best.iterates.len() - 1)?;
        d.set_item("trace", best.iterates.iter().map(|it| it.loss).collect::<Vec<_>>())?;
        d.set_item("best_start", report.best)?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!(
            "Problem(n_levels={}, n_params={}, horizon={})",
            self.inner.system.n_levels,
            self.inner.n_params(),
            self.inner.integrator.horizon
        )
    }
}

/// `omega0 · exp(−(t − t0)² / sigma²)`.
#[pyfunction]
fn rabi_envelope(t0: f64, sigma: f64, omega0: f64, t: f64) -> f64 {
    pulses::rabi_envelope(&PulseParams::new(t0, sigma, omega0, 0.0), t)
}

/// Default `(lower, upper)` pairs for `n_channels` pulses.
#[pyfunction]
fn default_bounds(n_channels: usize) -> Vec<(f64, f64)> {
    pulses::default_bounds(n_channels).pairs().collect()
}

/// Packed parameters of reference pulse set 1, 2 or 3.
#[pyfunction]
fn reference_set(number: usize) -> PyResult<Vec<f64>> {
    fixtures::table(number)
        .map(|s| s.pack())
        .ok_or_else(|| PyValueError::new_err(format!("no reference set {number}, expected 1, 2 or 3")))
}

#[pymodule]
fn lindblad_pulse_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Problem>()?;
    m.add_function(wrap_pyfunction!(rabi_envelope, m)?)?;
    m.add_function(wrap_pyfunction!(default_bounds, m)?)?;
    m.add_function(wrap_pyfunction!(reference_set, m)?)?;
    Ok(())
}
