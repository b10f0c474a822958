//! CSV trajectories and traces, and the JSON run summary.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::loss::LossBreakdown;
use crate::ode::{IntegrationStats, Trajectory};
use crate::optim::{Iterate, MultiStartReport, Termination};
use crate::pulses::{param_label, PulseSet};

/// `Γ` in hertz used for the physical-unit echo.
pub const GAMMA_HZ: f64 = 5.0e6;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e),
    }
}

/// Twelve significant digits.
fn num(v: f64) -> String {
    format!("{v:.11e}")
}

pub fn trajectory_header(n_levels: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((1..=n_levels).map(|k| format!("rho{k}{k}")));
    h.extend((1..n_levels).map(|j| format!("omega{j}")));
    h
}

pub fn trace_header(n_params: usize) -> Vec<String> {
    let mut h: Vec<String> = ["iter", "loss", "pgnorm", "step"].iter().map(|s| s.to_string()).collect();
    h.extend((0..n_params).map(param_label));
    h
}

/// One row per sample: time, populations, Rabi frequencies.
pub fn write_trajectory(traj: &Trajectory, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(trajectory_header(traj.n_levels())).map_err(csv_err(path))?;
    for (s, &t) in traj.times.iter().enumerate() {
        let mut row = vec![num(t)];
        row.extend(traj.populations[s].iter().map(|&v| num(v)));
        row.extend(traj.rabi[s].iter().map(|&v| num(v)));
        w.write_record(&row).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// One row per accepted iterate.
pub fn write_trace(iterates: &[Iterate], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    let n = iterates.first().map_or(0, |it| it.params.len());
    w.write_record(trace_header(n)).map_err(csv_err(path))?;
    for it in iterates {
        let mut row = vec![it.iter.to_string(), num(it.loss), num(it.pgnorm), num(it.step)];
        row.extend(it.params.iter().map(|&v| num(v)));
        w.write_record(&row).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LossSummary {
    pub total: f64,
    pub init: f64,
    pub mid: f64,
    pub terminal: f64,
    pub order: f64,
    pub barrier: f64,
}

impl From<LossBreakdown> for LossSummary {
    fn from(b: LossBreakdown) -> Self {
        Self {
            total: b.total(),
            init: b.init,
            mid: b.mid,
            terminal: b.terminal,
            order: b.order,
            barrier: b.barrier,
        }
    }
}

/// Physical-unit view of the pulses at `Γ = 5 MHz`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhysicalUnits {
    pub gamma_mhz: f64,
    pub time_unit_us: f64,
    pub horizon_us: f64,
    pub pulses: Vec<PhysicalPulse>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhysicalPulse {
    pub t0_us: f64,
    pub sigma_us: f64,
    pub omega0_mhz: f64,
    pub delta_mhz: f64,
}

impl PhysicalUnits {
    pub fn new(pulses: &PulseSet, horizon: f64) -> Self {
        let mhz = GAMMA_HZ / 1e6;
        let us = 1e6 / GAMMA_HZ;
        Self {
            gamma_mhz: mhz,
            time_unit_us: us,
            horizon_us: horizon * us,
            pulses: pulses
                .channels
                .iter()
                .map(|p| PhysicalPulse {
                    t0_us: p.t0 * us,
                    sigma_us: p.sigma * us,
                    omega0_mhz: p.omega0 * mhz,
                    delta_mhz: p.delta * mhz,
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StartSummary {
    pub index: usize,
    pub seed: u64,
    pub best_loss: Option<f64>,
    pub iterations: Option<usize>,
    pub termination: Option<Termination>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OptimizationSummary {
    pub best_start: usize,
    pub best_loss: f64,
    pub termination: Termination,
    pub iterations: usize,
    pub loss_evals: usize,
    pub grad_evals: usize,
    pub starts: Vec<StartSummary>,
}

impl From<&MultiStartReport> for OptimizationSummary {
    fn from(m: &MultiStartReport) -> Self {
        let best = m.best_report();
        Self {
            best_start: m.best,
            best_loss: best.best_loss,
            termination: best.termination,
            iterations: best.iterates.len() - 1,
            loss_evals: best.loss_evals,
            grad_evals: best.grad_evals,
            starts: m
                .runs
                .iter()
                .map(|r| match &r.outcome {
                    Ok(rep) => StartSummary {
                        index: r.index,
                        seed: r.seed,
                        best_loss: Some(rep.best_loss),
                        iterations: Some(rep.iterates.len() - 1),
                        termination: Some(rep.termination),
                        error: None,
                    },
                    Err(e) => StartSummary {
                        index: r.index,
                        seed: r.seed,
                        best_loss: None,
                        iterations: None,
                        termination: None,
                        error: Some(e.clone()),
                    },
                })
                .collect(),
        }
    }
}

/// Structured result of a simulation or optimization run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub command: String,
    pub n_levels: usize,
    pub horizon: f64,
    pub params: Vec<f64>,
    pub loss: LossSummary,
    /// `ρ_kk(T)` for every level.
    pub final_populations: Vec<f64>,
    /// `ρ_NN(T)`.
    pub target_population: f64,
    /// Gated `∫ρ₁₁ dt` over the second half of the horizon.
    pub late_initial_integral: f64,
    /// `∫ρ_kk dt` for the intermediate levels `2 ..= N−1`.
    pub intermediate_integrals: Vec<f64>,
    /// Largest sampled population of every level.
    pub max_populations: Vec<f64>,
    pub max_trace_drift: f64,
    pub final_purity: f64,
    pub final_min_eigenvalue: f64,
    pub integration: IntegrationStatsSummary,
    pub physical_units: PhysicalUnits,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub optimization: Option<OptimizationSummary>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IntegrationStatsSummary {
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub rhs_evals: usize,
}

impl From<IntegrationStats> for IntegrationStatsSummary {
    fn from(s: IntegrationStats) -> Self {
        Self {
            accepted_steps: s.accepted,
            rejected_steps: s.rejected,
            rhs_evals: s.rhs_evals,
        }
    }
}

impl RunSummary {
    pub fn new(command: &str, params: &[f64], loss: LossBreakdown, traj: &Trajectory) -> Result<Self> {
        let n = traj.n_levels();
        let state = &traj.final_state;
        let pulses = PulseSet::unpack(params)?;
        Ok(Self {
            command: command.to_string(),
            n_levels: n,
            horizon: traj.horizon,
            params: params.to_vec(),
            loss: loss.into(),
            final_populations: state.populations(),
            target_population: state.population(n),
            late_initial_integral: state.late_initial_integral(),
            intermediate_integrals: state.intermediate_integrals().to_vec(),
            max_populations: (1..=n).map(|k| traj.max_population(k)).collect(),
            max_trace_drift: traj.max_trace_drift(),
            final_purity: state.purity(),
            final_min_eigenvalue: state.min_eigenvalue(),
            integration: traj.stats.into(),
            physical_units: PhysicalUnits::new(&pulses, traj.horizon),
            optimization: None,
        })
    }
}

pub fn write_summary(summary: &RunSummary, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, summary).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e),
    })?;
    writeln!(w).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::problem::ControlProblem;

    #[test]
    fn trajectory_file_shape_and_row_sums() {
        let problem = ControlProblem::m_type();
        let params = fixtures::table2().pack();
        let traj = problem.simulate(&params, 50).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traj.csv");
        write_trajectory(&traj, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 51);
        assert_eq!(
            text.lines().next().unwrap(),
            "t,rho11,rho22,rho33,rho44,rho55,omega1,omega2,omega3,omega4"
        );
        let mut r = csv::Reader::from_path(&path).unwrap();
        for rec in r.records() {
            let rec = rec.unwrap();
            let sum: f64 = (1..=5).map(|k| rec[k].parse::<f64>().unwrap()).sum();
            assert!((sum - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn trace_header_layout() {
        let h = trace_header(16).join(",");
        assert!(h.starts_with("iter,loss,pgnorm,step,t1,s1,o1,d1,t2"));
        assert!(h.ends_with("t4,s4,o4,d4"));
    }

    #[test]
    fn summary_preserves_values() {
        let problem = ControlProblem::m_type();
        let params = fixtures::table3().pack();
        let traj = problem.simulate(&params, 20).unwrap();
        let loss = problem.breakdown(&params).unwrap();
        let s = RunSummary::new("simulate", &params, loss, &traj).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("summary.json");
        write_summary(&s, &path).unwrap();
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        let read = v["target_population"].as_f64().unwrap();
        assert_eq!(read, traj.final_state.population(5));
        assert_eq!(v["physical_units"]["time_unit_us"].as_f64().unwrap(), 0.2);
        assert_eq!(v["physical_units"]["horizon_us"].as_f64().unwrap(), 9.0);
    }

    #[test]
    fn unwritable_path_is_an_io_error() {
        let problem = ControlProblem::m_type();
        let traj = problem.simulate(&fixtures::table3().pack(), 5).unwrap();
        let err = write_trajectory(&traj, "/nonexistent-dir/x.csv").unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}
