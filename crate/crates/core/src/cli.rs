//! Command-line front end: `simulate`, `optimize` and `gradcheck`.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::autodiff::{grad_dual, grad_fd, max_error, quadratic_self_test, relative_errors, FdOptions, FdScheme, GradientReport};
use crate::error::{Error, Result};
use crate::io::{
    load_config, write_config, write_summary, write_trace, write_trajectory, OptimizationSummary, ProblemConfig,
    RunSummary,
};
use crate::optim::{multistart, MultiStartReport, OptimMode};
use crate::pulses::param_label;

/// Reference for every configuration key, shown by `--help`.
pub const CONFIG_REFERENCE: &str = "\
CONFIGURATION (TOML; every key is optional)

[system]
  n_levels                  number of levels N in the chain (5)
  gamma_natural             total decay rate of each excited level, units of Γ (1.0)
  gamma_collisional         extra dephasing of excited levels (0.0)
  uniform_phase_convention  e^{-iΔt} on every coupling instead of alternating signs (false)
  initial_level             1-based level holding all population at t = 0 (1)
[[system.jumps]]            replaces the default equal-branching decay channels
  from, to, rate            collapse operator |to><from| with the given rate

[[pulses]]                  one table per channel j (couples |j> and |j+1>)
  t0, sigma, omega0, delta  center, width, peak Rabi frequency, detuning
                            envelope omega0 * exp(-(t - t0)^2 / sigma^2)

[integrator]
  rel_tol, abs_tol          error tolerances (1e-8, 1e-10)
  initial_step              first step size (chosen automatically)
  max_steps                 cap on attempted steps (1000000)
  horizon                   final time T, units of 1/Γ (45.0)
  gate                      \"smooth\" or \"hard_split\" indicator for the late rho11 integral
  gate_sharpness            sigmoid sharpness of the smooth gate (50.0)

[loss]
  w_init, w_mid, w_final    weights of the late rho11 integral, intermediate
                            integrals and terminal error (1.0 each)
  w_order, w_barrier        weights of ordering terms and bound barriers (1.0 each)
  barrier_sharpness         softplus barrier sharpness (10.0)
  order_sharpness           ordering sigmoid sharpness (5.0)
[[loss.ordering]]
  kind                      \"reference\" or \"chain\"
  pulse, sign               reference: pulse j last (sign = 1) or first (sign = -1)
  order                     chain: [a, b, c] asks for t_a > t_b > t_c
  mode                      \"encourage\" (default) or \"discourage\"

[optim]
  mode                      \"lbfgsb\" (default) or \"projected_lbfgs\"
  memory                    stored correction pairs (10)
  max_iters                 iteration budget per start (500)
  grad_tol                  projected-gradient infinity-norm tolerance (1e-6)
  f_tol                     relative loss-decrease tolerance (1e-10)
  c1, c2                    Wolfe constants (1e-4, 0.9)
  max_line_search           trial points per line search (25)
  starts, seed              multi-start count and base seed (8, 42)
[optim.bounds]
  t0, sigma, omega0, delta  [lower, upper] per parameter kind
                            ([15, 35], [2, 4], [1, 35], [-5, 5])
  lower, upper              explicit per-parameter vectors, overriding the ranges

[output]
  samples                   trajectory samples including both ends (1000)
  trajectory, summary       file names inside --out (trajectory.csv, summary.json)
  trace, params             iterate trace and best-parameter config (trace.csv, best.toml)

ENVIRONMENT
  PULSE_THREADS             cap on concurrently running optimizer starts

EXIT CODES
  0 success, 1 gradient check failed, 2 configuration error,
  3 integration or numerical failure, 4 file I/O error";

#[derive(Debug, Parser)]
#[command(name = "lindblad-pulse", version, about = "Simulate and optimize Gaussian pulse sequences for population transfer in driven multilevel chains.", after_long_help = CONFIG_REFERENCE)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate the configured pulses and write the trajectory and summary.
    Simulate(SimulateArgs),
    /// Minimize the loss from seeded random starts inside the bounds.
    Optimize(OptimizeArgs),
    /// Compare dual-number and finite-difference gradients.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Write the best start's iterate trace.
    #[arg(long)]
    pub trace: bool,
    /// Base seed (overrides optim.seed).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of starts (overrides optim.starts).
    #[arg(long)]
    pub starts: Option<usize>,
    /// Optimizer mode (overrides optim.mode).
    #[arg(long)]
    pub mode: Option<OptimMode>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Relative finite-difference step.
    #[arg(long, default_value_t = 1e-4)]
    pub h: f64,
    #[arg(long, default_value = "central")]
    pub scheme: FdScheme,
    /// Largest acceptable componentwise relative error.
    #[arg(long, default_value_t = 1e-4)]
    pub threshold: f64,
    /// Check against `Σ p_i²` at `p_i = i + 1` instead of the physics loss.
    #[arg(long)]
    pub quadratic: bool,
    /// Re-run step-size control at every perturbed point instead of replaying
    /// the base point's steps.
    #[arg(long)]
    pub adaptive_fd: bool,
}

/// Exit status for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } | Error::Dimension(_) | Error::ConfigMissing { .. } | Error::ConfigParse { .. } => 2,
        Error::Integration { .. } | Error::Numerical(_) => 3,
        Error::Io { .. } => 4,
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.to_path_buf(), source })
}

/// `PULSE_THREADS` as a thread cap, if set.
pub fn thread_cap() -> Result<Option<usize>> {
    match std::env::var("PULSE_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(Error::config("PULSE_THREADS", format!("expected a positive integer, got `{v}`"))),
        },
        Err(_) => Ok(None),
    }
}

fn simulate_summary(cfg: &ProblemConfig, command: &str, params: &[f64]) -> Result<(RunSummary, crate::ode::Trajectory)> {
    let problem = cfg.problem()?;
    let traj = problem.simulate(params, cfg.output.samples)?;
    let loss = problem.breakdown(params)?;
    Ok((RunSummary::new(command, params, loss, &traj)?, traj))
}

fn print_state(s: &RunSummary) {
    for (k, p) in s.final_populations.iter().enumerate() {
        println!("rho{0}{0}(T) = {p:.9}", k + 1);
    }
    let maxima: Vec<String> = (2..s.n_levels)
        .map(|k| format!("rho{k}{k} {:.6}", s.max_populations[k - 1]))
        .collect();
    if !maxima.is_empty() {
        println!("max intermediate population: {}", maxima.join(", "));
    }
    println!(
        "loss = {:.9} (init {:.6}, mid {:.6}, final {:.6}, order {:.6}, barrier {:.6})",
        s.loss.total, s.loss.init, s.loss.mid, s.loss.terminal, s.loss.order, s.loss.barrier
    );
}

pub fn run_simulate(args: &SimulateArgs) -> Result<RunSummary> {
    let cfg = load_config(&args.config)?;
    let params = cfg.pulse_set().pack();
    let (summary, traj) = simulate_summary(&cfg, "simulate", &params)?;
    ensure_dir(&args.out)?;
    write_trajectory(&traj, args.out.join(&cfg.output.trajectory))?;
    write_summary(&summary, args.out.join(&cfg.output.summary))?;
    print_state(&summary);
    Ok(summary)
}

pub fn run_optimize(args: &OptimizeArgs) -> Result<(RunSummary, MultiStartReport)> {
    let mut cfg = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.optim.seed = seed;
    }
    if let Some(starts) = args.starts {
        cfg.optim.starts = starts;
    }
    if let Some(mode) = args.mode {
        cfg.optim.mode = mode;
    }
    cfg.validate()?;
    let problem = cfg.problem()?;
    let opt = cfg.optim_config()?;
    let threads = thread_cap()?;
    let report = multistart(&problem, &opt, cfg.optim.starts, cfg.optim.seed, threads)?;
    for run in &report.runs {
        match &run.outcome {
            Ok(r) => println!(
                "start {:>2} (seed {}): loss {:.9} after {} iterations, {:?}",
                run.index,
                run.seed,
                r.best_loss,
                r.iterates.len() - 1,
                r.termination
            ),
            Err(e) => println!("start {:>2} (seed {}): failed: {e}", run.index, run.seed),
        }
    }
    let best = report.best_report();
    let (mut summary, traj) = simulate_summary(&cfg, "optimize", &best.best_params)?;
    summary.optimization = Some(OptimizationSummary::from(&report));
    ensure_dir(&args.out)?;
    write_trajectory(&traj, args.out.join(&cfg.output.trajectory))?;
    write_summary(&summary, args.out.join(&cfg.output.summary))?;
    write_config(&cfg.with_params(&best.best_params)?, args.out.join(&cfg.output.params))?;
    if args.trace {
        write_trace(&best.iterates, args.out.join(&cfg.output.trace))?;
    }
    println!("best start: {}", report.best);
    print_state(&summary);
    Ok((summary, report))
}

/// Both gradients and their componentwise relative errors.
#[derive(Clone, Debug)]
pub struct GradcheckOutcome {
    pub dual: GradientReport,
    pub fd: GradientReport,
    pub errors: Vec<f64>,
    pub max_error: f64,
    pub passed: bool,
}

/// Evaluation point of the quadratic self-test, `p_i = i + 1`.
pub fn quadratic_point(n: usize) -> Vec<f64> {
    (1..=n).map(|i| i as f64).collect()
}

pub fn run_gradcheck(args: &GradcheckArgs) -> Result<GradcheckOutcome> {
    let cfg = load_config(&args.config)?;
    let params = if args.quadratic {
        quadratic_point(cfg.pulse_set().pack().len())
    } else {
        cfg.pulse_set().pack()
    };
    let opts = FdOptions {
        h: args.h,
        scheme: args.scheme,
        frozen_steps: !args.adaptive_fd,
    };
    if !(args.h.is_finite() && args.h > 0.0) {
        return Err(Error::config("--h", "must be > 0"));
    }
    let (dual, fd) = if args.quadratic {
        quadratic_self_test(&params, opts)?
    } else {
        let problem = cfg.problem()?;
        (grad_dual(&problem, &params)?, grad_fd(&problem, &params, opts)?)
    };
    let errors = relative_errors(&dual.gradient, &fd.gradient, 1e-8);
    let max_error = max_error(&errors);
    let passed = max_error <= args.threshold;
    println!("{:>6} {:>20} {:>20} {:>12}", "param", "dual", "finite_diff", "rel_error");
    for i in 0..params.len() {
        println!(
            "{:>6} {:>20.12e} {:>20.12e} {:>12.3e}",
            param_label(i),
            dual.gradient[i],
            fd.gradient[i],
            errors[i]
        );
    }
    println!(
        "loss = {:.12}, evaluations: dual {}, finite differences {}",
        dual.loss_value, dual.evaluations, fd.evaluations
    );
    println!(
        "max relative error {max_error:.3e} (threshold {:.1e}): {}",
        args.threshold,
        if passed { "PASS" } else { "FAIL" }
    );
    Ok(GradcheckOutcome { dual, fd, errors, max_error, passed })
}

/// Parses `args` and runs the chosen command, returning the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = match &cli.command {
        Command::Simulate(a) => run_simulate(a).map(|_| 0),
        Command::Optimize(a) => run_optimize(a).map(|_| 0),
        Command::Gradcheck(a) => run_gradcheck(a).map(|o| if o.passed { 0 } else { 1 }),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
