//! Configuration files, result files and the bundled reference fixtures.

mod config;
mod output;

pub use config::{
    load_config, write_config, BoundsSection, GateKind, IntegratorSection, LossSection, OptimSection,
    OutputSection, ProblemConfig, SystemSection, CONFIG_KEYS,
};
pub use output::{
    trace_header, trajectory_header, write_summary, write_trace, write_trajectory, LossSummary,
    OptimizationSummary, PhysicalUnits, RunSummary, StartSummary, GAMMA_HZ,
};
