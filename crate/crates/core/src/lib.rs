//! Lindblad simulation of laser-driven multilevel chains and gradient-based
//! design of Gaussian pulse sequences for population transfer.

pub mod autodiff;
pub mod cli;
pub mod error;
pub mod fixtures;
pub mod io;
pub mod loss;
pub mod model;
pub mod ode;
pub mod optim;
pub mod problem;
pub mod pulses;

pub use error::{Error, Result};
pub use problem::ControlProblem;
