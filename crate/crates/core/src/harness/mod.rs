//! Experiment drivers: coupled mean-square convergence, rate fitting, moment
//! monitoring, plotting and the command line.

pub mod cli;
mod convergence;
mod fit;
mod moments;
pub mod svg;

pub use cli::{run_cli, ExperimentConfig, EXIT_BLOW_UP, EXIT_CONFIG, EXIT_NOT_CONVERGED, EXIT_OK};
pub use convergence::{mse_convergence, ConvergencePoint, ConvergenceReport, ConvergenceSettings};
pub use fit::{fit_rate, RateFit};
pub use moments::{moment_monitor, MomentTrace};
