//! The test problems and the drivers that run them.

mod cases;
mod drivers;
pub mod exact;

pub use cases::{registry, Case, PdeKind, SolutionInfo, DEFAULT_SEED};
pub use drivers::{
    integrate_case, reference_solution, run_convergence, run_simulation, run_stationary, LevelResult,
    PositivityReport, RunResult, RunSettings, StepRow, TauRule, Trajectory,
};
