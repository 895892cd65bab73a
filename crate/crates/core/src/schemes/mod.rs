//! BDF time stepping with clamped extrapolation, the scalar auxiliary
//! variable variant, the regularized second-order scheme, and
//! bound-preserving initializations.

pub mod bdf;
pub mod init;
pub mod state;
pub mod step;

pub use bdf::{bdf_table, BdfTable, Rational};
pub use init::{
    init_postprocess, init_vi, l2_projection, sav_energy, sav_init, solve_stationary, solve_stationary_second_order,
    standard_fem_second_order,
};
pub use state::{extrapolate_clamped, TimeState};
pub use step::{
    build_step_problem, step, step_fourth_order, step_second_order, step_sav, uniform_steps, Discretization,
    Integrator, Model, SavConfig, Scheme, SourceFn, StateFn, StepRecord,
};
