//! Bound-preserving, mass-conservative finite elements for fourth-order
//! parabolic problems (thin-film, Cahn–Hilliard) and their second-order
//! regularizations, posed as nodal box-constrained variational inequalities
//! and solved with a primal–dual active-set method.

pub mod assembly;
pub mod error;
pub mod experiments;
pub mod linsolve;
pub mod mesh;
pub mod quadrature;
pub mod schemes;
pub mod space;
pub mod sparse;
pub mod structure;
pub mod vi;

pub use assembly::{assemble_load, assemble_mass, assemble_stiffness, Coefficient};
pub use error::{Error, Result};
pub use experiments::{registry, Case, RunResult, RunSettings, TauRule};
pub use linsolve::{h_minus1_apply, solve, BlockSystem, Factorization, HMinus1Solver, KernelSolver};
pub use mesh::Mesh;
pub use quadrature::QuadratureRule;
pub use space::{build_space, evaluate, interpolate, FeSpace, NodalVector};
pub use schemes::{
    bdf_table, init_postprocess, init_vi, l2_projection, sav_init, solve_stationary, BdfTable, Discretization,
    Integrator, Model, SavConfig, Scheme, TimeState,
};
pub use sparse::SparseMatrix;
pub use structure::{bp_mc_project, diagnostics, eoc, error_norms, error_norms_reference, Diagnostics, ErrorNorms, Projection};
pub use vi::{
    energy_value, kkt_residual, pdas_solve, pdas_solve_from_sets, BoundSchedule, BoxBounds, Objective, PdasConfig, PdasReport,
    PdasSolution, SavCoupling, ViProblem,
};

/// Version of the library, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
