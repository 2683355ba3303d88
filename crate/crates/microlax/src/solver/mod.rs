//! Spatial discretization and time integration of the coupled system on
//! uniform 1D/2D grids.

pub mod elastic;
pub mod grid;
pub mod stepper;

pub use elastic::{
    cell_fields, regime_name, solve_elastic, CellEval, ElasticBc, ElasticOptions, ElasticResult,
    EnergyModel,
};
pub use grid::{flux_field, green_apply, h_inv_norm_sq, laplacian_neumann, Grid};
pub use stepper::{
    advance, clip_to_range, initial_state, total_free_energy, SimParams, SimState, StepDiag,
    StepperKind,
};
