//! Grid solution of the mollified `n`-player Bellman equation, its lift to
//! functions of measures and the associated checks.

pub mod chaos;
pub mod grid;
pub mod lift;
pub mod solver;

pub use chaos::{chaos_experiment, ChaosEntry, ChaosParams, ChaosTable};
pub use grid::{GridHeader, Interpolant, ValueGrid};
pub use lift::{derivative_bounds_check, l_derivatives, lift, lift_with, master_residual, DerivativeBounds, LDerivativeField, Lift, LiftedValue, MasterResidual};
pub use solver::{box_radius, solve_hjb, GridParams, Scheme, GRID_DIMENSION_CAP};
