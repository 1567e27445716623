//! Duhamel map, Picard iteration on whole trajectories, measured constants
//! of the fixed-point argument and an independent reference integrator.

mod constants;
mod grid;
mod operator;
mod reference;
mod solver;

pub use constants::{
    bilinear_duhamel, bilinear_ratio, measure_bilinear_constants, random_smooth_data, BilinearConstants,
    ConstantsLedger, Term,
};
pub use grid::time_grid;
pub use operator::{pack, unpack, DuhamelOperator, Packed};
pub use reference::{reference_integrate, ReferenceOptions, ReferenceResult};
pub use solver::{zero_data, DuhamelSolver, IterationRecord, Mode, SolveOutcome, SolveStatus};
