//! Frequency lattice, spectral fields and their norms.

mod field;
mod lattice;
pub mod norms;
pub mod snapshot;
mod trajectory;

pub use field::{FlowState, SpectralField};
pub use lattice::{FrequencyLattice, LatticeSpec};
pub use norms::{data_norm, kato_norm, pm_norm, x_norm, y_norm, NormReport, XParts};
pub use trajectory::Trajectory;
