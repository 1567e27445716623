//! Analyticity radius estimation from spectra, the time-dependent weight
//! `θ(t, D, ε)` with its inequalities, and the near-zero bootstrap check.

mod bootstrap;
mod radius;
mod theta;

pub use bootstrap::{check_bootstrap, BootstrapConfig, BootstrapReport, BootstrapRow};
pub use radius::{
    estimate_radius, estimate_radius_field, shell_profile, RadiusEstimate, MIN_SHELLS, NOISE_FLOOR, SUPER_EXP_RATIO,
};
pub use theta::{
    bootstrap_lambda, run_inequality_suites, theta_offset, theta_weight, weight_gap, InequalityReport, SuiteResult,
};
