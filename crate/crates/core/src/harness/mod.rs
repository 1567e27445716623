//! Run configuration, initial-data generators, experiment drivers and
//! report/artifact writing behind the `nskq` command line.

mod config;
mod data;
pub mod experiments;
mod run;

pub use config::{CheckSettings, RadiusSettings, RunConfig, RunMode, VerifyCheck};
pub use data::{generate_initial_data, DataSpec};
pub use run::{
    beta_reference, decay_grid, riesz_reference, execute, fmt_float, measure_decay, run, thresholds, CheckVerdict, RunOutput,
    RunReport, SolveSummary, Timing,
};
