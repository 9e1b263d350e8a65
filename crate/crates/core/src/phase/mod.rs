//! Phase-transition experiments: configuration, seeded runners and
//! self-describing CSV output.

pub mod config;
pub mod grid;
pub mod run;

pub use config::{Axis, BMode, Experiment, ExperimentConfig};
pub use grid::{csv_header, fit_transition, sha256_hex, wilson, VERSION, CpTally, Fit, GridRow, PhaseGrid};
pub use run::{
    run_cp_experiment, run_escape_experiment, run_experiment, run_grid, run_kinematic_experiment,
    run_local_dm_experiment, run_logistic_experiment, run_preimage_experiment, run_support_concentration,
    ConcentrationSummary, DmReport, DmRow, ExperimentOutput,
};

#[cfg(test)]
mod tests;
