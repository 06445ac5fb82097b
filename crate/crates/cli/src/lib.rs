//! Command-line harness: data generation, clustering, evaluation, experiment
//! grids and the theory checks.

pub mod commands;
pub mod experiment;
pub mod theory;

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: u8 = 0;
    pub const USAGE: u8 = 1;
    pub const CHECK_FAILED: u8 = 2;
}
