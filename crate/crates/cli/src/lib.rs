//! Batch front end: experiment configs, solves, sweeps and CSV output.

pub mod config;
pub mod run;
pub mod simulate;
