//! Std companion to `fxq-core`: model files, seeded fixtures, CSV reports,
//! batch-parallel calibration and the `fxq` command-line tool.

pub mod cli;
pub mod fixtures;
pub mod manifest;
pub mod parallel;
pub mod report;
pub mod stepscan;
