//! Command-line front end: configuration, orchestration and output files.

pub mod commands;
pub mod config;
pub mod verify;
