//! Experiment configuration and the commands behind the `collisim` binary.

pub mod commands;
pub mod config;
