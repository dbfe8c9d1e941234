//! Scenario files, the Monte-Carlo runner and the command-line front end.

pub mod cli;
pub mod config;
pub mod runner;

pub use config::{Method, ScenarioConfig};
pub use runner::{
    run_cell, run_phase1, run_phase2, run_phase3, run_scenario, CellResult, Phase3Result, RunResult,
};
