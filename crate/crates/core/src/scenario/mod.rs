//! Scenario files, unit handling and the run/sweep/check drivers.

pub mod config;
pub mod runner;
pub mod units;

pub use config::{Model, ScenarioConfig, ScenarioKind};
pub use runner::{check, run_all, run_to_dir, sweep, CurveResult, SweepAxis};
