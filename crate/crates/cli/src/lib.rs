//! Scenario runner for `hjm-core`: configuration, command dispatch and reports.

// NaN must fail the checks written as `!(x > 0.0)`.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod commands;
pub mod config;
pub mod report;

pub use config::{parse_scenario, Command, ScenarioConfig};
