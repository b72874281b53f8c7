//! Command-line DAP placement planner: configuration, node files, report
//! artifacts and the subcommands built on `dap-core`.

pub mod cli;
pub mod commands;
pub mod config;
pub mod io;
pub mod report;

pub use commands::{run, Exit};
