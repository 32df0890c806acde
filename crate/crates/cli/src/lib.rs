//! Command implementations and file formats behind the `lineclust` binary.
//!
//! Everything the binary does is callable as a library function so tests
//! can drive commands without spawning processes.

pub mod bench;
pub mod commands;
pub mod io;

pub use bench::{
    aggregate, delta_series, run_bench, run_trials, write_outputs, BenchContext, BenchReport,
    Method, MethodReport, MethodResult, TrialRecord,
};
pub use commands::{cmd_fit, cmd_select, cmd_simulate, em_config, resolve_spec};
