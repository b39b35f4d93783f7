//! The `bivo` command line: scene generation, two-stage training,
//! open/closed-loop evaluation, rendering and latency benchmarks, all
//! driven by one flat key=value configuration.

pub mod ckpt;
pub mod config;
pub mod error;
pub mod ops;

pub use config::RunConfig;
pub use error::CliError;
