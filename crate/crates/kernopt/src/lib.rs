//! Host side of the kernopt kernel optimization loop: file formats, model
//! backends, the harness bridge and the `kernopt` command line.

pub use kernopt_core as core;

pub mod cli;
pub mod config;
pub mod http;
pub mod output;
pub mod profiler_csv;
pub mod registry;
pub mod samples;
pub mod subprocess;
pub mod suite;
pub mod transcript;
