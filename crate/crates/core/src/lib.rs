pub mod augment;
pub mod backend;
pub mod config;
pub mod dedup;
pub mod eval;
pub mod ingest;
pub mod mutate;
pub mod util;
pub mod validate;
pub mod verilog;
#[cfg(feature = "cli")]
pub mod cli;
