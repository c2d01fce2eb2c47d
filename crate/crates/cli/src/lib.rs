//! Command-line front end and evaluation harness.

pub mod cli;
pub mod eval;

pub use cli::run;
