//! Library surface of the experiment runner, kept separate from the binary
//! so integration tests can drive runs in-process.

pub mod config;
pub mod experiments;
pub mod output;
