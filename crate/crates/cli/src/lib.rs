//! Library side of the `failsift` binary.

pub mod commands;
pub mod config;
pub mod pipeline;
pub mod report;
