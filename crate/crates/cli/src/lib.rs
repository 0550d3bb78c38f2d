//! Command-line orchestration of the mvtrace pipeline.

pub mod commands;
pub mod config;
