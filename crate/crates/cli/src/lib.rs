//! Command-line orchestration of the binning pipeline.

pub mod cli;
pub mod commands;
pub mod config;
pub mod manifest;
