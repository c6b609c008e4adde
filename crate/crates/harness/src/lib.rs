//! Experiment plumbing around the `prilo` crate: dataset loading,
//! TOML configuration, batch runs with CSV/manifest output, and the
//! command implementations behind the `prilo` binary.

pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod experiment;
