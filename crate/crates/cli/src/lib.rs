//! Library side of the `unirag` binary: configuration, exit codes and the
//! `generate` / `bench` / `verify` commands.

pub mod commands;
pub mod config;
pub mod error;
