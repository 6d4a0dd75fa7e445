//! Configuration, builtin coefficients, output formats and subcommands for the
//! `fsdde` command-line tool.

pub mod builtins;
pub mod commands;
pub mod config;
pub mod output;
