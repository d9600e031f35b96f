//! Library surface of the `pagt` command-line tool, exposed so integration
//! tests can drive the commands in-process.

pub mod commands;
pub mod config;
