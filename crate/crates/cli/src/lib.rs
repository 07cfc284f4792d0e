//! Library behind the `multilevel` binary: configuration, run records and
//! the five commands, exposed so tests can drive them in-process.

pub mod bounds_cmd;
pub mod config;
pub mod mt_demo;
pub mod train;
pub mod verify;
