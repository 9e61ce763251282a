//! Library surface of the command-line front end; the `coordlqr` binary is
//! a thin wrapper around these modules, and the acceptance suite drives
//! them directly.

pub mod commands;
pub mod config;
pub mod output;
pub mod scenarios;
