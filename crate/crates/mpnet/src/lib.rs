//! Command-line workflows and the HTTP prediction service built on
//! [`meltpoolnet`].

pub mod api;
pub mod commands;
pub mod config;
pub mod server;
