//! Command-line gateway and HTTP service for the costsight toolkit.

pub mod cli;
pub mod costs;
pub mod server;
