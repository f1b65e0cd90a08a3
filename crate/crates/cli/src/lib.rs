//! Configuration handling and job dispatch for the `dynred` binary.

pub mod config;
pub mod jobs;
