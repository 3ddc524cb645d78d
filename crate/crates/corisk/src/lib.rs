//! Command-line pipeline for near-miss based crash risk estimation.

pub mod config;
pub mod error;
pub mod io;
pub mod manifest;
pub mod parallel;
pub mod stages;
pub mod synth;
