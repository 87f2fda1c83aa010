//! Parallel simulation of a single policy trajectory by Picard iteration.

pub mod engine;
pub mod error;
pub mod experiment;
pub mod fo;
pub mod instgen;
pub mod linear;
pub mod policies;
pub mod theory;
pub mod timewarp;

pub use error::{PolicyError, Result, SimError};
pub mod cli;
