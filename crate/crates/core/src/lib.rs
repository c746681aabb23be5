//! Tree Poisson multi-Bernoulli mixture filtering for multiple spawning
//! targets, with a trajectory metric and a Monte-Carlo harness.

pub mod assignment;
pub mod error;
pub mod experiment;
pub mod filter;
pub mod gauss;
pub mod metric;
pub mod model;
pub mod sampler;
pub mod scenario;
pub mod tree;

pub use error::{Error, Result};
