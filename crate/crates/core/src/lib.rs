//! Knowledge-graph conditioned actor-critic for semantic object navigation
//! in a procedurally generated grid world.

pub mod dataset;
pub mod env;
pub mod evaluator;
pub mod gcn;
pub mod error;
pub mod graph;
pub mod policy;
pub mod rng;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
