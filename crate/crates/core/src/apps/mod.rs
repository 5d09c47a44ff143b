//! Concrete instantiations: unstructured search and quantum simulated annealing.

pub mod annealing;
pub mod grover;

pub use annealing::*;
pub use grover::*;
