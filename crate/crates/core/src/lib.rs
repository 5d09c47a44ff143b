//! Eigenstate preparation by traversing discretized eigenpaths with
//! randomized evolution times.

pub mod apps;
pub mod channels;
pub mod error;
pub mod paths;
pub mod qcore;
mod quad;
pub mod timedist;
pub mod traversal;

pub use error::{Error, Result};

/// Library version, embedded in emitted reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
