//! Procedurally generated multi-agent task-tree environment with a
//! decentralized recurrent-policy training harness.

pub mod episode;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod oracle;
pub mod reward;
pub mod rng;
pub mod task;
pub mod trainer;
pub mod world;

pub use error::{Error, Result};
