//! Averaged-potential analysis of confined particle chains with fast vertical motion.

pub mod average;
pub mod billiard;
pub mod cli;
pub mod error;
pub mod integrate;
pub mod jet;
pub mod model;
pub mod nondeg;
pub mod quad;
pub mod reduce;
pub mod vertical;

pub use error::{ChoreoError, Result};
