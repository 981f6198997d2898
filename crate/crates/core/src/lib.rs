//! Anytime sampling-based optimal motion planning with guided local densification.
//!
//! The planner grows an edge-implicit graph by sampling, runs A* over it after
//! every batch and emits strictly improving solutions. Once a solution exists,
//! [`guild`] focuses sampling on the two hyperspheroids a search-tree beacon
//! induces instead of the whole informed set.

pub mod bench;
pub mod environments;
pub mod error;
pub mod guild;
pub mod kdtree;
pub mod planner;
pub mod sampling;
pub mod statespace;

pub use error::{Error, Result};
