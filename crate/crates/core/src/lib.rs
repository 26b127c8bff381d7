//! Partial-label learning with variational label enhancement.

pub mod data;
pub mod error;
pub mod graph;
pub mod models;
pub mod dirichlet;
pub mod numeric;
pub mod objectives;
pub mod trainer;
pub mod verify;

pub use error::{PllError, Result};
