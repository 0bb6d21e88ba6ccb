//! Weak KAM solutions, Aubry sets and barrier-function critical points for
//! mechanical Lagrangians on the one- and two-dimensional torus.

pub mod barrier;
pub mod config;
pub mod critical;
pub mod error;
pub mod grid;
pub mod model;
pub mod orbits;
pub mod pipeline;
pub mod semiconcave;
pub mod solver;

pub use error::{Error, Result};
