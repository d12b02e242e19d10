//! Dirichlet problems on metric measure spaces solved through graph energies
//! on maximal separated nets, with two projections back to the continuum.

pub mod config;
pub mod energy;
pub mod error;
pub mod graph;
pub mod harness;
pub mod index;
pub mod io;
pub mod net;
pub mod project;
pub mod rng;
pub mod solver;
pub mod space;
pub mod sparse;

pub use error::{Error, Result};
