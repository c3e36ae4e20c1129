//! Pseudo-spectral solvers for anisotropic MHD on a thin periodic domain, its
//! scaled form on a fixed domain, and the primitive equations with magnetic
//! field obtained in the small aspect-ratio limit.

pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod fields;
pub mod grid;
pub mod harness;
pub mod pem;
pub mod smhd;
pub mod snapshot;
pub mod solver;

pub use error::{Error, Result};
