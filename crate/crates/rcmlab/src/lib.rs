//! Random conductance models on finite lattices.
//!
//! The crate covers static and time-dependent environments, continuous-time
//! random walks in them, exact heat kernels by uniformization, local limit
//! theorem diagnostics, the regularity toolbox (norms, Dirichlet forms,
//! functional inequalities) and the Ginzburg-Landau gradient interface model.

pub mod environment;
pub mod error;
pub mod glmodel;
pub mod heatkernel;
pub mod io;
pub mod lattice;
pub mod llt;
pub mod regularity;
pub mod rng;
pub mod special;
pub mod walker;

pub use error::{Error, Result};
