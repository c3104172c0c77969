//! Multilevel determinantal ensembles on discretized measure spaces.
//!
//! A chain of `m` levels with `N` points each is described by end functions
//! `f_a`, `h_a` and transfer kernels `g_{j+1,j}`. From these the crate builds
//! the (weighted) pairing matrix, biorthogonal dual bases, the block
//! correlation kernels, Fredholm determinants and resolvents, correlation
//! and Janossy densities, and gap/count probabilities. An exact enumeration
//! oracle and a Metropolis sampler provide independent checks on small
//! discrete instances.
//!
//! Levels are 0-based throughout the API.

pub mod biortho;
pub mod chain;
pub mod cli;
pub mod config;
pub mod error;
pub mod fredholm;
pub mod kernels;
pub mod linalg;
pub mod measure;
pub mod oracle;
pub mod random;
pub mod sampler;
mod wide;

pub use error::{Error, Result};
