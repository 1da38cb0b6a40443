//! Branch (de)coherence in a two-block random-matrix model.
//!
//! A Haar-random pure state evolves unitarily under a Hamiltonian made of
//! two diagonal energy ladders coupled by a Gaussian random block. At `L`
//! randomly spaced times the binary projectors `Π_0`, `Π_1` split the state
//! into histories. Grouping histories by their number of ones yields `L + 1`
//! relative states whose overlaps, weights and binomial reference values
//! this crate computes:
//!
//! - [`rngstreams`]: seeded, label-separated random substreams
//! - [`model`]: Hamiltonian, eigendecomposition, initial state, schedule
//! - [`branching`]: grouped propagation, brute-force histories, trajectories
//! - [`stats`]: coherence profile, branch weights, binomial reference
//! - [`runner`]: configs, experiment kinds and their output files
//!
//! The per-branch loops run on rayon with the default `parallel` feature and
//! sequentially without it; see [`exec::Execution`].

// `!(x > y)` is deliberate throughout: NaN has to fail those checks
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod branching;
pub mod error;
pub mod exec;
pub mod linalg;
pub mod model;
pub mod rngstreams;
pub mod runner;
pub mod stats;

pub use error::{Error, Result};
pub use exec::Execution;
pub use linalg::C64;
