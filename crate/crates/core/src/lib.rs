//! Quantum graph neural networks with QGCN aggregators.
//!
//! The crate provides a small statevector simulator ([`qsim`]), the QGCN
//! circuit builder ([`circuit`]), parameter-shift gradients ([`grad`]),
//! molecule-graph fixtures ([`graphdata`]), the GraphSAGE-style forward pass
//! ([`aggregate`]), an MLP baseline ([`classical`]), training ([`train`]) and
//! the experiment drivers ([`experiments`]).

pub mod aggregate;
pub mod circuit;
pub mod classical;
pub mod error;
pub mod experiments;
pub mod grad;
pub mod graphdata;
pub mod qsim;
pub mod train;

pub use error::{Error, Result};
