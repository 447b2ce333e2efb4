//! Subspace clustering with a maximum-entropy self-expressive affinity.
//!
//! The crate is organised bottom-up:
//!
//! * [`numerics`]: dense matrices, the Jacobi eigensolver, seeded RNG,
//!   He-normal initialisation and the ADAM update.
//! * [`affinity`]: the self-expressive objective, its regularisers and the
//!   projected/proximal ADAM solver for the affinity matrix `C`.
//! * [`network`]: a small convolutional autoencoder with hand-written
//!   backpropagation, trained either decoupled from `C` or coupled through it.
//! * [`spectral`]: normalized spectral clustering of a learned affinity.
//! * [`metrics`]: ACC, NMI, homogeneity/completeness and block diagnostics.
//! * [`data`]: synthetic union-of-subspaces generators and file formats.

pub mod affinity;
pub mod data;
mod error;
pub mod metrics;
pub mod network;
pub mod numerics;
pub mod spectral;

pub use error::{Error, Result};
pub use numerics::{Matrix, RngSeed};
