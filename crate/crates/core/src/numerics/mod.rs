//! Deterministic numeric kernels shared by the rest of the crate.
//!
//! Everything runs in `f64` on a single thread, so a fixed [`RngSeed`] and
//! fixed inputs give bitwise identical outputs.

mod adam;
mod eigen;
mod linalg;
mod matrix;
mod rng;

pub use adam::{adam_step, AdamState, DEFAULT_BETA1, DEFAULT_BETA2, DEFAULT_EPSILON};
pub use eigen::{sym_eigen, sym_eigen_warm, SymEigen, SYMMETRY_TOLERANCE};
pub use linalg::{cholesky_solve, householder_q};
pub use matrix::Matrix;
pub(crate) use matrix::{gemm, Operand};
pub use rng::{he_normal_init, he_normal_values, RngSeed};
