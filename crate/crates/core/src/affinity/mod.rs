//! Self-expressive affinity learning.
//!
//! Given features `Z` (`d x n`, one column per sample) the solver minimises
//!
//! ```text
//! λ1·R(C) + λ2·‖Z − ZC‖_F²
//! ```
//!
//! over `n x n` matrices `C`, where `R` is one of the regularisers in
//! [`RegularizerKind`]. The maximum-entropy regulariser `Σ c_ij ln c_ij`
//! needs `C ≥ 0`, enforced by clamping to a small floor `ε` after each step.

mod objective;
mod prox;
mod solver;

use std::fmt;
use std::str::FromStr;

use crate::{Error, Matrix, Result};

pub use objective::{
    me_gradient, me_objective, neg_entropy, objective, regularizer_value, self_expressive_loss,
};
pub use prox::{nuclear_norm, permute_affinity, prox_l1, prox_nuclear, singular_values};
pub use solver::{closed_form_frobenius, solve_affinity, SolveReport, SolverConfig};

/// Default feasibility floor for the max-entropy solver.
pub const DEFAULT_FLOOR: f64 = 1e-12;

/// Features `Z`, `d x n` with one column per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    z: Matrix,
}

impl FeatureMatrix {
    pub fn new(z: Matrix) -> Result<Self> {
        if z.cols() < 2 {
            return Err(Error::Dimension(format!(
                "feature matrix needs at least 2 samples (columns), got {}",
                z.cols()
            )));
        }
        Ok(Self { z })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.z
    }

    pub fn into_matrix(self) -> Matrix {
        self.z
    }

    /// Feature dimension `d`.
    pub fn dim(&self) -> usize {
        self.z.rows()
    }

    /// Sample count `n`.
    pub fn samples(&self) -> usize {
        self.z.cols()
    }
}

/// Self-expressive coefficients `C`, `n x n`.
///
/// Column `j` holds the coefficients that rebuild sample `j` from the other
/// samples. Max-entropy solutions carry their floor and are entrywise
/// `≥ floor`; baseline regularisers may yield signed coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    c: Matrix,
    floor: Option<f64>,
}

impl AffinityMatrix {
    pub fn new(c: Matrix) -> Result<Self> {
        if !c.is_square() {
            return Err(Error::Dimension(format!(
                "affinity must be square, got {}x{}",
                c.rows(),
                c.cols()
            )));
        }
        Ok(Self { c, floor: None })
    }

    /// An affinity whose entries are all `≥ floor`.
    pub fn with_floor(c: Matrix, floor: f64) -> Result<Self> {
        if !(floor > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "floor must be positive, got {floor}"
            )));
        }
        let mut a = Self::new(c)?;
        if let Some(v) = a.c.as_slice().iter().find(|&&v| v < floor) {
            return Err(Error::Domain(format!("entry {v:e} below floor {floor:e}")));
        }
        a.floor = Some(floor);
        Ok(a)
    }

    /// Uniform `1/n` start used by the solvers.
    pub fn uniform(n: usize) -> Self {
        Self {
            c: Matrix::filled(n, n, 1.0 / n as f64),
            floor: None,
        }
    }

    pub fn matrix(&self) -> &Matrix {
        &self.c
    }

    pub fn into_matrix(self) -> Matrix {
        self.c
    }

    pub fn n(&self) -> usize {
        self.c.rows()
    }

    pub fn floor(&self) -> Option<f64> {
        self.floor
    }
}

/// Penalty applied to `C`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegularizerKind {
    /// `Σ c ln c` (negative entropy), `C ≥ 0`.
    MaxEntropy,
    /// `Σ |c|`.
    L1,
    /// `Σ c²`.
    FrobeniusSquared,
    /// Sum of singular values.
    Nuclear,
}

impl RegularizerKind {
    pub const ALL: [RegularizerKind; 4] = [
        RegularizerKind::MaxEntropy,
        RegularizerKind::L1,
        RegularizerKind::FrobeniusSquared,
        RegularizerKind::Nuclear,
    ];

    pub fn short_name(self) -> &'static str {
        match self {
            RegularizerKind::MaxEntropy => "me",
            RegularizerKind::L1 => "l1",
            RegularizerKind::FrobeniusSquared => "fro",
            RegularizerKind::Nuclear => "nuc",
        }
    }

    /// Baselines keep `diag(C) = 0` to exclude the trivial `C = I`; the
    /// entropy penalty does not need it.
    pub fn default_zero_diagonal(self) -> bool {
        !matches!(self, RegularizerKind::MaxEntropy)
    }
}

impl fmt::Display for RegularizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for RegularizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "me" | "max-entropy" | "entropy" => Ok(RegularizerKind::MaxEntropy),
            "l1" => Ok(RegularizerKind::L1),
            "fro" | "frobenius" | "frobenius-squared" | "l2" => {
                Ok(RegularizerKind::FrobeniusSquared)
            }
            "nuc" | "nuclear" => Ok(RegularizerKind::Nuclear),
            other => Err(Error::InvalidArgument(format!(
                "unknown regularizer '{other}' (expected me, l1, fro or nuc)"
            ))),
        }
    }
}

/// Regulariser choice with its trade-offs: `lambda1` weights the penalty on
/// `C`, `lambda2` the self-expressive residual.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularizerSpec {
    pub kind: RegularizerKind,
    pub lambda1: f64,
    pub lambda2: f64,
}

impl RegularizerSpec {
    pub fn new(kind: RegularizerKind, lambda1: f64, lambda2: f64) -> Result<Self> {
        let spec = Self {
            kind,
            lambda1,
            lambda2,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda1", self.lambda1), ("lambda2", self.lambda2)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be a positive real, got {v}"
                )));
            }
        }
        Ok(())
    }
}
