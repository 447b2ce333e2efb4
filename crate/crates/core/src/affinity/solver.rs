use super::objective::{add_entropy_gradient, check_affinity_shape, data_gradient, residual};
use super::prox::{nuclear_norm_warm, prox_nuclear_warm};
use super::{
    prox_l1, regularizer_value, AffinityMatrix, FeatureMatrix, RegularizerKind, RegularizerSpec,
    DEFAULT_FLOOR,
};
use crate::numerics::{cholesky_solve, AdamState};
use crate::{Error, Matrix, Result, RngSeed};

/// Iterations compared by the relative-change stopping rule.
pub const STOPPING_WINDOW: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub learning_rate: f64,
    /// When set, the step size decays geometrically from `learning_rate`
    /// at the first iteration to this value at `max_iterations`.
    pub final_learning_rate: Option<f64>,
    pub max_iterations: usize,
    /// Stop once the objective changes by less than this fraction across
    /// [`STOPPING_WINDOW`] iterations.
    pub relative_tolerance: f64,
    /// Floor `ε` for max-entropy coefficients.
    pub epsilon: f64,
    /// Recorded for provenance; the solve itself starts from the
    /// deterministic uniform matrix and draws nothing.
    pub seed: RngSeed,
    pub zero_diagonal: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self::for_regularizer(RegularizerKind::MaxEntropy)
    }
}

impl SolverConfig {
    pub fn for_regularizer(kind: RegularizerKind) -> Self {
        Self {
            learning_rate: 1e-4,
            final_learning_rate: None,
            max_iterations: 20_000,
            relative_tolerance: 1e-10,
            epsilon: DEFAULT_FLOOR,
            seed: RngSeed(0),
            zero_diagonal: kind.default_zero_diagonal(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!(
                    "{name} must be a positive real, got {v}"
                )))
            }
        };
        positive("learning_rate", self.learning_rate)?;
        if let Some(lr) = self.final_learning_rate {
            positive("final_learning_rate", lr)?;
        }
        positive("epsilon", self.epsilon)?;
        if !(self.relative_tolerance >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "relative_tolerance must be non-negative, got {}",
                self.relative_tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidArgument(
                "max_iterations must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Step size for 1-based iteration `t`.
    pub fn learning_rate_at(&self, t: usize) -> f64 {
        match self.final_learning_rate {
            Some(last) if self.max_iterations > 1 => {
                let frac = (t.saturating_sub(1)) as f64 / (self.max_iterations - 1) as f64;
                self.learning_rate * (last / self.learning_rate).powf(frac)
            }
            _ => self.learning_rate,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub affinity: AffinityMatrix,
    /// Objective after each iteration.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimises `λ1·R(C) + λ2·‖Z − ZC‖_F²` by ADAM on the smooth part followed
/// by a projection or proximal step:
///
/// * max-entropy: clamp every entry to `max(ε, c)`;
/// * l1 / nuclear: soft-threshold entries / singular values by `lr·λ1`;
/// * squared Frobenius: plain ADAM (the penalty is smooth).
///
/// With `zero_diagonal` the diagonal is reset to zero after every step.
pub fn solve_affinity(
    z: &FeatureMatrix,
    reg: &RegularizerSpec,
    cfg: &SolverConfig,
) -> Result<SolveReport> {
    reg.validate()?;
    cfg.validate()?;
    let zm = z.matrix();
    let n = z.samples();
    let mut c = AffinityMatrix::uniform(n).into_matrix();
    // Right singular vectors of the previous iterate, reused by the
    // nuclear-norm eigensolves.
    let mut basis = None;
    project(&mut c, reg.kind, cfg, None, &mut basis)?;

    let mut adam = AdamState::new(n * n);
    let mut trace = Vec::with_capacity(cfg.max_iterations.min(1 << 16));
    let mut r = residual(zm, &c);
    let mut converged = false;

    for t in 1..=cfg.max_iterations {
        let lr = cfg.learning_rate_at(t);
        let mut g = data_gradient(zm, &r, reg.lambda2);
        match reg.kind {
            RegularizerKind::MaxEntropy => {
                add_entropy_gradient(&mut g, &c, reg.lambda1, cfg.zero_diagonal)
            }
            RegularizerKind::FrobeniusSquared => {
                for (gv, &cv) in g.as_mut_slice().iter_mut().zip(c.as_slice()) {
                    *gv += 2.0 * reg.lambda1 * cv;
                }
            }
            RegularizerKind::L1 | RegularizerKind::Nuclear => {}
        }
        adam.update(c.as_mut_slice(), g.as_slice(), lr)?;
        project(&mut c, reg.kind, cfg, Some(lr * reg.lambda1), &mut basis)?;

        r = residual(zm, &c);
        let penalty = match reg.kind {
            RegularizerKind::Nuclear => nuclear_norm_warm(&c, &mut basis)?,
            kind => regularizer_value(kind, &c)?,
        };
        let value = reg.lambda1 * penalty + reg.lambda2 * r.frobenius_norm_sq();
        if !value.is_finite() {
            return Err(Error::Divergence {
                what: "objective",
                iteration: t,
            });
        }
        trace.push(value);
        if t > STOPPING_WINDOW {
            let before = trace[t - 1 - STOPPING_WINDOW];
            if (value - before).abs()
                <= cfg.relative_tolerance * before.abs().max(f64::MIN_POSITIVE)
            {
                converged = true;
                break;
            }
        }
    }

    let affinity = match reg.kind {
        RegularizerKind::MaxEntropy if !cfg.zero_diagonal => {
            AffinityMatrix::with_floor(c, cfg.epsilon)?
        }
        _ => AffinityMatrix::new(c)?,
    };
    Ok(SolveReport {
        affinity,
        iterations: trace.len(),
        objective_trace: trace,
        converged,
    })
}

/// Feasibility step after each update. `threshold` is `lr·λ1` for the
/// proximal regularisers and `None` before the first step.
pub(crate) fn project(
    c: &mut Matrix,
    kind: RegularizerKind,
    cfg: &SolverConfig,
    threshold: Option<f64>,
    basis: &mut Option<Matrix>,
) -> Result<()> {
    match (kind, threshold) {
        (RegularizerKind::MaxEntropy, _) => c.map_inplace(|v| v.max(cfg.epsilon)),
        (RegularizerKind::L1, Some(t)) => *c = prox_l1(c, t)?,
        (RegularizerKind::Nuclear, Some(t)) => *c = prox_nuclear_warm(c, t, basis)?,
        _ => {}
    }
    if cfg.zero_diagonal {
        for i in 0..c.rows() {
            c[(i, i)] = 0.0;
        }
    }
    Ok(())
}

/// Unique minimiser of `λ1‖C‖_F² + λ2‖Z − ZC‖_F²` (no diagonal constraint):
/// the solution of `(λ1·I + λ2·ZᵀZ)·C = λ2·ZᵀZ`.
pub fn closed_form_frobenius(
    z: &FeatureMatrix,
    lambda1: f64,
    lambda2: f64,
) -> Result<AffinityMatrix> {
    if !(lambda1 > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "lambda1 must be positive, got {lambda1}"
        )));
    }
    let zm = z.matrix();
    let gram = zm.t_matmul(zm)?;
    let n = gram.rows();
    let system = Matrix::from_fn(n, n, |i, j| {
        lambda2 * gram[(i, j)] + if i == j { lambda1 } else { 0.0 }
    });
    let rhs = gram.scale(lambda2);
    let c = cholesky_solve(&system, &rhs)?;
    check_affinity_shape(zm, &c)?;
    AffinityMatrix::new(c)
}
