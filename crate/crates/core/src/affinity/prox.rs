use crate::numerics::{sym_eigen, sym_eigen_warm};
use crate::{Error, Matrix, Result};

fn check_threshold(threshold: f64) -> Result<()> {
    if !(threshold >= 0.0) || !threshold.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "threshold must be a non-negative real, got {threshold}"
        )));
    }
    Ok(())
}

/// Entrywise soft-thresholding, the proximal map of `t·‖·‖_1`.
pub fn prox_l1(m: &Matrix, threshold: f64) -> Result<Matrix> {
    check_threshold(threshold)?;
    Ok(m.map(|v| v.signum() * (v.abs() - threshold).max(0.0)))
}

/// Right singular vectors and singular values of `M`, from the eigensystem
/// of `MᵀM`. Values are descending.
fn right_singular_system(m: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    right_singular_system_from(m, None)
}

fn right_singular_system_from(m: &Matrix, guess: Option<&Matrix>) -> Result<(Vec<f64>, Matrix)> {
    let gram = m.t_matmul(m)?;
    // Round-off can leave the Gram matrix asymmetric in the last bit.
    let gram = Matrix::from_fn(gram.rows(), gram.cols(), |i, j| {
        0.5 * (gram[(i, j)] + gram[(j, i)])
    });
    let eig = match guess {
        Some(v) => sym_eigen_warm(&gram, v)?,
        None => sym_eigen(&gram)?,
    };
    let k = eig.values.len();
    let order: Vec<usize> = (0..k).rev().collect();
    let sigma = order
        .iter()
        .map(|&i| eig.values[i].max(0.0).sqrt())
        .collect();
    Ok((sigma, eig.vectors.select_columns(&order)))
}

/// Singular values of `M` in descending order (one per column of `M`).
pub fn singular_values(m: &Matrix) -> Result<Vec<f64>> {
    Ok(right_singular_system(m)?.0)
}

/// `‖M‖_*`, the sum of singular values.
pub fn nuclear_norm(m: &Matrix) -> Result<f64> {
    Ok(singular_values(m)?.iter().sum())
}

/// [`nuclear_norm`] warm-started like [`prox_nuclear_warm`].
pub(crate) fn nuclear_norm_warm(m: &Matrix, basis: &mut Option<Matrix>) -> Result<f64> {
    let (sigma, v) = right_singular_system_from(m, basis.as_ref())?;
    *basis = Some(v);
    Ok(sigma.iter().sum())
}

/// Singular-value soft-thresholding, the proximal map of `t·‖·‖_*`.
///
/// With `M = UΣVᵀ`, returns `U·max(Σ − t, 0)·Vᵀ`, computed as
/// `M·V·diag(max(σ − t, 0)/σ)·Vᵀ` so only the eigensystem of `MᵀM` is
/// needed.
pub fn prox_nuclear(m: &Matrix, threshold: f64) -> Result<Matrix> {
    prox_nuclear_warm(m, threshold, &mut None)
}

/// [`prox_nuclear`] for a sequence of nearby matrices: `basis` carries the
/// right singular vectors from one call to the next so the eigensolver
/// starts close to the answer.
pub(crate) fn prox_nuclear_warm(
    m: &Matrix,
    threshold: f64,
    basis: &mut Option<Matrix>,
) -> Result<Matrix> {
    check_threshold(threshold)?;
    let (sigma, v) = right_singular_system_from(m, basis.as_ref())?;
    let shrink: Vec<f64> = sigma
        .iter()
        .map(|&s| {
            if s > 0.0 {
                (s - threshold).max(0.0) / s
            } else {
                0.0
            }
        })
        .collect();
    let mut v_scaled = v.clone();
    for i in 0..v.rows() {
        for (j, f) in shrink.iter().enumerate() {
            v_scaled[(i, j)] *= f;
        }
    }
    let projector = v_scaled.matmul_t(&v)?;
    *basis = Some(v);
    m.matmul(&projector)
}

/// `PᵀCP` for the permutation `perm`: entry `(i, j)` of the result is
/// `C(perm[i], perm[j])`.
pub fn permute_affinity(c: &Matrix, perm: &[usize]) -> Result<Matrix> {
    if !c.is_square() {
        return Err(Error::Dimension(format!(
            "affinity must be square, got {}x{}",
            c.rows(),
            c.cols()
        )));
    }
    let n = c.rows();
    if perm.len() != n {
        return Err(Error::InvalidArgument(format!(
            "permutation has {} entries for a {n}x{n} affinity",
            perm.len()
        )));
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || std::mem::replace(&mut seen[p], true) {
            return Err(Error::InvalidArgument(format!(
                "not a permutation of 0..{n}: {perm:?}"
            )));
        }
    }
    Ok(Matrix::from_fn(n, n, |i, j| c[(perm[i], perm[j])]))
}
