use super::Matrix;
use crate::{Error, Result};

/// Relative asymmetry tolerated by [`sym_eigen`].
pub const SYMMETRY_TOLERANCE: f64 = 1e-10;

const MAX_SWEEPS: usize = 100;

/// Eigendecomposition `A = V·diag(λ)·Vᵀ` of a real symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymEigen {
    /// Ascending.
    pub values: Vec<f64>,
    /// Column `i` is the unit eigenvector for `values[i]`.
    pub vectors: Matrix,
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Sweeps over all `(p, q)` pairs until the off-diagonal Frobenius mass drops
/// below `1e-12·‖A‖_F`. Each rotation uses the Rutishauser form, which keeps
/// the accumulated eigenvector matrix orthonormal to machine precision.
pub fn sym_eigen(a: &Matrix) -> Result<SymEigen> {
    check_symmetric(a)?;
    let n = a.rows();
    let w = Matrix::from_fn(n, n, |i, j| 0.5 * (a[(i, j)] + a[(j, i)]));
    Ok(jacobi(w, Matrix::identity(n)))
}

/// [`sym_eigen`] started from an orthonormal `guess` of the eigenvectors,
/// typically the result for a nearby matrix. Only the rotations still
/// needed after `guessᵀ·A·guess` are applied, so a good guess converges in
/// one or two sweeps.
pub fn sym_eigen_warm(a: &Matrix, guess: &Matrix) -> Result<SymEigen> {
    check_symmetric(a)?;
    let n = a.rows();
    if guess.shape() != (n, n) {
        return Err(Error::Dimension(format!(
            "guess is {}x{} for a {n}x{n} matrix",
            guess.rows(),
            guess.cols()
        )));
    }
    let projected = guess.t_matmul(&a.matmul(guess)?)?;
    let w = Matrix::from_fn(n, n, |i, j| 0.5 * (projected[(i, j)] + projected[(j, i)]));
    Ok(jacobi(w, guess.clone()))
}

fn check_symmetric(a: &Matrix) -> Result<()> {
    if !a.is_square() {
        return Err(Error::Dimension(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    let n = a.rows();
    let scale = a.max_abs();
    let mut max_dev = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            max_dev = max_dev.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    if max_dev > SYMMETRY_TOLERANCE * scale {
        return Err(Error::Asymmetric {
            max_deviation: max_dev,
        });
    }
    Ok(())
}

/// Cyclic sweeps on `w`, accumulating rotations into `v`.
fn jacobi(w: Matrix, v: Matrix) -> SymEigen {
    let n = w.rows();
    let target = 1e-12 * w.frobenius_norm();
    // Pairs this small cannot keep the off-diagonal norm above `target`.
    let negligible = target / n as f64;
    let mut a = w.into_vec();
    // Rows of `vt` are the columns of `v`, so rotations touch contiguous memory.
    let mut vt = v.transpose().into_vec();
    for _ in 0..MAX_SWEEPS {
        if off_diagonal_norm(&a, n) <= target {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq.abs() <= negligible {
                    continue;
                }
                rotate(&mut a, &mut vt, n, p, q, apq);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i * n + i].total_cmp(&a[j * n + j]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| a[i * n + i]).collect();
    let vectors = Matrix::from_fn(n, n, |k, i| vt[order[i] * n + k]);
    SymEigen { values, vectors }
}

fn off_diagonal_norm(a: &[f64], n: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        for &x in &a[i * n + i + 1..(i + 1) * n] {
            s += 2.0 * x * x;
        }
    }
    s.sqrt()
}

/// Rutishauser rotation zeroing `a[p][q]` of the row-major symmetric `a`.
fn rotate(a: &mut [f64], vt: &mut [f64], n: usize, p: usize, q: usize, apq: f64) {
    let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
    let t = if theta.abs() > 1e150 {
        0.5 / theta
    } else {
        theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
    };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;

    a[p * n + p] -= t * apq;
    a[q * n + q] += t * apq;
    a[p * n + q] = 0.0;
    a[q * n + p] = 0.0;
    for k in 0..n {
        if k == p || k == q {
            continue;
        }
        let akp = a[p * n + k];
        let akq = a[q * n + k];
        let new_kp = c * akp - s * akq;
        let new_kq = s * akp + c * akq;
        a[p * n + k] = new_kp;
        a[k * n + p] = new_kp;
        a[q * n + k] = new_kq;
        a[k * n + q] = new_kq;
    }
    let (head, tail) = vt.split_at_mut(q * n);
    let row_p = &mut head[p * n..(p + 1) * n];
    let row_q = &mut tail[..n];
    for (x, y) in row_p.iter_mut().zip(row_q.iter_mut()) {
        let (vp, vq) = (*x, *y);
        *x = c * vp - s * vq;
        *y = s * vp + c * vq;
    }
}
