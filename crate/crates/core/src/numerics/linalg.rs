use super::Matrix;
use crate::{Error, Result};

/// Solves `A·X = B` for symmetric positive-definite `A` via Cholesky.
pub fn cholesky_solve(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    let n = a.rows();
    if !a.is_square() || b.rows() != n {
        return Err(Error::Dimension(format!(
            "cholesky_solve: A {:?}, B {:?}",
            a.shape(),
            b.shape()
        )));
    }
    // Lower factor, row-major.
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) {
            return Err(Error::Domain(format!(
                "matrix is not positive definite (pivot {j} = {d:e})"
            )));
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    let m = b.cols();
    let mut x = b.clone();
    for c in 0..m {
        for i in 0..n {
            let mut s = x[(i, c)];
            for k in 0..i {
                s -= l[(i, k)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = x[(i, c)];
            for k in (i + 1)..n {
                s -= l[(k, i)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
    }
    Ok(x)
}

/// Thin `Q` factor (`rows x cols`, orthonormal columns) of a Householder QR.
///
/// Requires `rows >= cols`. Column signs are fixed so that `R` has a
/// non-negative diagonal, which makes the result a function of `a` alone.
pub fn householder_q(a: &Matrix) -> Result<Matrix> {
    let (m, n) = a.shape();
    if m < n {
        return Err(Error::Dimension(format!(
            "thin QR needs rows >= cols, got {m}x{n}"
        )));
    }
    let mut r = a.clone();
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut diag_sign = vec![1.0; n];
    for k in 0..n {
        let norm: f64 = (k..m).map(|i| r[(i, k)] * r[(i, k)]).sum::<f64>().sqrt();
        let mut v = vec![0.0; m];
        if norm == 0.0 {
            reflectors.push(v);
            continue;
        }
        let alpha = if r[(k, k)] > 0.0 { -norm } else { norm };
        for i in k..m {
            v[i] = r[(i, k)];
        }
        v[k] -= alpha;
        let vnorm_sq: f64 = v[k..].iter().map(|x| x * x).sum();
        for j in k..n {
            let dot: f64 = (k..m).map(|i| v[i] * r[(i, j)]).sum();
            let f = 2.0 * dot / vnorm_sq;
            for i in k..m {
                r[(i, j)] -= f * v[i];
            }
        }
        diag_sign[k] = if r[(k, k)] < 0.0 { -1.0 } else { 1.0 };
        for x in &mut v {
            *x /= vnorm_sq.sqrt();
        }
        reflectors.push(v);
    }
    // Q = H_0 H_1 … H_{n-1} applied to the first n unit vectors.
    let mut q = Matrix::from_fn(m, n, |i, j| if i == j { 1.0 } else { 0.0 });
    for (k, v) in reflectors.iter().enumerate().rev() {
        for j in 0..n {
            let dot: f64 = (k..m).map(|i| v[i] * q[(i, j)]).sum();
            for i in k..m {
                q[(i, j)] -= 2.0 * dot * v[i];
            }
        }
    }
    for j in 0..n {
        if diag_sign[j] < 0.0 {
            for i in 0..m {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    Ok(q)
}
