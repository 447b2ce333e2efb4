use super::{nuclear_norm, AffinityMatrix, FeatureMatrix, RegularizerKind, RegularizerSpec};
use crate::numerics::{gemm, Operand};
use crate::{Error, Matrix, Result};

/// `Σ c ln c` with `0·ln 0 = 0`, i.e. the negative entropy `−H(C)`.
pub fn neg_entropy(c: &Matrix) -> Result<f64> {
    let mut sum = 0.0;
    for &v in c.as_slice() {
        if v < 0.0 {
            return Err(Error::Domain(format!(
                "entropy needs non-negative entries, found {v:e}"
            )));
        }
        if v > 0.0 {
            sum += v * v.ln();
        }
    }
    Ok(sum)
}

pub(crate) fn check_affinity_shape(z: &Matrix, c: &Matrix) -> Result<()> {
    let n = z.cols();
    if c.shape() != (n, n) {
        return Err(Error::Dimension(format!(
            "affinity is {}x{} but features have {n} samples",
            c.rows(),
            c.cols()
        )));
    }
    Ok(())
}

/// `Z − ZC`.
pub(crate) fn residual(z: &Matrix, c: &Matrix) -> Matrix {
    let mut r = z.clone();
    gemm(-1.0, Operand::plain(z), Operand::plain(c), 1.0, &mut r);
    r
}

/// `‖Z − ZC‖_F²`.
pub fn self_expressive_loss(z: &Matrix, c: &Matrix) -> Result<f64> {
    check_affinity_shape(z, c)?;
    Ok(residual(z, c).frobenius_norm_sq())
}

/// `λ1·Σ c ln c + λ2·‖Z − ZC‖_F²`.
pub fn me_objective(z: &FeatureMatrix, c: &Matrix, lambda1: f64, lambda2: f64) -> Result<f64> {
    check_affinity_shape(z.matrix(), c)?;
    let h = neg_entropy(c)?;
    Ok(lambda1 * h + lambda2 * residual(z.matrix(), c).frobenius_norm_sq())
}

/// Exact gradient of [`me_objective`] with respect to `C`:
/// `λ1·(ln C + 1) − 2λ2·Zᵀ(Z − ZC)`.
///
/// Every entry must sit at or above the affinity's floor (or be strictly
/// positive when it has none); clamp before calling.
pub fn me_gradient(
    z: &FeatureMatrix,
    c: &AffinityMatrix,
    lambda1: f64,
    lambda2: f64,
) -> Result<Matrix> {
    let cm = c.matrix();
    check_affinity_shape(z.matrix(), cm)?;
    let floor = c.floor().unwrap_or(f64::MIN_POSITIVE);
    if let Some(v) = cm.as_slice().iter().find(|&&v| v < floor) {
        return Err(Error::Domain(format!(
            "gradient needs entries >= {floor:e}, found {v:e}"
        )));
    }
    let r = residual(z.matrix(), cm);
    let mut g = data_gradient(z.matrix(), &r, lambda2);
    add_entropy_gradient(&mut g, cm, lambda1, false);
    Ok(g)
}

/// `−2λ2·Zᵀ R` for a residual `R = Z − ZC`.
pub(crate) fn data_gradient(z: &Matrix, r: &Matrix, lambda2: f64) -> Matrix {
    let mut g = Matrix::zeros(z.cols(), r.cols());
    gemm(
        -2.0 * lambda2,
        Operand::transposed(z),
        Operand::plain(r),
        0.0,
        &mut g,
    );
    g
}

/// Adds `λ1·(ln c + 1)`; with `skip_diagonal` the diagonal is left alone
/// (it is pinned to zero when `diag(C) = 0` is enforced).
pub(crate) fn add_entropy_gradient(g: &mut Matrix, c: &Matrix, lambda1: f64, skip_diagonal: bool) {
    let n = c.cols();
    for (idx, (gv, &cv)) in g.as_mut_slice().iter_mut().zip(c.as_slice()).enumerate() {
        if skip_diagonal && idx / n == idx % n {
            continue;
        }
        *gv += lambda1 * (cv.ln() + 1.0);
    }
}

/// Value of the penalty `R(C)` (without `λ1`).
pub fn regularizer_value(kind: RegularizerKind, c: &Matrix) -> Result<f64> {
    match kind {
        RegularizerKind::MaxEntropy => neg_entropy(c),
        RegularizerKind::L1 => Ok(c.as_slice().iter().map(|v| v.abs()).sum()),
        RegularizerKind::FrobeniusSquared => Ok(c.frobenius_norm_sq()),
        RegularizerKind::Nuclear => nuclear_norm(c),
    }
}

/// Full objective `λ1·R(C) + λ2·‖Z − ZC‖_F²` for any regulariser.
pub fn objective(z: &FeatureMatrix, c: &Matrix, reg: &RegularizerSpec) -> Result<f64> {
    check_affinity_shape(z.matrix(), c)?;
    let penalty = regularizer_value(reg.kind, c)?;
    Ok(reg.lambda1 * penalty + reg.lambda2 * residual(z.matrix(), c).frobenius_norm_sq())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngSeed;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};
    use std::f64::consts::E;

    fn gaussian(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
    }

    fn positive(n: usize, rng: &mut impl Rng) -> Matrix {
        Matrix::from_fn(n, n, |_, _| rng.random_range(0.05..1.5))
    }

    /// Scalar two-loop evaluation of the objective, independent of the
    /// matrix kernels.
    fn objective_by_loops(z: &Matrix, c: &Matrix, l1: f64, l2: f64) -> f64 {
        let (d, n) = z.shape();
        let mut ent = 0.0;
        for i in 0..n {
            for j in 0..n {
                let v = c[(i, j)];
                if v > 0.0 {
                    ent += v * v.ln();
                }
            }
        }
        let mut fit = 0.0;
        for r in 0..d {
            for j in 0..n {
                let mut zc = 0.0;
                for p in 0..n {
                    zc += z[(r, p)] * c[(p, j)];
                }
                fit += (z[(r, j)] - zc).powi(2);
            }
        }
        l1 * ent + l2 * fit
    }

    #[test]
    fn neg_entropy_analytic_cases() {
        assert_eq!(neg_entropy(&Matrix::identity(3)).unwrap(), 0.0);
        let third = neg_entropy(&Matrix::filled(3, 3, 1.0 / 3.0)).unwrap();
        assert!((third + 3.0 * 3f64.ln()).abs() < 1e-12);
        assert!((third + 3.29584).abs() < 1e-5);
        let inv_e = neg_entropy(&Matrix::filled(2, 2, 1.0 / E)).unwrap();
        assert!((inv_e + 4.0 / E).abs() < 1e-12);
        assert!((inv_e + 1.47152).abs() < 1e-5);
        let neg = Matrix::from_rows(&[vec![0.5, -0.1]]).unwrap();
        assert!(matches!(neg_entropy(&neg), Err(Error::Domain(_))));
    }

    #[test]
    fn objective_special_cases() {
        let z0 = FeatureMatrix::new(Matrix::zeros(3, 2)).unwrap();
        let v = me_objective(&z0, &Matrix::filled(2, 2, 1.0 / E), 1.0, 1.0).unwrap();
        assert!((v + 4.0 / E).abs() < 1e-12);

        let mut rng = RngSeed(1).rng();
        let z = FeatureMatrix::new(gaussian(4, 5, &mut rng)).unwrap();
        assert_eq!(
            me_objective(&z, &Matrix::identity(5), 1.0, 1.0).unwrap(),
            0.0
        );
        assert!(matches!(
            me_objective(&z, &Matrix::identity(4), 1.0, 1.0),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn objective_matches_loop_oracle() {
        let mut rng = RngSeed(2).rng();
        let z = gaussian(4, 6, &mut rng);
        let c = positive(6, &mut rng);
        let fast = me_objective(&FeatureMatrix::new(z.clone()).unwrap(), &c, 0.7, 3.0).unwrap();
        let slow = objective_by_loops(&z, &c, 0.7, 3.0);
        assert!((fast - slow).abs() <= 1e-10 * slow.abs().max(1.0));
    }

    #[test]
    fn gradient_analytic_cases() {
        let z0 = FeatureMatrix::new(Matrix::zeros(2, 3)).unwrap();
        let c = AffinityMatrix::new(Matrix::filled(3, 3, 1.0 / E)).unwrap();
        assert!(me_gradient(&z0, &c, 1.0, 1.0).unwrap().max_abs() < 1e-15);
        let ones = AffinityMatrix::new(Matrix::filled(3, 3, 1.0)).unwrap();
        assert_eq!(
            me_gradient(&z0, &ones, 1.0, 1.0).unwrap(),
            Matrix::filled(3, 3, 1.0)
        );
        let below = AffinityMatrix::new(Matrix::filled(3, 3, 0.0)).unwrap();
        assert!(matches!(
            me_gradient(&z0, &below, 1.0, 1.0),
            Err(Error::Domain(_))
        ));
    }

    /// Largest per-entry relative error between analytic and central
    /// finite-difference gradients. Entries much smaller than the gradient's
    /// scale are compared against `1e-3·scale` to avoid dividing by noise.
    fn fd_relative_error(z: &Matrix, c: &Matrix, l1: f64, l2: f64, h: f64) -> f64 {
        let zf = FeatureMatrix::new(z.clone()).unwrap();
        let analytic = me_gradient(&zf, &AffinityMatrix::new(c.clone()).unwrap(), l1, l2).unwrap();
        let n = c.rows();
        let mut numeric = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let mut cp = c.clone();
                cp[(i, j)] += h;
                let mut cm = c.clone();
                cm[(i, j)] -= h;
                numeric[(i, j)] = (objective_by_loops(z, &cp, l1, l2)
                    - objective_by_loops(z, &cm, l1, l2))
                    / (2.0 * h);
            }
        }
        let scale = numeric.max_abs();
        analytic
            .as_slice()
            .iter()
            .zip(numeric.as_slice())
            .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(1e-3 * scale))
            .fold(0.0, f64::max)
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = RngSeed(3).rng();
        let z = gaussian(3, 5, &mut rng);
        let c = positive(5, &mut rng);
        let err = fd_relative_error(&z, &c, 1.0, 2.0, 1e-6);
        assert!(err <= 1e-4, "relative error {err}");
    }

    #[test]
    fn gradient_matches_finite_differences_at_twenty_points() {
        let mut rng = RngSeed(4).rng();
        for _ in 0..20 {
            let d = rng.random_range(2..6);
            let n = rng.random_range(2..7);
            let z = gaussian(d, n, &mut rng);
            let c = positive(n, &mut rng);
            let l1 = rng.random_range(0.02..2.0);
            let l2 = rng.random_range(0.02..30.0);
            let err = fd_relative_error(&z, &c, l1, l2, 1e-6);
            assert!(err <= 1e-4, "relative error {err}");
        }
    }

    #[test]
    fn entropy_term_is_strictly_convex() {
        let mut rng = RngSeed(5).rng();
        for _ in 0..100 {
            let n = rng.random_range(2..8);
            let c1 = positive(n, &mut rng);
            let c2 = positive(n, &mut rng);
            let mid = c1.zip_with(&c2, |a, b| 0.5 * (a + b));
            let chord = 0.5 * (neg_entropy(&c1).unwrap() + neg_entropy(&c2).unwrap());
            assert!(neg_entropy(&mid).unwrap() < chord);
        }
    }

    #[test]
    fn regularizer_values() {
        let c = Matrix::from_rows(&[vec![1.0, -2.0], vec![0.0, 3.0]]).unwrap();
        assert_eq!(regularizer_value(RegularizerKind::L1, &c).unwrap(), 6.0);
        assert_eq!(
            regularizer_value(RegularizerKind::FrobeniusSquared, &c).unwrap(),
            14.0
        );
        assert!(regularizer_value(RegularizerKind::MaxEntropy, &c).is_err());
        let d = Matrix::from_rows(&[vec![3.0, 0.0], vec![0.0, -2.0]]).unwrap();
        let nuc = regularizer_value(RegularizerKind::Nuclear, &d).unwrap();
        assert!((nuc - 5.0).abs() < 1e-12);
    }
}
