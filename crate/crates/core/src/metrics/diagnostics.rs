use crate::data::minmax_normalize;
use crate::{Error, Matrix, Result};

/// How closely an affinity follows the ground-truth block structure.
///
/// Computed on `|C|` after min-max normalisation to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockDiagnostics {
    /// Population variance of the normalised within-block entries, one per
    /// class in ascending label order.
    pub block_variances: Vec<f64>,
    /// Share of the normalised mass that falls outside the blocks.
    pub off_block_mass: f64,
    /// Cosine similarity with the block-constant ideal affinity.
    pub cosine_to_ideal: f64,
}

impl BlockDiagnostics {
    pub fn mean_variance(&self) -> f64 {
        self.block_variances.iter().sum::<f64>() / self.block_variances.len() as f64
    }
}

/// The ideal affinity for `labels`: 1 where two samples share a class, 0
/// elsewhere.
pub fn ideal_affinity(labels: &[usize]) -> Matrix {
    let n = labels.len();
    Matrix::from_fn(n, n, |i, j| if labels[i] == labels[j] { 1.0 } else { 0.0 })
}

pub fn block_diagnostics(c: &Matrix, labels: &[usize]) -> Result<BlockDiagnostics> {
    if !c.is_square() {
        return Err(Error::InvalidArgument(format!(
            "affinity must be square, got {}x{}",
            c.rows(),
            c.cols()
        )));
    }
    let n = c.rows();
    if labels.len() != n {
        return Err(Error::InvalidArgument(format!(
            "{} labels for a {n}x{n} affinity",
            labels.len()
        )));
    }
    let m = minmax_normalize(&c.map(f64::abs));

    let mut classes: Vec<usize> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let mut block_variances = Vec::with_capacity(classes.len());
    for &class in &classes {
        let members: Vec<usize> = (0..n).filter(|&i| labels[i] == class).collect();
        let count = (members.len() * members.len()) as f64;
        let mut sum = 0.0;
        for &i in &members {
            for &j in &members {
                sum += m[(i, j)];
            }
        }
        let mean = sum / count;
        let mut var = 0.0;
        for &i in &members {
            for &j in &members {
                var += (m[(i, j)] - mean).powi(2);
            }
        }
        block_variances.push(var / count);
    }

    let mut inside = 0.0;
    let mut outside = 0.0;
    let mut ideal_norm_sq = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            if labels[i] == labels[j] {
                inside += m[(i, j)];
                ideal_norm_sq += 1.0;
            } else {
                outside += m[(i, j)];
            }
        }
    }
    let total = inside + outside;
    let off_block_mass = if total > 0.0 { outside / total } else { 0.0 };
    let m_norm = m.frobenius_norm();
    let cosine_to_ideal = if m_norm > 0.0 {
        inside / (m_norm * ideal_norm_sq.sqrt())
    } else {
        0.0
    };
    Ok(BlockDiagnostics {
        block_variances,
        off_block_mass,
        cosine_to_ideal,
    })
}
