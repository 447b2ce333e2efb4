//! Clustering scores and affinity-structure diagnostics.
//!
//! All entropies use the natural logarithm. Labels are arbitrary `usize`
//! values; only the partition they induce matters.

mod diagnostics;
mod hungarian;

use std::collections::BTreeMap;

use crate::{Error, Matrix, Result};

pub use diagnostics::{block_diagnostics, ideal_affinity, BlockDiagnostics};
pub use hungarian::hungarian;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub acc_percent: f64,
    pub nmi_percent: f64,
    pub homogeneity: f64,
    pub completeness: f64,
}

impl MetricsReport {
    pub fn evaluate(truth: &[usize], predicted: &[usize]) -> Result<Self> {
        let (homogeneity, completeness) = homogeneity_completeness(truth, predicted)?;
        Ok(Self {
            acc_percent: accuracy(truth, predicted)?,
            nmi_percent: nmi(truth, predicted)?,
            homogeneity,
            completeness,
        })
    }
}

/// Class-by-cluster counts with labels compacted to `0..k` in sorted order.
struct Contingency {
    counts: Vec<Vec<usize>>,
    row_totals: Vec<usize>,
    col_totals: Vec<usize>,
    n: usize,
}

impl Contingency {
    fn new(truth: &[usize], predicted: &[usize]) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::InvalidArgument(format!(
                "label vectors differ in length: {} vs {}",
                truth.len(),
                predicted.len()
            )));
        }
        if truth.is_empty() {
            return Err(Error::InvalidArgument("label vectors are empty".into()));
        }
        let rows = compact(truth);
        let cols = compact(predicted);
        let mut counts = vec![vec![0; cols.len()]; rows.len()];
        for (t, p) in truth.iter().zip(predicted) {
            counts[rows[t]][cols[p]] += 1;
        }
        let row_totals = counts.iter().map(|r| r.iter().sum()).collect();
        let col_totals = (0..cols.len())
            .map(|j| counts.iter().map(|r| r[j]).sum())
            .collect();
        Ok(Self {
            counts,
            row_totals,
            col_totals,
            n: truth.len(),
        })
    }

    fn entropy(totals: &[usize], n: usize) -> f64 {
        let n = n as f64;
        -totals
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / n;
                p * p.ln()
            })
            .sum::<f64>()
    }

    fn truth_entropy(&self) -> f64 {
        Self::entropy(&self.row_totals, self.n)
    }

    fn predicted_entropy(&self) -> f64 {
        Self::entropy(&self.col_totals, self.n)
    }

    fn mutual_information(&self) -> f64 {
        let n = self.n as f64;
        let mut mi = 0.0;
        for (a, row) in self.counts.iter().enumerate() {
            for (b, &c) in row.iter().enumerate() {
                if c == 0 {
                    continue;
                }
                let joint = c as f64 / n;
                let pa = self.row_totals[a] as f64 / n;
                let pb = self.col_totals[b] as f64 / n;
                mi += joint * (joint / (pa * pb)).ln();
            }
        }
        mi
    }

    /// `H(truth | predicted)` when `given_predicted`, else `H(predicted | truth)`.
    fn conditional_entropy(&self, given_predicted: bool) -> f64 {
        let n = self.n as f64;
        let mut h = 0.0;
        for (a, row) in self.counts.iter().enumerate() {
            for (b, &c) in row.iter().enumerate() {
                if c == 0 {
                    continue;
                }
                let given = if given_predicted {
                    self.col_totals[b]
                } else {
                    self.row_totals[a]
                };
                h -= (c as f64 / n) * (c as f64 / given as f64).ln();
            }
        }
        h
    }
}

fn compact(labels: &[usize]) -> BTreeMap<usize, usize> {
    let mut map = BTreeMap::new();
    for &l in labels {
        map.entry(l).or_insert(0);
    }
    for (i, v) in map.values_mut().enumerate() {
        *v = i;
    }
    map
}

/// Clustering accuracy in percent under the best one-to-one mapping of
/// clusters to classes. The contingency table is zero-padded to square when
/// the label counts differ.
pub fn accuracy(truth: &[usize], predicted: &[usize]) -> Result<f64> {
    let table = Contingency::new(truth, predicted)?;
    let k = table.row_totals.len().max(table.col_totals.len());
    let max_count = table.n as f64;
    let cost = Matrix::from_fn(k, k, |a, b| {
        let c = table
            .counts
            .get(a)
            .and_then(|r| r.get(b))
            .copied()
            .unwrap_or(0);
        max_count - c as f64
    });
    let assignment = hungarian(&cost)?;
    let matched: usize = assignment
        .iter()
        .enumerate()
        .map(|(a, &b)| {
            table
                .counts
                .get(a)
                .and_then(|r| r.get(b))
                .copied()
                .unwrap_or(0)
        })
        .sum();
    Ok(100.0 * matched as f64 / table.n as f64)
}

/// Mutual information normalised by `max(H(truth), H(predicted))`, in
/// percent. When both labelings are constant the partitions coincide and
/// the score is 100.
pub fn nmi(truth: &[usize], predicted: &[usize]) -> Result<f64> {
    let table = Contingency::new(truth, predicted)?;
    let denom = table.truth_entropy().max(table.predicted_entropy());
    if denom == 0.0 {
        return Ok(100.0);
    }
    Ok((100.0 * table.mutual_information() / denom).clamp(0.0, 100.0))
}

/// Homogeneity `1 − H(truth|pred)/H(truth)` and completeness
/// `1 − H(pred|truth)/H(pred)`. A zero denominator scores 1.
pub fn homogeneity_completeness(truth: &[usize], predicted: &[usize]) -> Result<(f64, f64)> {
    let table = Contingency::new(truth, predicted)?;
    let ratio = |num: f64, den: f64| if den == 0.0 { 0.0 } else { num / den };
    let h = 1.0 - ratio(table.conditional_entropy(true), table.truth_entropy());
    let c = 1.0 - ratio(table.conditional_entropy(false), table.predicted_entropy());
    Ok((h.clamp(0.0, 1.0), c.clamp(0.0, 1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngSeed;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[0, 0, 1, 1], &[1, 1, 0, 0]).unwrap(), 100.0);
        assert_eq!(accuracy(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap(), 50.0);
        assert_eq!(accuracy(&[0, 1, 2], &[2, 0, 1]).unwrap(), 100.0);
        // Unequal cluster counts pad the table.
        assert_eq!(accuracy(&[0, 0, 0, 1], &[5, 6, 7, 8]).unwrap(), 50.0);
        assert!(matches!(
            accuracy(&[0, 1], &[0]),
            Err(Error::InvalidArgument(_))
        ));
        assert!(accuracy(&[], &[]).is_err());
    }

    #[test]
    fn nmi_examples() {
        assert!((nmi(&[0, 0, 1, 1], &[3, 3, 7, 7]).unwrap() - 100.0).abs() < 1e-12);
        assert_eq!(nmi(&[0, 0, 1, 1], &[4, 4, 4, 4]).unwrap(), 0.0);
        // Direct evaluation: MI = ¼ln2 + ¼ln(2/3) + ½ln(4/3), H(Y) = ln 2.
        let mi = 0.25 * 2f64.ln() + 0.25 * (2.0f64 / 3.0).ln() + 0.5 * (4.0f64 / 3.0).ln();
        let expected = 100.0 * mi / 2f64.ln();
        let got = nmi(&[0, 0, 1, 1], &[0, 1, 1, 1]).unwrap();
        assert!((got - expected).abs() < 1e-12);
        assert!((got - 31.13).abs() < 0.01, "{got}");
        assert_eq!(nmi(&[2, 2, 2], &[1, 1, 1]).unwrap(), 100.0);
    }

    #[test]
    fn homogeneity_completeness_examples() {
        let (h, c) = homogeneity_completeness(&[0, 0, 1, 1], &[1, 1, 0, 0]).unwrap();
        assert!((h - 1.0).abs() < 1e-12 && (c - 1.0).abs() < 1e-12);
        assert_eq!(
            homogeneity_completeness(&[0, 0, 1, 1], &[0, 0, 0, 0]).unwrap(),
            (0.0, 1.0)
        );
        // Singletons: every cluster is pure, but each class is split.
        let (h, c) = homogeneity_completeness(&[0, 0, 1, 1, 1], &[0, 1, 2, 3, 4]).unwrap();
        assert!((h - 1.0).abs() < 1e-12);
        let hy = -(0.4f64 * 0.4f64.ln() + 0.6 * 0.6f64.ln());
        let h_pred = 5f64.ln();
        let h_pred_given_y = 0.4 * 2f64.ln() + 0.6 * 3f64.ln();
        assert!((c - (1.0 - h_pred_given_y / h_pred)).abs() < 1e-12);
        assert!(c < 1.0 && hy > 0.0);
    }

    #[test]
    fn metrics_report_bundles_scores() {
        let r = MetricsReport::evaluate(&[0, 0, 1, 1], &[1, 1, 0, 0]).unwrap();
        assert_eq!(r.acc_percent, 100.0);
        assert!((r.nmi_percent - 100.0).abs() < 1e-12);
    }

    fn labels(max_len: usize, max_label: usize) -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
        (1..=max_len).prop_flat_map(move |n| {
            (
                proptest::collection::vec(0..max_label, n),
                proptest::collection::vec(0..max_label, n),
            )
        })
    }

    proptest! {
        #[test]
        fn accuracy_ignores_label_names((y, p) in labels(30, 6), shift in 1usize..50) {
            let renamed: Vec<usize> = p.iter().map(|&l| (5 - l) * 7 + shift).collect();
            prop_assert_eq!(accuracy(&y, &p).unwrap(), accuracy(&y, &renamed).unwrap());
            prop_assert_eq!(accuracy(&p, &y).unwrap(), accuracy(&renamed, &y).unwrap());
        }

        #[test]
        fn self_agreement_is_perfect((y, _) in labels(30, 6)) {
            prop_assert_eq!(accuracy(&y, &y).unwrap(), 100.0);
            prop_assert!((nmi(&y, &y).unwrap() - 100.0).abs() < 1e-12);
        }

        #[test]
        fn nmi_is_symmetric((y, p) in labels(40, 5)) {
            let a = nmi(&y, &p).unwrap();
            let b = nmi(&p, &y).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!((0.0..=100.0).contains(&a));
            let (h, c) = homogeneity_completeness(&y, &p).unwrap();
            prop_assert!((0.0..=1.0).contains(&h) && (0.0..=1.0).contains(&c));
        }
    }

    #[test]
    fn random_accuracy_bounds() {
        let mut rng = RngSeed(9).rng();
        for _ in 0..50 {
            let n = rng.random_range(1..20);
            let y: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
            let p: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
            let acc = accuracy(&y, &p).unwrap();
            assert!((0.0..=100.0).contains(&acc));
        }
    }
}
