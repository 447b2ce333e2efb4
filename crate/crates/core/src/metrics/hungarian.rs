use crate::{Error, Matrix, Result};

/// Minimum-cost perfect assignment on a square cost matrix (Kuhn–Munkres
/// with row/column potentials, `O(k³)`).
///
/// Returns `assignment` with `assignment[row] = column`. Rows are inserted
/// in index order and ties are resolved towards the lowest column, so equal
/// inputs always give the same answer.
pub fn hungarian(cost: &Matrix) -> Result<Vec<usize>> {
    if !cost.is_square() {
        return Err(Error::InvalidArgument(format!(
            "assignment needs a square cost matrix, got {}x{}",
            cost.rows(),
            cost.cols()
        )));
    }
    let n = cost.rows();
    // 1-based arrays; index 0 is the virtual source column.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut col_owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for row in 1..=n {
        col_owner[0] = row;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = col_owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[col_owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if col_owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            col_owner[j0] = col_owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![0; n];
    for j in 1..=n {
        assignment[col_owner[j] - 1] = j - 1;
    }
    Ok(assignment)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngSeed;
    use rand::Rng;

    fn total(cost: &Matrix, a: &[usize]) -> f64 {
        a.iter().enumerate().map(|(i, &j)| cost[(i, j)]).sum()
    }

    fn permutations(k: usize) -> Vec<Vec<usize>> {
        if k == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(k - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, k - 1);
                out.push(q);
            }
        }
        out
    }

    #[test]
    fn diagonal_minimum_gives_identity() {
        let cost = Matrix::from_fn(4, 4, |i, j| if i == j { 0.0 } else { 5.0 + (i + j) as f64 });
        assert_eq!(hungarian(&cost).unwrap(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn matches_brute_force_on_small_matrices() {
        let mut rng = RngSeed(21).rng();
        for _ in 0..200 {
            let k = rng.random_range(1..=6);
            let cost = Matrix::from_fn(k, k, |_, _| rng.random_range(0..20) as f64);
            let best = permutations(k)
                .iter()
                .map(|p| total(&cost, p))
                .fold(f64::INFINITY, f64::min);
            let a = hungarian(&cost).unwrap();
            let mut seen = a.clone();
            seen.sort();
            assert_eq!(seen, (0..k).collect::<Vec<_>>());
            assert_eq!(total(&cost, &a), best);
        }
    }

    #[test]
    fn row_shift_keeps_assignment() {
        let cost = Matrix::from_rows(&[
            vec![4.0, 1.0, 3.0],
            vec![2.0, 0.0, 5.0],
            vec![3.0, 2.0, 2.0],
        ])
        .unwrap();
        let a = hungarian(&cost).unwrap();
        let mut shifted = cost.clone();
        for j in 0..3 {
            shifted[(1, j)] += 17.5;
        }
        assert_eq!(hungarian(&shifted).unwrap(), a);
    }

    #[test]
    fn rejects_rectangular() {
        assert!(matches!(
            hungarian(&Matrix::zeros(2, 3)),
            Err(Error::InvalidArgument(_))
        ));
    }
}
