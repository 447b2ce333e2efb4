//! Normalised spectral clustering of a learned affinity.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::numerics::sym_eigen;
use crate::{Error, Matrix, Result, RngSeed};

pub const DEFAULT_RESTARTS: usize = 10;
const MAX_LLOYD_ITERATIONS: usize = 300;

/// Cluster labels in `0..k`, one per sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterAssignment {
    labels: Vec<usize>,
    k: usize,
}

impl ClusterAssignment {
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} is not below k = {k}"
            )));
        }
        Ok(Self { labels, k })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn into_labels(self) -> Vec<usize> {
        self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }
}

/// `W = (|C| + |Cᵀ|)/2`.
pub fn symmetrize(c: &Matrix) -> Result<Matrix> {
    if !c.is_square() {
        return Err(Error::Dimension(format!(
            "affinity must be square, got {}x{}",
            c.rows(),
            c.cols()
        )));
    }
    let n = c.rows();
    let mut w = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = 0.5 * (c[(i, j)].abs() + c[(j, i)].abs());
            w[(i, j)] = v;
            w[(j, i)] = v;
        }
    }
    Ok(w)
}

#[derive(Debug, Clone)]
pub struct Laplacian {
    pub matrix: Matrix,
    /// Vertices of zero degree; their `D^{-1/2}` entry is taken as 0.
    pub isolated: Vec<usize>,
}

/// `L = I − D^{-1/2} W D^{-1/2}`, exactly symmetric.
pub fn normalized_laplacian(w: &Matrix) -> Result<Laplacian> {
    if !w.is_square() {
        return Err(Error::Dimension(format!(
            "weight matrix must be square, got {}x{}",
            w.rows(),
            w.cols()
        )));
    }
    let n = w.rows();
    let scale = w.max_abs();
    let mut max_deviation: f64 = 0.0;
    for i in 0..n {
        for j in 0..i {
            max_deviation = max_deviation.max((w[(i, j)] - w[(j, i)]).abs());
        }
    }
    if max_deviation > crate::numerics::SYMMETRY_TOLERANCE * scale {
        return Err(Error::Asymmetric { max_deviation });
    }
    if w.min_value() < 0.0 {
        return Err(Error::Domain("weight matrix has negative entries".into()));
    }

    let mut isolated = Vec::new();
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| {
            let degree: f64 = w.row(i).iter().sum();
            if degree > 0.0 {
                1.0 / degree.sqrt()
            } else {
                isolated.push(i);
                0.0
            }
        })
        .collect();
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = inv_sqrt[i] * w[(i, j)] * inv_sqrt[j];
            let entry = if i == j { 1.0 - v } else { -v };
            l[(i, j)] = entry;
            l[(j, i)] = entry;
        }
    }
    Ok(Laplacian {
        matrix: l,
        isolated,
    })
}

/// Result of [`kmeans`] for the best restart.
#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub assignment: ClusterAssignment,
    pub centroids: Matrix,
    /// Within-cluster sum of squared distances.
    pub inertia: f64,
    /// Inertia after every Lloyd iteration of the chosen restart.
    pub history: Vec<f64>,
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ seeding: the first centre uniformly, then each next centre with
/// probability proportional to its squared distance from the nearest centre.
fn seed_centroids(points: &Matrix, k: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let n = points.rows();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut nearest: Vec<f64> = (0..n)
        .map(|i| squared_distance(points.row(i), points.row(chosen[0])))
        .collect();
    while chosen.len() < k {
        let next = match WeightedIndex::new(&nearest) {
            Ok(dist) => dist.sample(rng),
            // Every point coincides with a centre already.
            Err(_) => rng.random_range(0..n),
        };
        chosen.push(next);
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(squared_distance(points.row(i), points.row(next)));
        }
    }
    points.select_rows(&chosen)
}

fn assign(points: &Matrix, centroids: &Matrix, labels: &mut [usize]) -> f64 {
    let mut inertia = 0.0;
    for (i, label) in labels.iter_mut().enumerate() {
        let mut best = (f64::INFINITY, 0);
        for c in 0..centroids.rows() {
            let d = squared_distance(points.row(i), centroids.row(c));
            if d < best.0 {
                best = (d, c);
            }
        }
        *label = best.1;
        inertia += best.0;
    }
    inertia
}

/// Recomputes centroids as cluster means. An empty cluster takes over the
/// point farthest from its current centre, which can only lower inertia.
fn update(points: &Matrix, labels: &mut [usize], centroids: &mut Matrix) {
    let k = centroids.rows();
    let dim = points.cols();
    loop {
        let mut counts = vec![0usize; k];
        for &l in labels.iter() {
            counts[l] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            break;
        };
        let mut far = (-1.0, 0);
        for (i, &l) in labels.iter().enumerate() {
            if counts[l] < 2 {
                continue;
            }
            let d = squared_distance(points.row(i), centroids.row(l));
            if d > far.0 {
                far = (d, i);
            }
        }
        labels[far.1] = empty;
        centroids.row_mut(empty).copy_from_slice(points.row(far.1));
    }
    let mut sums = Matrix::zeros(k, dim);
    let mut counts = vec![0usize; k];
    for (i, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        for (s, p) in sums.row_mut(l).iter_mut().zip(points.row(i)) {
            *s += p;
        }
    }
    for c in 0..k {
        let inv = 1.0 / counts[c] as f64;
        for (dst, s) in centroids.row_mut(c).iter_mut().zip(sums.row(c)) {
            *dst = s * inv;
        }
    }
}

fn inertia_of(points: &Matrix, centroids: &Matrix, labels: &[usize]) -> f64 {
    labels
        .iter()
        .enumerate()
        .map(|(i, &l)| squared_distance(points.row(i), centroids.row(l)))
        .sum()
}

fn lloyd(points: &Matrix, k: usize, rng: &mut ChaCha8Rng) -> KMeansFit {
    let mut centroids = seed_centroids(points, k, rng);
    let mut labels = vec![0; points.rows()];
    let mut history = Vec::new();
    assign(points, &centroids, &mut labels);
    for _ in 0..MAX_LLOYD_ITERATIONS {
        update(points, &mut labels, &mut centroids);
        history.push(inertia_of(points, &centroids, &labels));
        let previous = labels.clone();
        let inertia = assign(points, &centroids, &mut labels);
        history.push(inertia);
        if labels == previous {
            break;
        }
    }
    KMeansFit {
        inertia: *history.last().expect("at least one iteration"),
        assignment: ClusterAssignment { labels, k },
        centroids,
        history,
    }
}

/// Lloyd's algorithm on the rows of `points` with k-means++ seeding.
///
/// Restart `r` draws from stream `r` of `seed`; the restart with the lowest
/// inertia wins, ties going to the earliest.
pub fn kmeans(points: &Matrix, k: usize, seed: RngSeed, restarts: usize) -> Result<KMeansFit> {
    let n = points.rows();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!(
            "k must lie in 1..={n}, got {k}"
        )));
    }
    if restarts == 0 {
        return Err(Error::InvalidArgument("restarts must be at least 1".into()));
    }
    let mut best: Option<KMeansFit> = None;
    for r in 0..restarts {
        let fit = lloyd(points, k, &mut seed.stream(r as u64));
        if best.as_ref().is_none_or(|b| fit.inertia < b.inertia) {
            best = Some(fit);
        }
    }
    Ok(best.expect("restarts >= 1"))
}

/// Rows of the `k` eigenvectors for the smallest Laplacian eigenvalues,
/// each scaled to unit length (zero rows stay zero).
pub fn spectral_embedding(laplacian: &Matrix, k: usize) -> Result<Matrix> {
    let n = laplacian.rows();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!(
            "k must lie in 1..={n}, got {k}"
        )));
    }
    let eig = sym_eigen(laplacian)?;
    let mut embedding = eig.vectors.select_columns(&(0..k).collect::<Vec<_>>());
    for i in 0..n {
        let row = embedding.row_mut(i);
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            row.iter_mut().for_each(|v| *v /= norm);
        }
    }
    Ok(embedding)
}

/// Symmetrise, build the normalised Laplacian, embed and run k-means with
/// [`DEFAULT_RESTARTS`] restarts.
pub fn spectral_cluster(c: &Matrix, k: usize, seed: RngSeed) -> Result<ClusterAssignment> {
    spectral_cluster_with_restarts(c, k, seed, DEFAULT_RESTARTS)
}

pub fn spectral_cluster_with_restarts(
    c: &Matrix,
    k: usize,
    seed: RngSeed,
    restarts: usize,
) -> Result<ClusterAssignment> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!(
            "spectral clustering needs k >= 2, got {k}"
        )));
    }
    let laplacian = normalized_laplacian(&symmetrize(c)?)?;
    let embedding = spectral_embedding(&laplacian.matrix, k)?;
    Ok(kmeans(&embedding, k, seed, restarts)?.assignment)
}
