//! Synthetic union-of-subspaces data, image embeddings of it, and the file
//! formats used to pass matrices and labels between pipeline stages.
//!
//! Every sample is a column: feature matrices are `d × n`, and image batches
//! store one row-major flattened image per column.

mod io;

use rand_distr::{Distribution, StandardNormal};

use crate::affinity::FeatureMatrix;
use crate::numerics::householder_q;
use crate::{Error, Matrix, Result, RngSeed};

pub use io::{
    export_heatmap, load_labels, load_matrix, read_binary, read_csv, save_labels, save_matrix,
    write_binary, write_csv, MatrixFormat, BINARY_MAGIC,
};

// Independent generator streams derived from a spec's seed.
const BASIS_STREAM: u64 = 0;
const COEFFICIENT_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;
const PIXEL_MAP_STREAM: u64 = 3;

/// A union of `k` independent linear subspaces in `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub subspace_dims: Vec<usize>,
    pub samples_per_subspace: Vec<usize>,
    pub ambient_dim: usize,
    pub noise_sigma: f64,
    pub seed: RngSeed,
}

impl SyntheticSpec {
    /// `k` subspaces that share one dimension and one sample count.
    pub fn uniform(
        k: usize,
        dim: usize,
        samples: usize,
        ambient_dim: usize,
        noise_sigma: f64,
        seed: RngSeed,
    ) -> Self {
        Self {
            subspace_dims: vec![dim; k],
            samples_per_subspace: vec![samples; k],
            ambient_dim,
            noise_sigma,
            seed,
        }
    }

    pub fn k(&self) -> usize {
        self.subspace_dims.len()
    }

    pub fn total_samples(&self) -> usize {
        self.samples_per_subspace.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.subspace_dims.is_empty() {
            return Err(Error::InfeasibleSpec(
                "at least one subspace is required".into(),
            ));
        }
        if self.subspace_dims.len() != self.samples_per_subspace.len() {
            return Err(Error::InfeasibleSpec(format!(
                "{} subspace dimensions but {} sample counts",
                self.subspace_dims.len(),
                self.samples_per_subspace.len()
            )));
        }
        for (i, (&d, &n)) in self
            .subspace_dims
            .iter()
            .zip(&self.samples_per_subspace)
            .enumerate()
        {
            if d == 0 {
                return Err(Error::InfeasibleSpec(format!(
                    "subspace {i} has dimension 0"
                )));
            }
            if n < d {
                return Err(Error::InfeasibleSpec(format!(
                    "subspace {i} has {n} samples, fewer than its dimension {d}"
                )));
            }
        }
        let total: usize = self.subspace_dims.iter().sum();
        if total > self.ambient_dim {
            return Err(Error::InfeasibleSpec(format!(
                "subspace dimensions sum to {total}, exceeding the ambient dimension {}",
                self.ambient_dim
            )));
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(Error::InfeasibleSpec(format!(
                "noise_sigma must be a non-negative real, got {}",
                self.noise_sigma
            )));
        }
        if self.total_samples() < 2 {
            return Err(Error::InfeasibleSpec(
                "at least two samples are required".into(),
            ));
        }
        Ok(())
    }

    /// Ground-truth labels: `n_0` zeros, then `n_1` ones, and so on.
    pub fn labels(&self) -> Vec<usize> {
        self.samples_per_subspace
            .iter()
            .enumerate()
            .flat_map(|(i, &n)| std::iter::repeat(i).take(n))
            .collect()
    }
}

/// Output of [`gen_subspaces`].
#[derive(Debug, Clone)]
pub struct SubspaceSample {
    pub features: FeatureMatrix,
    pub labels: Vec<usize>,
    /// Orthonormal `d × Σd_i` basis; subspace `i` owns the next `d_i` columns.
    pub basis: Matrix,
}

impl SubspaceSample {
    /// Columns of `basis` spanning subspace `i`.
    pub fn subspace_basis(&self, spec: &SyntheticSpec, i: usize) -> Matrix {
        let start: usize = spec.subspace_dims[..i].iter().sum();
        let cols: Vec<usize> = (start..start + spec.subspace_dims[i]).collect();
        self.basis.select_columns(&cols)
    }
}

fn gaussian(rows: usize, cols: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// Samples from a union of independent subspaces.
///
/// The basis is the Q factor of a seeded Gaussian matrix, so the subspaces
/// are mutually orthogonal. Coefficients are standard normal and noise is
/// isotropic Gaussian with standard deviation `noise_sigma`.
pub fn gen_subspaces(spec: &SyntheticSpec) -> Result<SubspaceSample> {
    spec.validate()?;
    let d = spec.ambient_dim;
    let total_dim: usize = spec.subspace_dims.iter().sum();
    let basis = householder_q(&gaussian(d, total_dim, &mut spec.seed.stream(BASIS_STREAM)))?;

    let n = spec.total_samples();
    let mut z = Matrix::zeros(d, n);
    let mut coeff_rng = spec.seed.stream(COEFFICIENT_STREAM);
    let mut noise_rng = spec.seed.stream(NOISE_STREAM);
    let mut col = 0;
    let mut offset = 0;
    for (&di, &ni) in spec.subspace_dims.iter().zip(&spec.samples_per_subspace) {
        for _ in 0..ni {
            let a: Vec<f64> = (0..di)
                .map(|_| StandardNormal.sample(&mut coeff_rng))
                .collect();
            for r in 0..d {
                let mut v = 0.0;
                for (t, at) in a.iter().enumerate() {
                    v += basis[(r, offset + t)] * at;
                }
                z[(r, col)] = v;
            }
            col += 1;
        }
        offset += di;
    }
    if spec.noise_sigma > 0.0 {
        for v in z.as_mut_slice() {
            let e: f64 = StandardNormal.sample(&mut noise_rng);
            *v += spec.noise_sigma * e;
        }
    }
    Ok(SubspaceSample {
        features: FeatureMatrix::new(z)?,
        labels: spec.labels(),
        basis,
    })
}

/// How samples of a [`Dataset`] are laid out in its columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    Vectors,
    /// Single-channel images, flattened row-major.
    Images {
        height: usize,
        width: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metadata {
    pub source: String,
    pub normalization: String,
    pub seed: Option<RngSeed>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    /// One sample per column.
    pub samples: Matrix,
    pub layout: Layout,
    pub labels: Option<Vec<usize>>,
    pub metadata: Metadata,
}

impl Dataset {
    pub fn new(
        samples: Matrix,
        layout: Layout,
        labels: Option<Vec<usize>>,
        metadata: Metadata,
    ) -> Result<Self> {
        if let Layout::Images { height, width } = layout {
            if height * width != samples.rows() {
                return Err(Error::Dimension(format!(
                    "{height}x{width} images need {} rows, got {}",
                    height * width,
                    samples.rows()
                )));
            }
        }
        if let Some(l) = &labels {
            if l.len() != samples.cols() {
                return Err(Error::Dimension(format!(
                    "{} labels for {} samples",
                    l.len(),
                    samples.cols()
                )));
            }
        }
        Ok(Self {
            samples,
            layout,
            labels,
            metadata,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// The fixed affine map that turns subspace features into pixels:
/// `pixel = offset + scale · map · z`, clipped to `[0, 1]`.
#[derive(Debug, Clone)]
pub struct PixelEmbedding {
    /// `side² × d` standard normal matrix.
    pub map: Matrix,
    pub scale: f64,
    pub offset: f64,
}

impl PixelEmbedding {
    /// The linear part `scale · map · z`, before the offset and clipping.
    pub fn linear(&self, z: &Matrix) -> Result<Matrix> {
        Ok(self.map.matmul(z)?.scale(self.scale))
    }

    pub fn apply(&self, z: &Matrix) -> Result<Matrix> {
        let offset = self.offset;
        Ok(self.linear(z)?.map(|v| (v + offset).clamp(0.0, 1.0)))
    }
}

/// Output of [`gen_images`].
#[derive(Debug, Clone)]
pub struct ImageSample {
    pub dataset: Dataset,
    pub subspaces: SubspaceSample,
    pub embedding: PixelEmbedding,
}

/// Renders [`gen_subspaces`] output as `side × side` grayscale images.
///
/// The scale puts the typical pixel three standard deviations inside the
/// `[0, 1]` range around mid-gray, so clipping is rare.
pub fn gen_images(spec: &SyntheticSpec, side: usize) -> Result<ImageSample> {
    spec.validate()?;
    let pixels = side * side;
    if side == 0 || pixels < spec.ambient_dim {
        return Err(Error::InvalidArgument(format!(
            "{side}x{side} images cannot hold ambient dimension {}",
            spec.ambient_dim
        )));
    }
    let subspaces = gen_subspaces(spec)?;
    let d = spec.ambient_dim;
    let map = gaussian(pixels, d, &mut spec.seed.stream(PIXEL_MAP_STREAM));
    let max_dim = *spec.subspace_dims.iter().max().unwrap_or(&1) as f64;
    let typical_norm = (max_dim + d as f64 * spec.noise_sigma.powi(2)).sqrt();
    let embedding = PixelEmbedding {
        map,
        scale: 1.0 / (6.0 * typical_norm),
        offset: 0.5,
    };
    let images = embedding.apply(subspaces.features.matrix())?;
    let dataset = Dataset::new(
        images,
        Layout::Images {
            height: side,
            width: side,
        },
        Some(subspaces.labels.clone()),
        Metadata {
            source: "gen_images".into(),
            normalization: "clip[0,1]".into(),
            seed: Some(spec.seed),
        },
    )?;
    Ok(ImageSample {
        dataset,
        subspaces,
        embedding,
    })
}

/// Maps entries to `[0, 1]` by `(m − min)/(max − min)`. A constant matrix
/// maps to zeros.
pub fn minmax_normalize(m: &Matrix) -> Matrix {
    let lo = m.min_value();
    let range = m.max_value() - lo;
    if range > 0.0 {
        m.map(|v| ((v - lo) / range).clamp(0.0, 1.0))
    } else {
        m.map(|_| 0.0)
    }
}
