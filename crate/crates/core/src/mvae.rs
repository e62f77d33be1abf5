//! Movie-VAE: a [`MlpVae`] over movie feature rows whose posterior means are
//! the movie embeddings consumed by the hybrid model.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::features::{FeatureSet, MovieFeatureMatrix};
use crate::ndmath::{Matrix, RngStream};
use crate::vae::{train, Architecture, EpochLog, MlpVae, TrainConfig};

pub const DEFAULT_EMBEDDING_DIM: usize = 3;

/// N × E embedding rows aligned with the movie index.
#[derive(Debug, Clone, PartialEq)]
pub struct MovieEmbeddingTable {
    source: FeatureSet,
    table: Matrix,
}

impl MovieEmbeddingTable {
    pub fn new(source: FeatureSet, table: Matrix) -> Result<Self> {
        if !table.is_finite() {
            return Err(Error::Invalid("embedding table contains non-finite values".into()));
        }
        if table.cols() == 0 {
            return Err(Error::Invalid("embedding dimension must be at least 1".into()));
        }
        Ok(Self { source, table })
    }

    pub fn source(&self) -> FeatureSet {
        self.source
    }

    pub fn table(&self) -> &Matrix {
        &self.table
    }

    pub fn into_table(self) -> Matrix {
        self.table
    }

    pub fn n_movies(&self) -> usize {
        self.table.rows()
    }

    pub fn dim(&self) -> usize {
        self.table.cols()
    }

    /// Euclidean distance between corresponding rows of two tables.
    pub fn displacement(&self, other: &MovieEmbeddingTable) -> Result<Vec<f64>> {
        if self.table.shape() != other.table.shape() {
            return Err(Error::Dimension {
                op: "displacement",
                left: self.table.shape(),
                right: other.table.shape(),
            });
        }
        Ok(self
            .table
            .row_iter()
            .zip(other.table.row_iter())
            .map(|(a, b)| libm::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()))
            .collect())
    }
}

/// Column-wise min-max scaling into [0, 1]. Constant columns are clamped
/// into [0, 1] instead, so binary features pass through unchanged.
pub fn min_max_scale(features: &Matrix) -> Matrix {
    let mut out = features.clone();
    for c in 0..features.cols() {
        let (lo, hi) = (0..features.rows()).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
            let v = features[(r, c)];
            (lo.min(v), hi.max(v))
        });
        for r in 0..features.rows() {
            let v = features[(r, c)];
            out[(r, c)] = if hi > lo { (v - lo) / (hi - lo) } else { v.clamp(0.0, 1.0) };
        }
    }
    out
}

/// Trains a Movie-VAE with latent size `embedding_dim` on min-max scaled
/// feature rows. Weights are initialised from the `"init"` substream of
/// `cfg.seed`.
pub fn train_mvae(
    features: &MovieFeatureMatrix,
    cfg: &TrainConfig,
    hidden: &[usize],
    embedding_dim: usize,
) -> Result<(MlpVae, Vec<EpochLog>)> {
    if features.n_movies() == 0 || features.dim() == 0 {
        return Err(Error::Size("movie feature matrix is empty".into()));
    }
    let arch = Architecture::new(features.dim(), hidden.to_vec(), embedding_dim);
    let mut model = MlpVae::new(&arch, &mut RngStream::substream(cfg.seed, "init"))?;
    let scaled = min_max_scale(&features.matrix);
    let history = train(&mut model, &scaled, cfg)?;
    Ok((model, history))
}

/// Posterior means of every movie's scaled feature row.
pub fn export_embeddings(model: &MlpVae, features: &MovieFeatureMatrix) -> Result<MovieEmbeddingTable> {
    let (mean, _) = model.encode(&min_max_scale(&features.matrix))?;
    MovieEmbeddingTable::new(features.set, mean)
}
