//! Hybrid-VAE: the encoder sees each clicked movie's embedding instead of a
//! bare 1, unclicked movies contribute the zero embedding, and the decoder
//! still reconstructs the raw click vector.
//!
//! The N × E embedding assembly reaches the encoder either flattened
//! movie-major (length N·E) or reduced to one value per movie by a single
//! E → 1 affine map shared across movies (length N).

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::features::FeatureSet;
use crate::mvae::MovieEmbeddingTable;
use crate::ndmath::{dot, Matrix, RngStream};
use crate::vae::{loss, Architecture, EpochLog, ForwardTrace, LossBreakdown, MlpVae, Noise, Parameters, TrainConfig, VaeObjective};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AssemblyMode {
    #[default]
    Flatten,
    DenseReduce,
}

impl AssemblyMode {
    pub fn tag(self) -> u8 {
        match self {
            AssemblyMode::Flatten => 0,
            AssemblyMode::DenseReduce => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(AssemblyMode::Flatten),
            1 => Some(AssemblyMode::DenseReduce),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AssemblyMode::Flatten => "flatten",
            AssemblyMode::DenseReduce => "dense-reduce",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "flatten" => Some(AssemblyMode::Flatten),
            "dense-reduce" | "dense" => Some(AssemblyMode::DenseReduce),
            _ => None,
        }
    }
}

/// Shared `E → 1` map of the dense-reduce mode.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseReduction {
    pub weight: Vec<f64>,
    /// Single bias, stored as a one-element vector.
    pub bias: Vec<f64>,
}

impl DenseReduction {
    pub fn new(weight: Vec<f64>, bias: f64) -> Self {
        Self { weight, bias: vec![bias] }
    }

    pub fn zeros(dim: usize) -> Self {
        Self::new(vec![0.0; dim], 0.0)
    }
}

/// One user's N × E assembly: row `i` is `table[i]` when movie `i` is clicked
/// and zero otherwise.
pub fn assemble_embedding_input(clicks: &[f64], table: &Matrix) -> Result<Matrix> {
    if clicks.len() != table.rows() {
        return Err(Error::Dimension {
            op: "assemble_embedding_input",
            left: (1, clicks.len()),
            right: table.shape(),
        });
    }
    let mut out = Matrix::zeros(table.rows(), table.cols());
    for (i, &x) in clicks.iter().enumerate() {
        if x != 0.0 {
            out.row_mut(i).iter_mut().zip(table.row(i)).for_each(|(o, &t)| *o = x * t);
        }
    }
    Ok(out)
}

/// Collapses an assembly to the encoder input vector.
pub fn reduce(assembly: &Matrix, mode: AssemblyMode, weights: Option<&DenseReduction>) -> Result<Vec<f64>> {
    match (mode, weights) {
        (AssemblyMode::Flatten, None) => Ok(assembly.as_slice().to_vec()),
        (AssemblyMode::DenseReduce, Some(w)) => {
            if w.weight.len() != assembly.cols() {
                return Err(Error::Dimension {
                    op: "reduce",
                    left: assembly.shape(),
                    right: (w.weight.len(), 1),
                });
            }
            Ok(assembly.row_iter().map(|row| dot(row, &w.weight) + w.bias[0]).collect())
        }
        (AssemblyMode::Flatten, Some(_)) => Err(Error::Invalid("flatten mode takes no reduction weights".into())),
        (AssemblyMode::DenseReduce, None) => Err(Error::Invalid("dense-reduce mode needs reduction weights".into())),
    }
}

/// Inverse of the flatten reshaping.
pub fn unflatten(flat: &[f64], n_movies: usize, dim: usize) -> Result<Matrix> {
    Matrix::from_vec(n_movies, dim, flat.to_vec())
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridVae {
    pub embeddings: Matrix,
    pub source: FeatureSet,
    pub mode: AssemblyMode,
    /// Present iff `mode` is [`AssemblyMode::DenseReduce`].
    pub reduction: Option<DenseReduction>,
    pub inner: MlpVae,
    /// When set, the embedding table receives zero gradient.
    pub freeze_embeddings: bool,
}

impl HybridVae {
    /// Glorot-initialised hybrid model around a snapshot of `table`.
    pub fn new(
        table: &MovieEmbeddingTable,
        mode: AssemblyMode,
        hidden: &[usize],
        latent: usize,
        rng: &mut RngStream,
    ) -> Result<Self> {
        let n = table.n_movies();
        let e = table.dim();
        let input = match mode {
            AssemblyMode::Flatten => n * e,
            AssemblyMode::DenseReduce => n,
        };
        let reduction = match mode {
            AssemblyMode::Flatten => None,
            AssemblyMode::DenseReduce => {
                let std = libm::sqrt(2.0 / (e + 1) as f64);
                Some(DenseReduction::new((0..e).map(|_| std * rng.standard_normal()).collect(), 0.0))
            }
        };
        let inner = MlpVae::new(&Architecture::new(input, hidden.to_vec(), latent).with_output(n), rng)?;
        Self::from_parts(table.table().clone(), table.source(), mode, reduction, inner)
    }

    pub fn from_parts(
        embeddings: Matrix,
        source: FeatureSet,
        mode: AssemblyMode,
        reduction: Option<DenseReduction>,
        inner: MlpVae,
    ) -> Result<Self> {
        let n = embeddings.rows();
        let e = embeddings.cols();
        let expected_input = match mode {
            AssemblyMode::Flatten => n * e,
            AssemblyMode::DenseReduce => n,
        };
        if inner.input_dim() != expected_input || inner.output_dim() != n {
            return Err(Error::Invalid(alloc::format!(
                "inner model {}→{} does not fit {n} movies × {e} dims in {} mode",
                inner.input_dim(),
                inner.output_dim(),
                mode.name()
            )));
        }
        match (&reduction, mode) {
            (None, AssemblyMode::Flatten) => {}
            (Some(r), AssemblyMode::DenseReduce) if r.weight.len() == e && r.bias.len() == 1 => {}
            _ => return Err(Error::Invalid("reduction weights inconsistent with assembly mode".into())),
        }
        Ok(Self {
            embeddings,
            source,
            mode,
            reduction,
            inner,
            freeze_embeddings: false,
        })
    }

    pub fn n_movies(&self) -> usize {
        self.embeddings.rows()
    }

    pub fn embedding_dim(&self) -> usize {
        self.embeddings.cols()
    }

    pub fn embedding_table(&self) -> MovieEmbeddingTable {
        MovieEmbeddingTable::new(self.source, self.embeddings.clone()).expect("finite trained table")
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            embeddings: Matrix::zeros(self.embeddings.rows(), self.embeddings.cols()),
            source: self.source,
            mode: self.mode,
            reduction: self.reduction.as_ref().map(|r| DenseReduction::zeros(r.weight.len())),
            inner: self.inner.zeros_like(),
            freeze_embeddings: self.freeze_embeddings,
        }
    }

    /// Encoder input for a batch of (possibly masked) click rows.
    pub fn encoder_input(&self, clicks: &Matrix) -> Result<Matrix> {
        let n = self.n_movies();
        let e = self.embedding_dim();
        if clicks.cols() != n {
            return Err(Error::Dimension {
                op: "encoder_input",
                left: clicks.shape(),
                right: self.embeddings.shape(),
            });
        }
        match self.mode {
            AssemblyMode::Flatten => {
                let mut out = Matrix::zeros(clicks.rows(), n * e);
                for b in 0..clicks.rows() {
                    let row = out.row_mut(b);
                    for (i, &x) in clicks.row(b).iter().enumerate() {
                        if x != 0.0 {
                            for (o, &t) in row[i * e..(i + 1) * e].iter_mut().zip(self.embeddings.row(i)) {
                                *o = x * t;
                            }
                        }
                    }
                }
                Ok(out)
            }
            AssemblyMode::DenseReduce => {
                let r = self.reduction.as_ref().expect("validated at construction");
                let projected: Vec<f64> = self.embeddings.row_iter().map(|t| dot(t, &r.weight)).collect();
                let mut out = Matrix::filled(clicks.rows(), n, r.bias[0]);
                for b in 0..clicks.rows() {
                    for (i, (&x, o)) in clicks.row(b).iter().zip(out.row_mut(b)).enumerate() {
                        *o += x * projected[i];
                    }
                }
                Ok(out)
            }
        }
    }

    pub fn forward(&self, clicks: &Matrix, noise: Noise<'_>) -> Result<ForwardTrace> {
        self.inner.forward(&self.encoder_input(clicks)?, noise)
    }

    pub fn predict(&self, clicks: &Matrix) -> Result<Matrix> {
        Ok(self.forward(clicks, Noise::Off)?.probs)
    }

    /// Loss against the click rows themselves, never the embedding input.
    pub fn loss(&self, clicks: &Matrix, trace: &ForwardTrace, beta: f64) -> Result<LossBreakdown> {
        loss(clicks, trace, beta)
    }

    /// Gradients of the loss w.r.t. the inner VAE, the embedding table and
    /// the reduction weights. `input` gates the assembly, `target` is the
    /// reconstruction target (the same matrix during training).
    pub fn backward(&self, input: &Matrix, target: &Matrix, trace: &ForwardTrace, beta: f64) -> Result<HybridVae> {
        let (inner, d_input) = self.inner.backward(target, trace, beta, true)?;
        let d_input = d_input.expect("input gradient requested");
        let mut grads = self.zeros_like();
        grads.inner = inner;
        let e = self.embedding_dim();
        match self.mode {
            AssemblyMode::Flatten => {
                if !self.freeze_embeddings {
                    for b in 0..input.rows() {
                        let g = d_input.row(b);
                        for (i, &x) in input.row(b).iter().enumerate() {
                            if x != 0.0 {
                                for (d, &gi) in grads.embeddings.row_mut(i).iter_mut().zip(&g[i * e..(i + 1) * e]) {
                                    *d += x * gi;
                                }
                            }
                        }
                    }
                }
            }
            AssemblyMode::DenseReduce => {
                let r = self.reduction.as_ref().expect("validated at construction");
                let mut dw = vec![0.0; e];
                let mut db = 0.0;
                // per-movie Σ_b x_bi · g_bi
                let mut gated = vec![0.0; self.n_movies()];
                for b in 0..input.rows() {
                    for (i, (&x, &g)) in input.row(b).iter().zip(d_input.row(b)).enumerate() {
                        db += g;
                        gated[i] += x * g;
                    }
                }
                for (i, &gi) in gated.iter().enumerate() {
                    if gi == 0.0 {
                        continue;
                    }
                    for (d, &t) in dw.iter_mut().zip(self.embeddings.row(i)) {
                        *d += gi * t;
                    }
                    if !self.freeze_embeddings {
                        for (d, &w) in grads.embeddings.row_mut(i).iter_mut().zip(&r.weight) {
                            *d += gi * w;
                        }
                    }
                }
                grads.reduction = Some(DenseReduction::new(dw, db));
            }
        }
        Ok(grads)
    }
}

impl Parameters for HybridVae {
    fn param_slices(&self) -> Vec<&[f64]> {
        let mut out = vec![self.embeddings.as_slice()];
        if let Some(r) = &self.reduction {
            out.push(&r.weight);
            out.push(&r.bias);
        }
        out.extend(self.inner.param_slices());
        out
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = vec![self.embeddings.as_mut_slice()];
        if let Some(r) = &mut self.reduction {
            out.push(&mut r.weight);
            out.push(&mut r.bias);
        }
        out.extend(self.inner.param_slices_mut());
        out
    }
}

impl VaeObjective for HybridVae {
    fn latent_dim(&self) -> usize {
        self.inner.latent_dim()
    }

    fn loss_and_grad(&self, batch: &Matrix, noise: Noise<'_>, beta: f64) -> Result<(LossBreakdown, Self)> {
        let trace = self.forward(batch, noise)?;
        let terms = self.loss(batch, &trace, beta)?;
        let grads = self.backward(batch, batch, &trace, beta)?;
        Ok((terms, grads))
    }
}

/// Result of [`train_hvae`]: the trained model plus the embedding table as it
/// was before training.
#[derive(Debug, Clone)]
pub struct HybridTraining {
    pub model: HybridVae,
    pub initial_embeddings: MovieEmbeddingTable,
    pub history: Vec<EpochLog>,
}

/// Trains a hybrid model on click rows; weights come from the `"init"`
/// substream of `cfg.seed`.
pub fn train_hvae(
    clicks: &crate::dataset::BinaryClickMatrix,
    table: &MovieEmbeddingTable,
    mode: AssemblyMode,
    hidden: &[usize],
    latent: usize,
    freeze_embeddings: bool,
    cfg: &TrainConfig,
) -> Result<HybridTraining> {
    if table.n_movies() != clicks.n_movies() {
        return Err(Error::Invalid(alloc::format!(
            "embedding table has {} rows but the click matrix has {} movies",
            table.n_movies(),
            clicks.n_movies()
        )));
    }
    let mut model = HybridVae::new(table, mode, hidden, latent, &mut RngStream::substream(cfg.seed, "init"))?;
    model.freeze_embeddings = freeze_embeddings;
    let history = crate::vae::train(&mut model, clicks, cfg)?;
    Ok(HybridTraining {
        model,
        initial_embeddings: table.clone(),
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ndmath::finite_diff_grad;

    fn table(rows: &[[f64; 3]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn assembly_gating() {
        let t = table(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0], [7.0, 8.0, 9.0]]);
        let zero = assemble_embedding_input(&[0.0, 0.0, 0.0], &t).unwrap();
        assert!(zero.as_slice().iter().all(|&v| v == 0.0));
        let first = assemble_embedding_input(&[1.0, 0.0, 0.0], &t).unwrap();
        assert_eq!(first.row(0), t.row(0));
        assert!(first.as_slice()[3..].iter().all(|&v| v == 0.0));
        assert_eq!(assemble_embedding_input(&[1.0, 1.0, 1.0], &t).unwrap(), t);
        assert!(assemble_embedding_input(&[1.0], &t).is_err());
    }

    #[test]
    fn reduce_modes() {
        let a = table(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]);
        assert_eq!(reduce(&a, AssemblyMode::Flatten, None).unwrap(), [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let w = DenseReduction::new(vec![1.0, 1.0, 1.0], 0.0);
        assert_eq!(reduce(&a, AssemblyMode::DenseReduce, Some(&w)).unwrap(), [6.0, 15.0]);
        let z = Matrix::zeros(2, 3);
        assert_eq!(reduce(&z, AssemblyMode::Flatten, None).unwrap(), [0.0; 6]);
        assert_eq!(reduce(&z, AssemblyMode::DenseReduce, Some(&w)).unwrap(), [0.0; 2]);
        assert!(reduce(&a, AssemblyMode::Flatten, Some(&w)).is_err());
        assert!(reduce(&a, AssemblyMode::DenseReduce, None).is_err());
    }

    #[test]
    fn flatten_round_trips() {
        let a = table(&[[1.0, -2.0, 3.5], [0.0, 5.0, 6.0]]);
        let flat = reduce(&a, AssemblyMode::Flatten, None).unwrap();
        assert_eq!(unflatten(&flat, 2, 3).unwrap(), a);
    }

    fn model(mode: AssemblyMode, n: usize, e: usize, seed: u64) -> HybridVae {
        let mut rng = RngStream::new(seed);
        let data = (0..n * e).map(|_| rng.standard_normal()).collect();
        let t = MovieEmbeddingTable::new(FeatureSet::Random, Matrix::from_vec(n, e, data).unwrap()).unwrap();
        let mut m = HybridVae::new(&t, mode, &[5], 2, &mut rng).unwrap();
        if let Some(r) = &mut m.reduction {
            r.bias[0] = 0.3;
        }
        m
    }

    fn clicks(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn encoder_input_matches_assemble_then_reduce() {
        for mode in [AssemblyMode::Flatten, AssemblyMode::DenseReduce] {
            let m = model(mode, 4, 2, 1);
            let x = clicks(&[&[1.0, 0.0, 1.0, 1.0], &[0.0, 1.0, 0.0, 0.0]]);
            let batch = m.encoder_input(&x).unwrap();
            for b in 0..2 {
                let a = assemble_embedding_input(x.row(b), &m.embeddings).unwrap();
                assert_eq!(batch.row(b), reduce(&a, mode, m.reduction.as_ref()).unwrap().as_slice());
            }
            let out = m.predict(&x).unwrap();
            assert_eq!(out.cols(), 4);
        }
    }

    #[test]
    fn zero_clicks_show_the_encoder_zero() {
        let mut m = model(AssemblyMode::DenseReduce, 4, 2, 2);
        m.reduction.as_mut().unwrap().bias[0] = 0.0;
        let input = m.encoder_input(&Matrix::zeros(1, 4)).unwrap();
        assert!(input.as_slice().iter().all(|&v| v == 0.0));
    }

    fn fd_check(m: &HybridVae, x: &Matrix, eps: &Matrix, beta: f64) {
        let trace = m.forward(x, Noise::Fixed(eps)).unwrap();
        let analytic = m.backward(x, x, &trace, beta).unwrap().flat_params();
        let mut probe = m.clone();
        let numeric = finite_diff_grad(
            |p| {
                probe.set_flat_params(p);
                let t = probe.forward(x, Noise::Fixed(eps)).unwrap();
                probe.loss(x, &t, beta).unwrap().total
            },
            &m.flat_params(),
            1e-5,
        )
        .unwrap();
        for (i, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
            let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-6);
            assert!(rel < 1e-4, "{:?} param {i}: analytic {a} numeric {n}", m.mode);
        }
    }

    #[test]
    fn gradients_reach_embeddings_and_reduction() {
        let x = clicks(&[&[1.0, 0.0, 1.0, 1.0], &[0.0, 1.0, 1.0, 0.0], &[1.0, 1.0, 0.0, 0.0]]);
        let eps = Matrix::from_vec(3, 2, vec![0.5, -0.3, 1.1, 0.2, -0.8, 0.4]).unwrap();
        for mode in [AssemblyMode::Flatten, AssemblyMode::DenseReduce] {
            let m = model(mode, 4, 2, 5);
            fd_check(&m, &x, &eps, 0.0);
            fd_check(&m, &x, &eps, 0.6);
        }
    }

    #[test]
    fn frozen_embeddings_get_no_gradient() {
        let mut m = model(AssemblyMode::Flatten, 4, 2, 6);
        m.freeze_embeddings = true;
        let x = clicks(&[&[1.0, 1.0, 0.0, 1.0]]);
        let trace = m.forward(&x, Noise::Off).unwrap();
        let g = m.backward(&x, &x, &trace, 0.2).unwrap();
        assert!(g.embeddings.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn loss_delegates_to_vae_loss() {
        let m = model(AssemblyMode::Flatten, 4, 2, 7);
        let x = clicks(&[&[1.0, 0.0, 0.0, 1.0]]);
        let trace = m.forward(&x, Noise::Off).unwrap();
        assert_eq!(m.loss(&x, &trace, 0.4).unwrap(), loss(&x, &trace, 0.4).unwrap());
    }

    #[test]
    fn inconsistent_parts_are_rejected() {
        let m = model(AssemblyMode::Flatten, 4, 2, 8);
        let err = HybridVae::from_parts(
            m.embeddings.clone(),
            m.source,
            AssemblyMode::DenseReduce,
            Some(DenseReduction::zeros(2)),
            m.inner.clone(),
        );
        assert!(err.is_err());
    }
}
