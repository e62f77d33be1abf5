//! The MLP variational autoencoder shared by every model.
//!
//! Encoder: `N → hidden… → 2K` (mean and log-variance halves), tanh on hidden
//! layers, linear output. Decoder: `K → reversed hidden… → N` logits. The
//! loss is the batch-mean negative ELBO with a Bernoulli likelihood,
//! `-log p(x|z) + β·KL(q(z|x) ‖ N(0, I))`, and gradients are derived by hand.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::ndmath::{affine, log_sigmoid, sigmoid, Matrix, RngStream};
use crate::optim::{Adam, AdamConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
}

impl Activation {
    pub fn tag(self) -> u8 {
        match self {
            Activation::Tanh => 0,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        (tag == 0).then_some(Activation::Tanh)
    }
}

/// Layer sizes of an [`MlpVae`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub latent: usize,
    /// Decoder width; equals `input` except in the hybrid model.
    pub output: usize,
}

impl Architecture {
    pub fn new(input: usize, hidden: Vec<usize>, latent: usize) -> Self {
        Self {
            input,
            hidden,
            latent,
            output: input,
        }
    }

    pub fn with_output(mut self, output: usize) -> Self {
        self.output = output;
        self
    }

    /// `(fan_in, fan_out)` of every encoder layer.
    fn encoder_shapes(&self) -> Vec<(usize, usize)> {
        let mut dims = vec![self.input];
        dims.extend(&self.hidden);
        dims.push(2 * self.latent);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }

    fn decoder_shapes(&self) -> Vec<(usize, usize)> {
        let mut dims = vec![self.latent];
        dims.extend(self.hidden.iter().rev());
        dims.push(self.output);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }

    fn validate(&self) -> Result<()> {
        if self.input == 0 || self.output == 0 || self.latent == 0 || self.hidden.contains(&0) {
            return Err(Error::Invalid(format!("layer sizes must be positive: {self:?}")));
        }
        Ok(())
    }
}

/// Fully connected layer `x · W + b`, `W` stored as fan_in × fan_out.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: Matrix::zeros(fan_in, fan_out),
            bias: vec![0.0; fan_out],
        }
    }

    /// Glorot-normal weights, zero bias.
    pub fn glorot(fan_in: usize, fan_out: usize, rng: &mut RngStream) -> Self {
        let std = libm::sqrt(2.0 / (fan_in + fan_out) as f64);
        let data = (0..fan_in * fan_out).map(|_| std * rng.standard_normal()).collect();
        Self {
            weight: Matrix::from_vec(fan_in, fan_out, data).expect("sized above"),
            bias: vec![0.0; fan_out],
        }
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        affine(x, &self.weight, &self.bias)
    }
}

/// Flat access to trainable parameters in declaration order.
pub trait Parameters {
    fn param_slices(&self) -> Vec<&[f64]>;
    fn param_slices_mut(&mut self) -> Vec<&mut [f64]>;

    fn n_params(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }

    fn flat_params(&self) -> Vec<f64> {
        self.param_slices().concat()
    }

    fn set_flat_params(&mut self, flat: &[f64]) {
        let mut offset = 0;
        for slice in self.param_slices_mut() {
            slice.copy_from_slice(&flat[offset..offset + slice.len()]);
            offset += slice.len();
        }
        assert_eq!(offset, flat.len(), "parameter vector length mismatch");
    }
}

/// Source of the reparameterization noise ε.
pub enum Noise<'a> {
    /// Evaluation mode: ε = 0, so z = m.
    Off,
    /// Caller-supplied ε (B × K).
    Fixed(&'a Matrix),
    /// Fresh N(0, 1) draws.
    Sample(&'a mut RngStream),
}

impl Noise<'_> {
    fn draw(self, rows: usize, cols: usize) -> Result<Option<Matrix>> {
        match self {
            Noise::Off => Ok(None),
            Noise::Fixed(eps) => {
                if eps.shape() != (rows, cols) {
                    return Err(Error::Dimension {
                        op: "noise",
                        left: (rows, cols),
                        right: eps.shape(),
                    });
                }
                Ok(Some(eps.clone()))
            }
            Noise::Sample(rng) => {
                let data = (0..rows * cols).map(|_| rng.standard_normal()).collect();
                Ok(Some(Matrix::from_vec(rows, cols, data)?))
            }
        }
    }
}

/// Cached quantities from one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// Input of every encoder layer; `encoder_inputs[0]` is the model input.
    pub encoder_inputs: Vec<Matrix>,
    pub mean: Matrix,
    pub logvar: Matrix,
    /// `None` in evaluation mode.
    pub eps: Option<Matrix>,
    /// Input of every decoder layer; `decoder_inputs[0]` is z.
    pub decoder_inputs: Vec<Matrix>,
    pub logits: Matrix,
    pub probs: Matrix,
}

impl ForwardTrace {
    pub fn z(&self) -> &Matrix {
        &self.decoder_inputs[0]
    }
}

/// Batch-mean loss terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub neg_log_likelihood: f64,
    pub kl: f64,
    pub beta: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        self.neg_log_likelihood.is_finite() && self.kl.is_finite() && self.total.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpVae {
    pub encoder: Vec<Dense>,
    pub decoder: Vec<Dense>,
    pub activation: Activation,
    latent: usize,
}

impl MlpVae {
    /// Glorot-initialised model.
    pub fn new(arch: &Architecture, rng: &mut RngStream) -> Result<Self> {
        arch.validate()?;
        let encoder = arch.encoder_shapes().into_iter().map(|(i, o)| Dense::glorot(i, o, rng)).collect();
        let decoder = arch.decoder_shapes().into_iter().map(|(i, o)| Dense::glorot(i, o, rng)).collect();
        Ok(Self {
            encoder,
            decoder,
            activation: Activation::Tanh,
            latent: arch.latent,
        })
    }

    pub fn zeros(arch: &Architecture) -> Result<Self> {
        arch.validate()?;
        Ok(Self {
            encoder: arch.encoder_shapes().into_iter().map(|(i, o)| Dense::zeros(i, o)).collect(),
            decoder: arch.decoder_shapes().into_iter().map(|(i, o)| Dense::zeros(i, o)).collect(),
            activation: Activation::Tanh,
            latent: arch.latent,
        })
    }

    /// Assembles a model from explicit layers, checking that they chain.
    pub fn from_layers(encoder: Vec<Dense>, decoder: Vec<Dense>, activation: Activation) -> Result<Self> {
        let model = Self {
            latent: decoder.first().map_or(0, |l| l.weight.rows()),
            encoder,
            decoder,
            activation,
        };
        let arch = model.architecture();
        let expected = Self::zeros(&arch)?;
        let shapes_match = |a: &[Dense], b: &[Dense]| {
            a.len() == b.len()
                && a.iter()
                    .zip(b)
                    .all(|(x, y)| x.weight.shape() == y.weight.shape() && x.bias.len() == y.bias.len())
        };
        if !shapes_match(&model.encoder, &expected.encoder) || !shapes_match(&model.decoder, &expected.decoder) {
            return Err(Error::Invalid("encoder and decoder layers do not form a VAE".into()));
        }
        Ok(model)
    }

    pub fn architecture(&self) -> Architecture {
        let input = self.encoder.first().map_or(0, |l| l.weight.rows());
        let hidden = self.encoder.iter().skip(1).map(|l| l.weight.rows()).collect();
        Architecture {
            input,
            hidden,
            latent: self.latent,
            output: self.decoder.last().map_or(0, |l| l.weight.cols()),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.encoder[0].weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.decoder.last().expect("decoder has layers").weight.cols()
    }

    pub fn latent_dim(&self) -> usize {
        self.latent
    }

    /// Same architecture, all parameters zero.
    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.architecture()).expect("architecture of a valid model")
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.input_dim() {
            return Err(Error::Dimension {
                op: "encode",
                left: x.shape(),
                right: self.encoder[0].weight.shape(),
            });
        }
        Ok(())
    }

    /// Runs the encoder, keeping every layer input.
    fn run_encoder(&self, x: &Matrix) -> Result<(Vec<Matrix>, Matrix, Matrix)> {
        self.check_input(x)?;
        let mut inputs = vec![x.clone()];
        let last = self.encoder.len() - 1;
        let mut out = Matrix::zeros(0, 0);
        for (l, layer) in self.encoder.iter().enumerate() {
            let pre = layer.forward(inputs.last().expect("non-empty"))?;
            if l < last {
                inputs.push(pre.map(libm::tanh));
            } else {
                out = pre;
            }
        }
        let k = self.latent;
        let b = out.rows();
        let mut mean = Matrix::zeros(b, k);
        let mut logvar = Matrix::zeros(b, k);
        for r in 0..b {
            let row = out.row(r);
            mean.row_mut(r).copy_from_slice(&row[..k]);
            logvar.row_mut(r).copy_from_slice(&row[k..]);
        }
        Ok((inputs, mean, logvar))
    }

    /// Posterior mean and log-variance.
    pub fn encode(&self, x: &Matrix) -> Result<(Matrix, Matrix)> {
        let (_, mean, logvar) = self.run_encoder(x)?;
        Ok((mean, logvar))
    }

    fn run_decoder(&self, z: &Matrix) -> Result<(Vec<Matrix>, Matrix)> {
        if z.cols() != self.latent {
            return Err(Error::Dimension {
                op: "decode",
                left: z.shape(),
                right: self.decoder[0].weight.shape(),
            });
        }
        let mut inputs = vec![z.clone()];
        let last = self.decoder.len() - 1;
        for (l, layer) in self.decoder.iter().enumerate() {
            let pre = layer.forward(inputs.last().expect("non-empty"))?;
            if l < last {
                inputs.push(pre.map(libm::tanh));
            } else {
                return Ok((inputs, pre));
            }
        }
        unreachable!("decoder has at least one layer")
    }

    /// Logits and probabilities.
    pub fn decode(&self, z: &Matrix) -> Result<(Matrix, Matrix)> {
        let (_, logits) = self.run_decoder(z)?;
        let probs = sigmoid(&logits);
        Ok((logits, probs))
    }

    pub fn forward(&self, x: &Matrix, noise: Noise<'_>) -> Result<ForwardTrace> {
        let (encoder_inputs, mean, logvar) = self.run_encoder(x)?;
        let eps = noise.draw(mean.rows(), mean.cols())?;
        let z = reparameterize(&mean, &logvar, eps.as_ref())?;
        let (decoder_inputs, logits) = self.run_decoder(&z)?;
        let probs = sigmoid(&logits);
        Ok(ForwardTrace {
            encoder_inputs,
            mean,
            logvar,
            eps,
            decoder_inputs,
            logits,
            probs,
        })
    }

    /// Evaluation-mode probabilities (z = m).
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.forward(x, Noise::Off)?.probs)
    }

    /// Gradients of [`loss`] w.r.t. every parameter, and optionally w.r.t.
    /// the encoder input. ε is treated as a constant.
    pub fn backward(
        &self,
        target: &Matrix,
        trace: &ForwardTrace,
        beta: f64,
        want_input_grad: bool,
    ) -> Result<(MlpVae, Option<Matrix>)> {
        if target.shape() != trace.logits.shape() {
            return Err(Error::Dimension {
                op: "backward",
                left: target.shape(),
                right: trace.logits.shape(),
            });
        }
        let batch = target.rows() as f64;
        let mut grads = self.zeros_like();

        // d(mean NLL)/d logits = (π − x) / B
        let mut delta = trace.probs.zip_map(target, |p, x| (p - x) / batch)?;
        for l in (0..self.decoder.len()).rev() {
            let input = &trace.decoder_inputs[l];
            grads.decoder[l].weight = input.t_matmul(&delta)?;
            grads.decoder[l].bias = delta.col_sums();
            let back = delta.matmul_t(&self.decoder[l].weight)?;
            delta = if l > 0 { back.zip_map(input, |g, a| g * (1.0 - a * a))? } else { back };
        }
        let dz = delta;

        let k = self.latent;
        let mut dout = Matrix::zeros(dz.rows(), 2 * k);
        for r in 0..dz.rows() {
            for c in 0..k {
                let m = trace.mean[(r, c)];
                let lv = trace.logvar[(r, c)];
                let g = dz[(r, c)];
                let reparam = trace.eps.as_ref().map_or(0.0, |e| 0.5 * libm::exp(0.5 * lv) * e[(r, c)]);
                dout[(r, c)] = g + beta * m / batch;
                dout[(r, k + c)] = g * reparam + beta * 0.5 * (libm::exp(lv) - 1.0) / batch;
            }
        }

        let mut delta = dout;
        let mut input_grad = None;
        for l in (0..self.encoder.len()).rev() {
            let input = &trace.encoder_inputs[l];
            grads.encoder[l].weight = input.t_matmul(&delta)?;
            grads.encoder[l].bias = delta.col_sums();
            if l > 0 {
                delta = delta.matmul_t(&self.encoder[l].weight)?.zip_map(input, |g, a| g * (1.0 - a * a))?;
            } else if want_input_grad {
                input_grad = Some(delta.matmul_t(&self.encoder[0].weight)?);
            }
        }
        Ok((grads, input_grad))
    }
}

impl Parameters for MlpVae {
    fn param_slices(&self) -> Vec<&[f64]> {
        self.encoder
            .iter()
            .chain(&self.decoder)
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
            .collect()
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.encoder
            .iter_mut()
            .chain(self.decoder.iter_mut())
            .flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }
}

/// `z = m + exp(logvar / 2) ⊙ ε`; `z = m` when `eps` is `None`.
pub fn reparameterize(mean: &Matrix, logvar: &Matrix, eps: Option<&Matrix>) -> Result<Matrix> {
    if mean.shape() != logvar.shape() {
        return Err(Error::Dimension {
            op: "reparameterize",
            left: mean.shape(),
            right: logvar.shape(),
        });
    }
    let Some(eps) = eps else {
        return Ok(mean.clone());
    };
    let std = logvar.map(|lv| libm::exp(0.5 * lv));
    let noise = std.zip_map(eps, |s, e| s * e)?;
    mean.zip_map(&noise, |m, n| m + n)
}

/// Per-row Bernoulli log-likelihood `Σ x log σ(f) + (1 − x) log(1 − σ(f))`,
/// evaluated on logits.
pub fn log_likelihood(x: &Matrix, logits: &Matrix) -> Result<Vec<f64>> {
    if x.shape() != logits.shape() {
        return Err(Error::Dimension {
            op: "log_likelihood",
            left: x.shape(),
            right: logits.shape(),
        });
    }
    Ok((0..x.rows())
        .map(|r| {
            x.row(r)
                .iter()
                .zip(logits.row(r))
                .map(|(&xi, &f)| xi * log_sigmoid(f) + (1.0 - xi) * log_sigmoid(-f))
                .sum()
        })
        .collect())
}

/// Per-row `KL(N(m, diag(exp(logvar))) ‖ N(0, I))`.
pub fn kl_divergence(mean: &Matrix, logvar: &Matrix) -> Result<Vec<f64>> {
    if mean.shape() != logvar.shape() {
        return Err(Error::Dimension {
            op: "kl_divergence",
            left: mean.shape(),
            right: logvar.shape(),
        });
    }
    Ok((0..mean.rows())
        .map(|r| {
            let s: f64 = mean
                .row(r)
                .iter()
                .zip(logvar.row(r))
                .map(|(&m, &lv)| 1.0 + lv - m * m - libm::exp(lv))
                .sum();
            -0.5 * s
        })
        .collect())
}

/// Batch-mean negative ELBO of a forward pass against `target`.
pub fn loss(target: &Matrix, trace: &ForwardTrace, beta: f64) -> Result<LossBreakdown> {
    let ll = log_likelihood(target, &trace.logits)?;
    let kl = kl_divergence(&trace.mean, &trace.logvar)?;
    let b = ll.len().max(1) as f64;
    let neg_log_likelihood = -ll.iter().sum::<f64>() / b;
    let kl = kl.iter().sum::<f64>() / b;
    Ok(LossBreakdown {
        neg_log_likelihood,
        kl,
        beta,
        total: neg_log_likelihood + beta * kl,
    })
}

/// A model trainable by [`train`]: one batch matrix serves as both input and
/// reconstruction target.
pub trait VaeObjective: Parameters + Sized {
    fn latent_dim(&self) -> usize;

    fn loss_and_grad(&self, batch: &Matrix, noise: Noise<'_>, beta: f64) -> Result<(LossBreakdown, Self)>;

    /// Called after every optimizer step.
    fn after_step(&mut self) {}
}

impl VaeObjective for MlpVae {
    fn latent_dim(&self) -> usize {
        self.latent
    }

    fn loss_and_grad(&self, batch: &Matrix, noise: Noise<'_>, beta: f64) -> Result<(LossBreakdown, Self)> {
        let trace = self.forward(batch, noise)?;
        let breakdown = loss(batch, &trace, beta)?;
        let (grads, _) = self.backward(batch, &trace, beta, false)?;
        Ok((breakdown, grads))
    }
}

/// Rows that can be gathered into dense minibatches.
pub trait RowSource {
    fn n_rows(&self) -> usize;
    fn n_cols(&self) -> usize;
    fn batch(&self, rows: &[usize]) -> Matrix;
}

impl RowSource for Matrix {
    fn n_rows(&self) -> usize {
        self.rows()
    }

    fn n_cols(&self) -> usize {
        self.cols()
    }

    fn batch(&self, rows: &[usize]) -> Matrix {
        self.select_rows(rows)
    }
}

impl RowSource for crate::dataset::BinaryClickMatrix {
    fn n_rows(&self) -> usize {
        self.n_users()
    }

    fn n_cols(&self) -> usize {
        self.n_movies()
    }

    fn batch(&self, rows: &[usize]) -> Matrix {
        self.dense_rows(rows)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Final KL weight.
    pub beta_max: f64,
    /// Share of all optimizer steps over which β rises linearly from 0.
    pub anneal_fraction: f64,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 500,
            epochs: 100,
            beta_max: 0.2,
            anneal_fraction: 0.2,
            seed: 0,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Invalid(format!("learning rate must be finite and non-negative, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::Invalid("batch size must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.anneal_fraction) || !(self.beta_max >= 0.0) {
            return Err(Error::Invalid("invalid KL annealing settings".into()));
        }
        Ok(())
    }

    /// KL weight at optimizer step `step` of `total_steps`.
    pub fn beta_at(&self, step: usize, total_steps: usize) -> f64 {
        let warmup = libm::floor(self.anneal_fraction * total_steps as f64) as usize;
        if warmup == 0 {
            self.beta_max
        } else {
            self.beta_max * (step as f64 / warmup as f64).min(1.0)
        }
    }
}

/// One row of the training log: batch-size-weighted epoch means.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub neg_log_likelihood: f64,
    pub kl: f64,
    pub beta: f64,
    pub total: f64,
}

/// Minibatch Adam on the negative ELBO with linear KL warm-up. The row
/// order of every epoch and all ε draws come from labeled substreams of
/// `cfg.seed`, so a run is reproducible bit for bit.
pub fn train<M, S>(model: &mut M, data: &S, cfg: &TrainConfig) -> Result<Vec<EpochLog>>
where
    M: VaeObjective,
    S: RowSource + ?Sized,
{
    cfg.validate()?;
    let n = data.n_rows();
    if n == 0 {
        return Err(Error::Size("no training rows".into()));
    }
    let batches_per_epoch = n.div_ceil(cfg.batch_size);
    let total_steps = batches_per_epoch * cfg.epochs;
    let mut shuffle_rng = RngStream::substream(cfg.seed, "epoch-shuffle");
    let mut eps_rng = RngStream::substream(cfg.seed, "epsilon");
    let mut adam = Adam::new(cfg.adam, &model.param_slices());
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        shuffle_rng.shuffle(&mut order);
        let mut sums = [0.0f64; 3];
        let mut beta = 0.0;
        for (b, rows) in order.chunks(cfg.batch_size).enumerate() {
            beta = cfg.beta_at(step, total_steps);
            let batch = data.batch(rows);
            let (terms, grads) = model.loss_and_grad(&batch, Noise::Sample(&mut eps_rng), beta)?;
            if !terms.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: b,
                    neg_log_likelihood: terms.neg_log_likelihood,
                    kl: terms.kl,
                    beta,
                });
            }
            let w = rows.len() as f64;
            sums[0] += w * terms.neg_log_likelihood;
            sums[1] += w * terms.kl;
            sums[2] += w * terms.total;
            adam.step(cfg.learning_rate, &mut model.param_slices_mut(), &grads.param_slices());
            model.after_step();
            step += 1;
        }
        let n = n as f64;
        history.push(EpochLog {
            epoch,
            neg_log_likelihood: sums[0] / n,
            kl: sums[1] / n,
            beta,
            total: sums[2] / n,
        });
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ndmath::finite_diff_grad;

    fn tiny(seed: u64) -> MlpVae {
        MlpVae::new(&Architecture::new(6, vec![5], 2), &mut RngStream::new(seed)).unwrap()
    }

    fn binary_batch(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = RngStream::new(seed);
        let data = (0..rows * cols).map(|_| if rng.next_f64() < 0.4 { 1.0 } else { 0.0 }).collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    #[test]
    fn zero_network_encodes_to_prior() {
        let model = MlpVae::zeros(&Architecture::new(4, vec![3], 2)).unwrap();
        let (m, lv) = model.encode(&binary_batch(3, 4, 1)).unwrap();
        assert!(m.as_slice().iter().all(|&v| v == 0.0));
        assert!(lv.as_slice().iter().all(|&v| v == 0.0));
        let (f, p) = model.decode(&m).unwrap();
        assert!(f.as_slice().iter().all(|&v| v == 0.0));
        assert!(p.as_slice().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn hand_set_encoder() {
        // 4 -> 3 (tanh) -> 2K with K = 1
        let mut w1 = Matrix::zeros(4, 3);
        w1[(0, 0)] = 1.0;
        w1[(1, 1)] = 1.0;
        w1[(2, 2)] = -1.0;
        w1[(3, 0)] = 0.5;
        let l1 = Dense {
            weight: w1,
            bias: vec![0.0, 0.5, 0.0],
        };
        let l2 = Dense {
            weight: Matrix::from_rows(&[[1.0, 0.0], [1.0, 0.0], [0.0, 2.0]]).unwrap(),
            bias: vec![0.1, -0.2],
        };
        let dec = vec![Dense::zeros(1, 3), Dense::zeros(3, 4)];
        let model = MlpVae::from_layers(vec![l1, l2], dec, Activation::Tanh).unwrap();
        let x = Matrix::from_rows(&[[1.0, 0.0, 1.0, 1.0]]).unwrap();
        let (m, lv) = model.encode(&x).unwrap();
        // hidden = tanh([1.5, 0.5, -1])
        let h = [libm::tanh(1.5), libm::tanh(0.5), libm::tanh(-1.0)];
        assert!((m[(0, 0)] - (h[0] + h[1] + 0.1)).abs() < 1e-15);
        assert!((lv[(0, 0)] - (2.0 * h[2] - 0.2)).abs() < 1e-15);
    }

    #[test]
    fn identical_rows_identical_outputs() {
        let model = tiny(3);
        let row = [1.0, 0.0, 1.0, 0.0, 0.0, 1.0];
        let (m, lv) = model.encode(&Matrix::from_rows(&[row, row, row]).unwrap()).unwrap();
        assert_eq!(m.row(0), m.row(2));
        assert_eq!(lv.row(1), lv.row(2));
    }

    #[test]
    fn hand_set_decoder() {
        let dec = Dense {
            weight: Matrix::from_rows(&[[1.0, -1.0, 0.0], [2.0, 0.0, 1.0]]).unwrap(),
            bias: vec![0.0, 0.5, -0.5],
        };
        let enc = vec![Dense::zeros(3, 4)];
        let model = MlpVae::from_layers(enc, vec![dec], Activation::Tanh).unwrap();
        let (f, p) = model.decode(&Matrix::from_rows(&[[0.5, -0.25]]).unwrap()).unwrap();
        assert_eq!(f.as_slice(), &[0.0, 0.0, -0.75]);
        assert_eq!(p[(0, 0)], 0.5);
        assert!((p[(0, 2)] - 1.0 / (1.0 + libm::exp(0.75))).abs() < 1e-15);
    }

    #[test]
    fn decode_permutes_with_batch() {
        let model = tiny(4);
        let z = Matrix::from_rows(&[[0.1, 0.2], [-1.0, 0.3], [2.0, 0.0]]).unwrap();
        let zp = z.select_rows(&[2, 0, 1]);
        let (_, p) = model.decode(&z).unwrap();
        let (_, pp) = model.decode(&zp).unwrap();
        assert_eq!(pp, p.select_rows(&[2, 0, 1]));
    }

    #[test]
    fn reparameterize_cases() {
        let m = Matrix::from_rows(&[[0.5, -1.0]]).unwrap();
        let lv = Matrix::zeros(1, 2);
        assert_eq!(reparameterize(&m, &lv, None).unwrap(), m);
        let ones = Matrix::filled(1, 2, 1.0);
        assert_eq!(reparameterize(&m, &lv, Some(&ones)).unwrap().as_slice(), &[1.5, 0.0]);
    }

    #[test]
    fn reparameterize_monte_carlo_moments() {
        let n = 100_000;
        let (m0, lv0) = (0.7, libm::log(2.5));
        let mean = Matrix::filled(n, 1, m0);
        let logvar = Matrix::filled(n, 1, lv0);
        let mut rng = RngStream::new(77);
        let eps = Matrix::from_vec(n, 1, crate::ndmath::sample_standard_normal(&mut rng, n)).unwrap();
        let z = reparameterize(&mean, &logvar, Some(&eps)).unwrap();
        let s = z.as_slice();
        let mu = s.iter().sum::<f64>() / n as f64;
        let var = s.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / (n - 1) as f64;
        assert!(((mu - m0) / m0).abs() < 0.02, "mean {mu}");
        assert!(((var - 2.5) / 2.5).abs() < 0.02, "var {var}");
    }

    #[test]
    fn log_likelihood_values() {
        let ll = log_likelihood(&Matrix::filled(1, 1, 1.0), &Matrix::zeros(1, 1)).unwrap();
        assert!((ll[0] + core::f64::consts::LN_2).abs() < 1e-15);
        let ll = log_likelihood(&Matrix::zeros(1, 1), &Matrix::filled(1, 1, -40.0)).unwrap();
        assert!(ll[0].is_finite() && ll[0].abs() < 1e-17);
        let ll = log_likelihood(&Matrix::from_rows(&[[1.0, 0.0]]).unwrap(), &Matrix::zeros(1, 2)).unwrap();
        assert!((ll[0] + 2.0 * core::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn kl_values() {
        let kl = kl_divergence(&Matrix::zeros(1, 3), &Matrix::zeros(1, 3)).unwrap();
        assert_eq!(kl[0], 0.0);
        let kl = kl_divergence(&Matrix::filled(1, 1, 1.0), &Matrix::zeros(1, 1)).unwrap();
        assert!((kl[0] - 0.5).abs() < 1e-12);
        let kl = kl_divergence(&Matrix::zeros(1, 1), &Matrix::filled(1, 1, core::f64::consts::LN_2)).unwrap();
        assert!((kl[0] - 0.5 * (2.0 - 1.0 - core::f64::consts::LN_2)).abs() < 1e-15);
        assert!((kl[0] - 0.153_426).abs() < 1e-6);
    }

    #[test]
    fn loss_terms_combine() {
        let model = tiny(5);
        let x = binary_batch(4, 6, 2);
        let trace = model.forward(&x, Noise::Off).unwrap();
        let l0 = loss(&x, &trace, 0.0).unwrap();
        assert_eq!(l0.total, l0.neg_log_likelihood);
        let l = loss(&x, &trace, 0.7).unwrap();
        assert!((l.total - (l.neg_log_likelihood + 0.7 * l.kl)).abs() < 1e-12);
        assert!(l.kl >= 0.0);

        let zero = MlpVae::zeros(&Architecture::new(6, vec![5], 2)).unwrap();
        let trace = zero.forward(&x, Noise::Off).unwrap();
        let l1 = loss(&x, &trace, 1.0).unwrap();
        assert_eq!(l1.total, l1.neg_log_likelihood);
    }

    fn fd_check(model: &MlpVae, x: &Matrix, eps: &Matrix, beta: f64) {
        let trace = model.forward(x, Noise::Fixed(eps)).unwrap();
        let (grads, _) = model.backward(x, &trace, beta, false).unwrap();
        let analytic = grads.flat_params();
        let mut probe = model.clone();
        let numeric = finite_diff_grad(
            |p| {
                probe.set_flat_params(p);
                let t = probe.forward(x, Noise::Fixed(eps)).unwrap();
                loss(x, &t, beta).unwrap().total
            },
            &model.flat_params(),
            1e-5,
        )
        .unwrap();
        for (i, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
            let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-6);
            assert!(rel < 1e-4, "param {i}: analytic {a} numeric {n}");
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let model = tiny(11);
        let x = binary_batch(3, 6, 12);
        let eps = Matrix::from_vec(3, 2, crate::ndmath::sample_standard_normal(&mut RngStream::new(13), 6)).unwrap();
        // likelihood only, KL only, and combined
        fd_check(&model, &x, &eps, 0.0);
        fd_check(&model, &x, &eps, 1.0);
        fd_check(&model, &x, &eps, 0.3);
    }

    #[test]
    fn gradients_match_with_two_hidden_layers() {
        let model = MlpVae::new(&Architecture::new(5, vec![4, 3], 2), &mut RngStream::new(21)).unwrap();
        let x = binary_batch(2, 5, 22);
        let eps = Matrix::from_vec(2, 2, vec![0.3, -1.2, 0.8, 0.1]).unwrap();
        fd_check(&model, &x, &eps, 0.5);
    }

    #[test]
    fn decoder_bias_gradient_is_half_on_zero_input() {
        let mut model = tiny(8);
        let last = model.decoder.len() - 1;
        model.decoder[last].bias.iter_mut().for_each(|b| *b = 0.0);
        model.decoder[last].weight = Matrix::zeros(5, 6);
        let x = Matrix::zeros(3, 6);
        let trace = model.forward(&x, Noise::Off).unwrap();
        let (grads, _) = model.backward(&x, &trace, 0.0, false).unwrap();
        assert!(grads.decoder[last].bias.iter().all(|&g| (g - 0.5).abs() < 1e-15));
    }

    #[test]
    fn duplicated_rows_average_out() {
        let model = tiny(9);
        let row = [1.0, 1.0, 0.0, 0.0, 1.0, 0.0];
        let single = Matrix::from_rows(&[row]).unwrap();
        let double = Matrix::from_rows(&[row, row]).unwrap();
        let e1 = Matrix::from_rows(&[[0.4, -0.6]]).unwrap();
        let e2 = Matrix::from_rows(&[[0.4, -0.6], [0.4, -0.6]]).unwrap();
        let (_, g1) = model.loss_and_grad(&single, Noise::Fixed(&e1), 0.5).unwrap();
        let (_, g2) = model.loss_and_grad(&double, Noise::Fixed(&e2), 0.5).unwrap();
        for (a, b) in g1.flat_params().iter().zip(g2.flat_params()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    fn planted_blocks(users: usize, movies: usize) -> Matrix {
        let mut x = Matrix::zeros(users, movies);
        for u in 0..users {
            let half = movies / 2;
            let offset = if u % 2 == 0 { 0 } else { half };
            for m in offset..offset + half {
                x[(u, m)] = 1.0;
            }
        }
        x
    }

    #[test]
    fn training_overfits_planted_blocks() {
        let data = planted_blocks(20, 10);
        let mut model = MlpVae::new(&Architecture::new(10, vec![8], 2), &mut RngStream::new(1)).unwrap();
        let cfg = TrainConfig {
            learning_rate: 1e-2,
            batch_size: 5,
            epochs: 200,
            seed: 3,
            ..TrainConfig::default()
        };
        let history = train(&mut model, &data, &cfg).unwrap();
        let first = history[0].total;
        let last = history.last().unwrap().total;
        assert!(last <= 0.5 * first, "loss {first} -> {last}");
        assert!(history.iter().all(|h| h.total.is_finite()));
    }

    #[test]
    fn training_is_deterministic_and_lr_zero_is_noop() {
        let data = planted_blocks(12, 8);
        let arch = Architecture::new(8, vec![6], 2);
        let cfg = TrainConfig {
            batch_size: 4,
            epochs: 5,
            seed: 17,
            ..TrainConfig::default()
        };
        let mut a = MlpVae::new(&arch, &mut RngStream::new(2)).unwrap();
        let mut b = a.clone();
        train(&mut a, &data, &cfg).unwrap();
        train(&mut b, &data, &cfg).unwrap();
        assert_eq!(a, b);

        let mut c = MlpVae::new(&arch, &mut RngStream::new(2)).unwrap();
        let before = c.clone();
        train(&mut c, &data, &TrainConfig { learning_rate: 0.0, ..cfg }).unwrap();
        assert_eq!(c, before);
    }

    #[test]
    fn divergence_is_reported() {
        let mut model = tiny(1);
        model.decoder[1].bias[0] = f64::NAN;
        let err = train(&mut model, &binary_batch(4, 6, 1), &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Diverged { epoch: 0, batch: 0, .. }));
    }

    #[test]
    fn beta_schedule_is_linear_then_flat() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.beta_at(0, 100), 0.0);
        assert!((cfg.beta_at(10, 100) - 0.1).abs() < 1e-15);
        assert_eq!(cfg.beta_at(50, 100), 0.2);
    }
}
