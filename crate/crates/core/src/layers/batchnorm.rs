use serde::Serialize;

use crate::error::{config_err, shape_err, Error, Result};
use crate::numerics::Tensor;

/// Momentum applied to running statistics in train mode.
pub const RUNNING_MOMENTUM: f64 = 0.1;

/// Per-channel batch normalization over axis 1 of `[B, C]` or `[B, C, H, W]`.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormLayer {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub eps: f64,
}

#[derive(Clone, Copy)]
struct Channels {
    channels: usize,
    /// Elements per channel per sample.
    spatial: usize,
    batch: usize,
}

impl BatchNormLayer {
    /// Identity-initialised layer: `γ = 1`, `β = 0`, `μ = 0`, `σ² = 1`.
    pub fn new(channels: usize, eps: f64) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(config_err!("batch norm epsilon must be positive, got {eps}"));
        }
        Ok(BatchNormLayer {
            gamma: Tensor::full(vec![channels], 1.0),
            beta: Tensor::zeros(vec![channels]),
            running_mean: Tensor::zeros(vec![channels]),
            running_var: Tensor::full(vec![channels], 1.0),
            eps,
        })
    }

    pub fn with_stats(gamma: Vec<f64>, beta: Vec<f64>, mean: Vec<f64>, var: Vec<f64>, eps: f64) -> Result<Self> {
        let c = gamma.len();
        if beta.len() != c || mean.len() != c || var.len() != c {
            return Err(shape_err!("batch norm parameters must all have {c} channels"));
        }
        if var.iter().any(|&v| v < 0.0) {
            return Err(config_err!("running variance must be nonnegative"));
        }
        let mut bn = BatchNormLayer::new(c, eps)?;
        bn.gamma = Tensor::vector(gamma);
        bn.beta = Tensor::vector(beta);
        bn.running_mean = Tensor::vector(mean);
        bn.running_var = Tensor::vector(var);
        Ok(bn)
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    fn layout(&self, x: &Tensor) -> Result<Channels> {
        if x.rank() < 2 || x.dims()[1] != self.channels() {
            return Err(shape_err!("batch norm over {} channels got {}", self.channels(), x.shape()));
        }
        Ok(Channels { channels: self.channels(), spatial: x.dims()[2..].iter().product(), batch: x.dims()[0] })
    }

    fn for_channel(l: Channels, data: &[f64], c: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (cs, sp) = (l.channels, l.spatial);
        (0..l.batch).flat_map(move |b| {
            let base = (b * cs + c) * sp;
            (base..base + sp).map(move |i| (i, data[i]))
        })
    }

    /// Biased per-channel mean and variance of a batch.
    pub fn batch_stats(&self, x: &Tensor) -> Result<(Vec<f64>, Vec<f64>)> {
        let l = self.layout(x)?;
        let n = (l.batch * l.spatial) as f64;
        if n == 0.0 {
            return Err(shape_err!("batch statistics need a non-empty batch"));
        }
        let mut means = Vec::with_capacity(l.channels);
        let mut vars = Vec::with_capacity(l.channels);
        for c in 0..l.channels {
            let mean = Self::for_channel(l, x.data(), c).map(|(_, v)| v).sum::<f64>() / n;
            let var = Self::for_channel(l, x.data(), c).map(|(_, v)| (v - mean).powi(2)).sum::<f64>() / n;
            means.push(mean);
            vars.push(var);
        }
        Ok((means, vars))
    }

    fn stats(&self, x: &Tensor, train: bool) -> Result<(Vec<f64>, Vec<f64>)> {
        if train {
            self.batch_stats(x)
        } else {
            Ok((self.running_mean.data().to_vec(), self.running_var.data().to_vec()))
        }
    }

    pub fn forward(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        let l = self.layout(x)?;
        let (mean, var) = self.stats(x, train)?;
        let mut out = x.clone();
        let data = out.data_mut();
        for c in 0..l.channels {
            let inv = 1.0 / (var[c] + self.eps).sqrt();
            let (g, b) = (self.gamma.data()[c], self.beta.data()[c]);
            for bi in 0..l.batch {
                let base = (bi * l.channels + c) * l.spatial;
                for v in &mut data[base..base + l.spatial] {
                    *v = g * ((*v - mean[c]) * inv) + b;
                }
            }
        }
        Ok(out)
    }

    /// Returns `(d input, [d gamma, d beta])`.
    pub fn backward(&self, x: &Tensor, upstream: &Tensor, train: bool) -> Result<(Tensor, Vec<Tensor>)> {
        let l = self.layout(x)?;
        if upstream.shape() != x.shape() {
            return Err(shape_err!("batch norm upstream {} vs input {}", upstream.shape(), x.shape()));
        }
        let (mean, var) = self.stats(x, train)?;
        let n = (l.batch * l.spatial) as f64;
        let up = upstream.data();
        let mut dx = vec![0.0; x.len()];
        let mut dgamma = vec![0.0; l.channels];
        let mut dbeta = vec![0.0; l.channels];
        for c in 0..l.channels {
            let inv = 1.0 / (var[c] + self.eps).sqrt();
            let g = self.gamma.data()[c];
            let mut sum_g = 0.0;
            let mut sum_gx = 0.0;
            for (i, v) in Self::for_channel(l, x.data(), c) {
                let xhat = (v - mean[c]) * inv;
                sum_g += up[i];
                sum_gx += up[i] * xhat;
            }
            dgamma[c] = sum_gx;
            dbeta[c] = sum_g;
            for (i, v) in Self::for_channel(l, x.data(), c) {
                dx[i] = if train {
                    let xhat = (v - mean[c]) * inv;
                    g * inv * (up[i] - sum_g / n - xhat * sum_gx / n)
                } else {
                    g * inv * up[i]
                };
            }
        }
        Ok((Tensor::new(x.dims().to_vec(), dx)?, vec![Tensor::vector(dgamma), Tensor::vector(dbeta)]))
    }

    /// Folds one training batch into the running statistics.
    pub fn absorb_batch(&mut self, x: &Tensor) -> Result<()> {
        let (mean, var) = self.batch_stats(x)?;
        for c in 0..self.channels() {
            let rm = &mut self.running_mean.data_mut()[c];
            *rm = (1.0 - RUNNING_MOMENTUM) * *rm + RUNNING_MOMENTUM * mean[c];
            let rv = &mut self.running_var.data_mut()[c];
            *rv = (1.0 - RUNNING_MOMENTUM) * *rv + RUNNING_MOMENTUM * var[c];
        }
        Ok(())
    }
}

/// Both sides of the scaled-input comparison for one batch-norm layer.
#[derive(Clone, Debug, Serialize)]
pub struct BnWitness {
    pub scalar: f64,
    /// `bn(s·x)`
    pub scaled_input: Vec<f64>,
    /// `s·bn(x)`
    pub scaled_output: Vec<f64>,
    pub max_abs_difference: f64,
}

/// Smallest difference accepted as a genuine violation of `bn(s·x) = s·bn(x)`.
pub const WITNESS_THRESHOLD: f64 = 1e-6;

/// Evaluates eval-mode `bn(s·x)` against `s·bn(x)`.
///
/// Fails with [`Error::DegenerateWitness`] when the two agree to within
/// [`WITNESS_THRESHOLD`], e.g. for `μ = β = 0` or `s = 1`.
pub fn bn_scalar_break_witness(layer: &BatchNormLayer, x: &Tensor, s: f64) -> Result<BnWitness> {
    if !(s > 0.0) {
        return Err(config_err!("scalar must be positive, got {s}"));
    }
    let lhs = layer.forward(&x.scale(s), false)?;
    let rhs = layer.forward(x, false)?.scale(s);
    let diff = lhs.max_abs_diff(&rhs)?;
    if !(diff > WITNESS_THRESHOLD) {
        return Err(Error::DegenerateWitness(format!(
            "bn(s·x) and s·bn(x) differ by only {diff:e} at s = {s}"
        )));
    }
    Ok(BnWitness {
        scalar: s,
        scaled_input: lhs.into_data(),
        scaled_output: rhs.into_data(),
        max_abs_difference: diff,
    })
}
