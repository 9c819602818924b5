//! Layer transforms with and without bias.
//!
//! Every layer consumes and produces batched tensors whose leading axis is the
//! batch. Backward passes are pure: they take the layer input that the forward
//! pass saw and recompute whatever intermediate values they need.

mod batchnorm;
mod conv;
mod init;
mod linear;
mod pool;
mod residual;
mod spec;

pub use batchnorm::{bn_scalar_break_witness, BatchNormLayer, BnWitness, RUNNING_MOMENTUM, WITNESS_THRESHOLD};
pub use conv::ConvLayer;
pub use init::{fixup_initialize, fixup_scale, he_initialize};
pub use linear::LinearLayer;
pub use pool::{PoolKind, PoolLayer};
pub use residual::{ResidualBlock, ResidualVariant};
pub use spec::{LayerSpec, VariantSpec};

use serde::{Deserialize, Serialize};

use crate::error::{config_err, shape_err, Result};
use crate::numerics::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Eval,
}

/// Dropout is kept only for architecture parity; it never masks.
#[derive(Clone, Debug, PartialEq)]
pub struct DropoutLayer {
    pub rate: f64,
}

impl DropoutLayer {
    pub fn new(rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(config_err!("dropout rate must lie in [0, 1), got {rate}"));
        }
        Ok(DropoutLayer { rate })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    Linear(LinearLayer),
    Conv(ConvLayer),
    Pool(PoolLayer),
    Relu,
    Flatten,
    BatchNorm(BatchNormLayer),
    Residual(ResidualBlock),
    Dropout(DropoutLayer),
}

/// Output of a layer's backward pass. `params` follows [`Layer::params`] order.
#[derive(Clone, Debug)]
pub struct LayerGrads {
    pub input: Tensor,
    pub params: Vec<Tensor>,
}

/// Receives the pre-activation tensor of every ReLU in canonical order.
pub type ReluProbe<'a> = dyn FnMut(&Tensor) + 'a;

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| if v > 0.0 { v } else { 0.0 })
}

impl Layer {
    pub fn forward(&self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        self.forward_probed(x, mode, &mut |_| {})
    }

    pub fn forward_probed(&self, x: &Tensor, mode: Mode, probe: &mut ReluProbe<'_>) -> Result<Tensor> {
        match self {
            Layer::Linear(l) => l.forward(x),
            Layer::Conv(c) => c.forward(x),
            Layer::Pool(p) => p.forward(x),
            Layer::Relu => {
                probe(x);
                Ok(relu(x))
            }
            Layer::Flatten => flatten(x),
            Layer::BatchNorm(bn) => bn.forward(x, mode == Mode::Train),
            Layer::Residual(r) => r.forward_probed(x, mode, probe),
            Layer::Dropout(_) => Ok(x.clone()),
        }
    }

    pub fn backward(&self, x: &Tensor, upstream: &Tensor, mode: Mode) -> Result<LayerGrads> {
        let (input, params) = match self {
            Layer::Linear(l) => l.backward(x, upstream)?,
            Layer::Conv(c) => c.backward(x, upstream)?,
            Layer::Pool(p) => (p.backward(x, upstream)?, vec![]),
            Layer::Relu => {
                // Subgradient 0 at exactly 0.
                (upstream.zip_map(x, |g, v| if v > 0.0 { g } else { 0.0 })?, vec![])
            }
            Layer::Flatten => (upstream.clone().reshape(x.dims().to_vec())?, vec![]),
            Layer::BatchNorm(bn) => bn.backward(x, upstream, mode == Mode::Train)?,
            Layer::Residual(r) => r.backward(x, upstream, mode)?,
            Layer::Dropout(_) => {
                if upstream.shape() != x.shape() {
                    return Err(shape_err!("dropout upstream {} vs input {}", upstream.shape(), x.shape()));
                }
                (upstream.clone(), vec![])
            }
        };
        Ok(LayerGrads { input, params })
    }

    /// Learnable tensors in declaration order.
    pub fn params(&self) -> Vec<&Tensor> {
        match self {
            Layer::Linear(l) => std::iter::once(&l.weight).chain(l.bias.as_ref()).collect(),
            Layer::Conv(c) => std::iter::once(&c.kernel).chain(c.bias.as_ref()).collect(),
            Layer::BatchNorm(bn) => vec![&bn.gamma, &bn.beta],
            Layer::Residual(r) => r.params(),
            Layer::Pool(_) | Layer::Relu | Layer::Flatten | Layer::Dropout(_) => vec![],
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Layer::Linear(l) => std::iter::once(&mut l.weight).chain(l.bias.as_mut()).collect(),
            Layer::Conv(c) => std::iter::once(&mut c.kernel).chain(c.bias.as_mut()).collect(),
            Layer::BatchNorm(bn) => vec![&mut bn.gamma, &mut bn.beta],
            Layer::Residual(r) => r.params_mut(),
            Layer::Pool(_) | Layer::Relu | Layer::Flatten | Layer::Dropout(_) => vec![],
        }
    }

    /// Every stored tensor (parameters, then running statistics) in declaration order.
    pub fn state(&self) -> Vec<&Tensor> {
        match self {
            Layer::BatchNorm(bn) => vec![&bn.gamma, &bn.beta, &bn.running_mean, &bn.running_var],
            Layer::Residual(r) => r.state(),
            _ => self.params(),
        }
    }

    pub fn state_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Layer::BatchNorm(bn) => {
                vec![&mut bn.gamma, &mut bn.beta, &mut bn.running_mean, &mut bn.running_var]
            }
            Layer::Residual(r) => r.state_mut(),
            _ => self.params_mut(),
        }
    }

    /// True when neither this layer nor any nested layer carries a bias or normalization.
    pub fn is_bias_free(&self) -> bool {
        match self {
            Layer::Linear(l) => l.bias.is_none(),
            Layer::Conv(c) => c.bias.is_none(),
            Layer::BatchNorm(_) => false,
            Layer::Residual(r) => r.branch.iter().all(Layer::is_bias_free),
            Layer::Pool(_) | Layer::Relu | Layer::Flatten | Layer::Dropout(_) => true,
        }
    }

    /// Number of ReLU sites this layer contributes for an input of the given per-sample shape,
    /// along with the per-sample output shape.
    pub fn relu_sites(&self, sample_dims: &[usize]) -> Result<(usize, Vec<usize>)> {
        let mut dims = vec![1];
        dims.extend_from_slice(sample_dims);
        let probe_in = Tensor::zeros(dims);
        let mut sites = 0;
        let out = self.forward_probed(&probe_in, Mode::Eval, &mut |t| sites += t.len())?;
        Ok((sites, out.dims()[1..].to_vec()))
    }

    /// Updates batch-norm running statistics from a training batch entering this layer.
    pub fn absorb_batch(&mut self, x: &Tensor) -> Result<()> {
        match self {
            Layer::BatchNorm(bn) => bn.absorb_batch(x),
            Layer::Residual(r) => r.absorb_batch(x),
            _ => Ok(()),
        }
    }
}

fn flatten(x: &Tensor) -> Result<Tensor> {
    let batch = x.batch();
    let rest = x.row_len();
    x.clone().reshape(vec![batch, rest])
}

#[cfg(test)]
mod tests;
