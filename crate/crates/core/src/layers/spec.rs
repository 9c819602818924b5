//! Parameter-free layer descriptors, as stored in checkpoint metadata and configs.

use serde::{Deserialize, Serialize};

use crate::error::Result;

use super::{
    BatchNormLayer, ConvLayer, DropoutLayer, Layer, LinearLayer, PoolKind, PoolLayer, ResidualBlock,
    ResidualVariant,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Linear {
        inputs: usize,
        outputs: usize,
        bias: bool,
    },
    Conv {
        in_channels: usize,
        out_channels: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        padding: (usize, usize),
        bias: bool,
    },
    Pool {
        pool: PoolKind,
        window: usize,
        stride: usize,
    },
    Relu,
    Flatten,
    BatchNorm {
        channels: usize,
        eps: f64,
    },
    Residual {
        branch: Vec<LayerSpec>,
        variant: VariantSpec,
    },
    Dropout {
        rate: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum VariantSpec {
    Plain,
    Fixup,
    Nf { alpha: f64, beta: f64 },
}

impl LayerSpec {
    /// Builds a layer with zeroed weights (batch norm starts as the identity).
    pub fn build(&self) -> Result<Layer> {
        Ok(match self {
            LayerSpec::Linear { inputs, outputs, bias } => Layer::Linear(LinearLayer::new(*inputs, *outputs, *bias)),
            LayerSpec::Conv { in_channels, out_channels, kernel, stride, padding, bias } => {
                Layer::Conv(ConvLayer::new(*in_channels, *out_channels, *kernel, *stride, *padding, *bias))
            }
            LayerSpec::Pool { pool, window, stride } => Layer::Pool(PoolLayer::new(*pool, *window, *stride)?),
            LayerSpec::Relu => Layer::Relu,
            LayerSpec::Flatten => Layer::Flatten,
            LayerSpec::BatchNorm { channels, eps } => Layer::BatchNorm(BatchNormLayer::new(*channels, *eps)?),
            LayerSpec::Residual { branch, variant } => {
                let branch = branch.iter().map(LayerSpec::build).collect::<Result<Vec<_>>>()?;
                Layer::Residual(match variant {
                    VariantSpec::Plain => ResidualBlock::plain(branch),
                    VariantSpec::Fixup => ResidualBlock::fixup(branch),
                    VariantSpec::Nf { alpha, beta } => ResidualBlock::nf(branch, *alpha, *beta)?,
                })
            }
            LayerSpec::Dropout { rate } => Layer::Dropout(DropoutLayer::new(*rate)?),
        })
    }
}

impl Layer {
    pub fn spec(&self) -> LayerSpec {
        match self {
            Layer::Linear(l) => LayerSpec::Linear { inputs: l.inputs(), outputs: l.outputs(), bias: l.bias.is_some() },
            Layer::Conv(c) => {
                let d = c.kernel.dims();
                LayerSpec::Conv {
                    in_channels: d[1],
                    out_channels: d[0],
                    kernel: (d[2], d[3]),
                    stride: c.stride,
                    padding: c.padding,
                    bias: c.bias.is_some(),
                }
            }
            Layer::Pool(p) => LayerSpec::Pool { pool: p.kind, window: p.window, stride: p.stride },
            Layer::Relu => LayerSpec::Relu,
            Layer::Flatten => LayerSpec::Flatten,
            Layer::BatchNorm(bn) => LayerSpec::BatchNorm { channels: bn.channels(), eps: bn.eps },
            Layer::Residual(r) => LayerSpec::Residual {
                branch: r.branch.iter().map(Layer::spec).collect(),
                variant: match &r.variant {
                    ResidualVariant::Plain => VariantSpec::Plain,
                    ResidualVariant::Fixup { .. } => VariantSpec::Fixup,
                    ResidualVariant::Nf { alpha, beta } => VariantSpec::Nf { alpha: *alpha, beta: *beta },
                },
            },
            Layer::Dropout(d) => LayerSpec::Dropout { rate: d.rate },
        }
    }
}
