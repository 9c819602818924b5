use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{config_err, Result};
use crate::numerics::Tensor;

use super::{Layer, ResidualVariant};

fn he_fill(weight: &mut Tensor, fan_in: usize, rng: &mut impl Rng) {
    let std = (2.0 / fan_in.max(1) as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("finite std");
    for v in weight.data_mut() {
        *v = normal.sample(rng);
    }
}

/// He (fan-in) normal init for a single weight layer; biases reset to zero.
fn he_layer(layer: &mut Layer, rng: &mut impl Rng) {
    match layer {
        Layer::Linear(l) => {
            let fan_in = l.inputs();
            he_fill(&mut l.weight, fan_in, rng);
            if let Some(b) = &mut l.bias {
                b.data_mut().fill(0.0);
            }
        }
        Layer::Conv(c) => {
            let d = c.kernel.dims();
            let fan_in = d[1] * d[2] * d[3];
            he_fill(&mut c.kernel, fan_in, rng);
            if let Some(b) = &mut c.bias {
                b.data_mut().fill(0.0);
            }
        }
        _ => {}
    }
}

/// He-initialises every weight layer (recursing into residual branches) in declaration order.
pub fn he_initialize(layers: &mut [Layer], rng: &mut impl Rng) {
    for layer in layers {
        if let Layer::Residual(r) = layer {
            he_initialize(&mut r.branch, rng);
            if let ResidualVariant::Fixup { multiplier } = &mut r.variant {
                multiplier.data_mut()[0] = 1.0;
            }
        } else {
            he_layer(layer, rng);
        }
    }
}

/// Branch weight scale `L^(-1/(2m-2))` for `L` residual blocks of `m` layers each.
pub fn fixup_scale(blocks: usize, layers_per_branch: usize) -> Result<f64> {
    if layers_per_branch < 2 {
        return Err(config_err!("fixup needs at least 2 layers per branch, got {layers_per_branch}"));
    }
    if blocks == 0 {
        return Err(config_err!("fixup needs at least one residual block"));
    }
    Ok((blocks as f64).powf(-1.0 / (2.0 * layers_per_branch as f64 - 2.0)))
}

fn zero_weights(layer: &mut Layer) {
    for t in layer.params_mut() {
        t.data_mut().fill(0.0);
    }
}

fn is_weight_layer(layer: &Layer) -> bool {
    matches!(layer, Layer::Linear(_) | Layer::Conv(_))
}

/// Fixup initialisation.
///
/// Weight layers outside residual branches get He init, except the final
/// linear (classification) layer which is zeroed. Inside each fixup branch,
/// the last weight layer is zeroed and the others get He init scaled by
/// [`fixup_scale`]. Branch multipliers are reset to 1.
pub fn fixup_initialize(layers: &mut [Layer], blocks: usize, layers_per_branch: usize, rng: &mut impl Rng) -> Result<()> {
    let scale = fixup_scale(blocks, layers_per_branch)?;
    if !layers.iter().any(|l| matches!(l, Layer::Residual(r) if matches!(r.variant, ResidualVariant::Fixup { .. }))) {
        return Err(config_err!("network has no fixup residual blocks"));
    }
    let classifier = layers.iter().rposition(|l| matches!(l, Layer::Linear(_)));
    for (i, layer) in layers.iter_mut().enumerate() {
        match layer {
            Layer::Residual(r) if matches!(r.variant, ResidualVariant::Fixup { .. }) => {
                let last = r.branch.iter().rposition(is_weight_layer);
                for (j, inner) in r.branch.iter_mut().enumerate() {
                    if Some(j) == last {
                        zero_weights(inner);
                    } else if is_weight_layer(inner) {
                        he_layer(inner, rng);
                        for t in inner.params_mut().into_iter().take(1) {
                            t.data_mut().iter_mut().for_each(|v| *v *= scale);
                        }
                    }
                }
                if let ResidualVariant::Fixup { multiplier } = &mut r.variant {
                    multiplier.data_mut()[0] = 1.0;
                }
            }
            Layer::Residual(r) => he_initialize(&mut r.branch, rng),
            _ if Some(i) == classifier => zero_weights(layer),
            _ => he_layer(layer, rng),
        }
    }
    Ok(())
}
