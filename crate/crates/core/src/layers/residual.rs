use crate::error::{config_err, shape_err, Result};
use crate::numerics::Tensor;

use super::{Layer, Mode, ReluProbe};

#[derive(Clone, Debug, PartialEq)]
pub enum ResidualVariant {
    /// `x + G(x)`
    Plain,
    /// `x + m·G(x)` with a learnable scalar `m` (stored as a `[1]` tensor) and no scalar bias.
    Fixup { multiplier: Tensor },
    /// `x + α·G(x / β)` with fixed positive `α`, `β`.
    Nf { alpha: f64, beta: f64 },
}

/// Skip connection around a branch `G`; the branch must preserve shape.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualBlock {
    pub branch: Vec<Layer>,
    pub variant: ResidualVariant,
}

impl ResidualBlock {
    pub fn plain(branch: Vec<Layer>) -> Self {
        ResidualBlock { branch, variant: ResidualVariant::Plain }
    }

    pub fn fixup(branch: Vec<Layer>) -> Self {
        ResidualBlock { branch, variant: ResidualVariant::Fixup { multiplier: Tensor::full(vec![1], 1.0) } }
    }

    pub fn nf(branch: Vec<Layer>, alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && beta > 0.0) {
            return Err(config_err!("NF residual needs alpha > 0 and beta > 0, got {alpha}, {beta}"));
        }
        Ok(ResidualBlock { branch, variant: ResidualVariant::Nf { alpha, beta } })
    }

    fn branch_input(&self, x: &Tensor) -> Tensor {
        match &self.variant {
            ResidualVariant::Nf { beta, .. } => x.map(|v| v / beta),
            _ => x.clone(),
        }
    }

    fn branch_gain(&self) -> f64 {
        match &self.variant {
            ResidualVariant::Plain => 1.0,
            ResidualVariant::Fixup { multiplier } => multiplier.data()[0],
            ResidualVariant::Nf { alpha, .. } => *alpha,
        }
    }

    pub fn forward_probed(&self, x: &Tensor, mode: Mode, probe: &mut ReluProbe<'_>) -> Result<Tensor> {
        let mut h = self.branch_input(x);
        for layer in &self.branch {
            h = layer.forward_probed(&h, mode, probe)?;
        }
        if h.shape() != x.shape() {
            return Err(shape_err!("residual branch maps {} to {}", x.shape(), h.shape()));
        }
        let gain = self.branch_gain();
        x.zip_map(&h, |a, b| a + gain * b)
    }

    pub fn backward(&self, x: &Tensor, upstream: &Tensor, mode: Mode) -> Result<(Tensor, Vec<Tensor>)> {
        let mut inputs = vec![self.branch_input(x)];
        for layer in &self.branch {
            let next = layer.forward(inputs.last().unwrap(), mode)?;
            inputs.push(next);
        }
        let branch_out = inputs.pop().unwrap();
        if branch_out.shape() != upstream.shape() {
            return Err(shape_err!("residual upstream {} vs output {}", upstream.shape(), branch_out.shape()));
        }
        let gain = self.branch_gain();
        let mut g = upstream.scale(gain);
        let mut per_layer = Vec::with_capacity(self.branch.len());
        for (layer, input) in self.branch.iter().zip(&inputs).rev() {
            let grads = layer.backward(input, &g, mode)?;
            g = grads.input;
            per_layer.push(grads.params);
        }
        per_layer.reverse();
        let mut params: Vec<Tensor> = per_layer.into_iter().flatten().collect();

        let through_branch = match &self.variant {
            ResidualVariant::Nf { beta, .. } => g.scale(1.0 / beta),
            _ => g,
        };
        if let ResidualVariant::Fixup { .. } = self.variant {
            params.push(Tensor::vector(vec![upstream.dot(&branch_out)?]));
        }
        Ok((upstream.add(&through_branch)?, params))
    }

    pub fn params(&self) -> Vec<&Tensor> {
        let mut out: Vec<&Tensor> = self.branch.iter().flat_map(Layer::params).collect();
        if let ResidualVariant::Fixup { multiplier } = &self.variant {
            out.push(multiplier);
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = self.branch.iter_mut().flat_map(Layer::params_mut).collect();
        if let ResidualVariant::Fixup { multiplier } = &mut self.variant {
            out.push(multiplier);
        }
        out
    }

    pub fn state(&self) -> Vec<&Tensor> {
        let mut out: Vec<&Tensor> = self.branch.iter().flat_map(Layer::state).collect();
        if let ResidualVariant::Fixup { multiplier } = &self.variant {
            out.push(multiplier);
        }
        out
    }

    pub fn state_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = self.branch.iter_mut().flat_map(Layer::state_mut).collect();
        if let ResidualVariant::Fixup { multiplier } = &mut self.variant {
            out.push(multiplier);
        }
        out
    }

    pub fn absorb_batch(&mut self, x: &Tensor) -> Result<()> {
        let mut h = self.branch_input(x);
        for layer in &mut self.branch {
            layer.absorb_batch(&h)?;
            h = layer.forward(&h, Mode::Train)?;
        }
        Ok(())
    }
}
