use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};
use crate::numerics::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerConfig {
    SgdMomentum { momentum: f64 },
    Adadelta { rho: f64, eps: f64 },
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig::Adadelta { rho: 0.9, eps: 1e-6 }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        match *self {
            OptimizerConfig::SgdMomentum { momentum } if !(0.0..1.0).contains(&momentum) => {
                Err(config_err!("momentum must lie in [0, 1), got {momentum}"))
            }
            OptimizerConfig::Adadelta { rho, eps } if !((0.0..1.0).contains(&rho) && eps > 0.0) => {
                Err(config_err!("adadelta needs rho in [0, 1) and eps > 0, got {rho}, {eps}"))
            }
            _ => Ok(()),
        }
    }
}

/// Per-parameter optimizer state, laid out like the network's `params()`.
pub struct Optimizer {
    config: OptimizerConfig,
    learning_rate: f64,
    weight_decay: f64,
    /// momentum buffer, or Adadelta's running mean of squared gradients
    first: Vec<Vec<f64>>,
    /// Adadelta's running mean of squared updates
    second: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig, learning_rate: f64, weight_decay: f64, params: &[&Tensor]) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|t| vec![0.0; t.len()]).collect();
        Optimizer { config, learning_rate, weight_decay, first: zeros.clone(), second: zeros }
    }

    /// Applies one update in place.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) {
        assert_eq!(params.len(), grads.len());
        let (lr, wd) = (self.learning_rate, self.weight_decay);
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let first = &mut self.first[k];
            let second = &mut self.second[k];
            for (i, (w, &gi)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                let grad = gi + wd * *w;
                match self.config {
                    OptimizerConfig::SgdMomentum { momentum } => {
                        first[i] = momentum * first[i] + grad;
                        *w -= lr * first[i];
                    }
                    OptimizerConfig::Adadelta { rho, eps } => {
                        first[i] = rho * first[i] + (1.0 - rho) * grad * grad;
                        let delta = ((second[i] + eps).sqrt() / (first[i] + eps).sqrt()) * grad;
                        second[i] = rho * second[i] + (1.0 - rho) * delta * delta;
                        *w -= lr * delta;
                    }
                }
            }
        }
    }
}
