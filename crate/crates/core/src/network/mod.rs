//! Layer composition: logits, softmax distribution and argmax prediction.

mod checkpoint;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_VERSION, MAGIC};

use rand::Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{config_err, shape_err, Result};
use crate::layers::{self, ConvLayer, Layer, LayerSpec, LinearLayer, Mode, PoolKind, PoolLayer, ReluProbe};
use crate::numerics::{argmax, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    pub name: String,
    /// Per-sample input extents (no batch axis).
    pub input_shape: Vec<usize>,
    pub class_count: usize,
    pub zero_bias: bool,
    pub layers: Vec<Layer>,
    /// Free-form record of how the parameters were produced.
    pub provenance: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Prediction {
    pub class_index: usize,
    pub logits: Vec<f64>,
    pub distribution: Vec<f64>,
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Natural-log entropy of a distribution.
pub fn entropy(distribution: &[f64]) -> f64 {
    -distribution.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>()
}

impl Network {
    /// Validates the layer stack against `input_shape` and the zero-bias flag.
    pub fn new(name: impl Into<String>, input_shape: Vec<usize>, layers: Vec<Layer>, zero_bias: bool) -> Result<Self> {
        if input_shape.is_empty() {
            return Err(config_err!("input shape must have at least one dimension"));
        }
        if zero_bias {
            if let Some(bad) = layers.iter().find(|l| !l.is_bias_free()) {
                return Err(config_err!("zero-bias network may not contain {:?}", bad.spec()));
            }
        }
        let mut dims = input_shape.clone();
        for layer in &layers {
            dims = layer.relu_sites(&dims)?.1;
        }
        if dims.len() != 1 || dims[0] == 0 {
            return Err(shape_err!("network must end in a vector of logits, got per-sample shape {:?}", dims));
        }
        Ok(Network { name: name.into(), input_shape, class_count: dims[0], zero_bias, layers, provenance: serde_json::Value::Null })
    }

    /// Fully connected ReLU network `inputs → hidden… → classes`.
    pub fn fcn(name: impl Into<String>, inputs: usize, hidden: &[usize], classes: usize, bias: bool) -> Result<Self> {
        let mut layers = Vec::new();
        let mut width = inputs;
        for &h in hidden {
            layers.push(Layer::Linear(LinearLayer::new(width, h, bias)));
            layers.push(Layer::Relu);
            width = h;
        }
        layers.push(Layer::Linear(LinearLayer::new(width, classes, bias)));
        Network::new(name, vec![inputs], layers, !bias)
    }

    /// Small convolutional classifier for `[1, 28, 28]` images.
    pub fn cnn28(name: impl Into<String>, classes: usize, bias: bool) -> Result<Self> {
        let layers = vec![
            Layer::Conv(ConvLayer::new(1, 16, (3, 3), (1, 1), (1, 1), bias)),
            Layer::Relu,
            Layer::Pool(PoolLayer::new(PoolKind::Max, 2, 2)?),
            Layer::Conv(ConvLayer::new(16, 32, (3, 3), (1, 1), (1, 1), bias)),
            Layer::Relu,
            Layer::Pool(PoolLayer::new(PoolKind::Max, 2, 2)?),
            Layer::Flatten,
            Layer::Linear(LinearLayer::new(32 * 7 * 7, classes, bias)),
        ];
        Network::new(name, vec![1, 28, 28], layers, !bias)
    }

    pub fn from_specs(
        name: impl Into<String>,
        input_shape: Vec<usize>,
        specs: &[LayerSpec],
        zero_bias: bool,
    ) -> Result<Self> {
        let layers = specs.iter().map(LayerSpec::build).collect::<Result<Vec<_>>>()?;
        Network::new(name, input_shape, layers, zero_bias)
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(Layer::spec).collect()
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    /// He fan-in initialisation of every weight layer; biases start at zero.
    pub fn initialize_he(&mut self, rng: &mut impl Rng) {
        layers::he_initialize(&mut self.layers, rng);
        self.provenance = serde_json::json!({ "init": "he_normal_fan_in", "bias_init": "zeros" });
    }

    pub fn fixup_initialize(&mut self, blocks: usize, layers_per_branch: usize, rng: &mut impl Rng) -> Result<()> {
        layers::fixup_initialize(&mut self.layers, blocks, layers_per_branch, rng)?;
        self.provenance = serde_json::json!({
            "init": "fixup",
            "standard_init": "he_normal_fan_in",
            "blocks": blocks,
            "layers_per_branch": layers_per_branch,
        });
        Ok(())
    }

    fn check_batch(&self, x: &Tensor) -> Result<()> {
        if x.rank() != self.input_shape.len() + 1 || x.dims()[1..] != self.input_shape[..] {
            return Err(shape_err!("network {} expects [B, {:?}], got {}", self.name, self.input_shape, x.shape()));
        }
        Ok(())
    }

    fn check_sample(&self, x: &Tensor) -> Result<()> {
        if x.dims() != self.input_shape.as_slice() {
            return Err(shape_err!("network {} expects {:?}, got {}", self.name, self.input_shape, x.shape()));
        }
        Ok(())
    }

    /// Forward pass over a batch calling `probe` on every ReLU input.
    pub fn forward_probed(&self, x: &Tensor, mode: Mode, probe: &mut ReluProbe<'_>) -> Result<Tensor> {
        self.check_batch(x)?;
        let mut h = x.clone();
        for layer in &self.layers {
            h = layer.forward_probed(&h, mode, probe)?;
        }
        Ok(h)
    }

    /// Logits `[B, |C|]` for a batch `[B, input…]` in eval mode.
    pub fn logits_batch(&self, x: &Tensor) -> Result<Tensor> {
        self.forward_probed(x, Mode::Eval, &mut |_| {})
    }

    /// Logits for a single sample shaped like `input_shape`.
    pub fn logits(&self, x: &Tensor) -> Result<Tensor> {
        self.check_sample(x)?;
        let out = self.logits_batch(&x.unsqueeze0())?;
        out.reshape(vec![self.class_count])
    }

    pub fn predict(&self, x: &Tensor) -> Result<Prediction> {
        let logits = self.logits(x)?.into_data();
        Ok(Prediction { class_index: argmax(&logits), distribution: softmax(&logits), logits })
    }

    /// Argmax class per sample of a batch.
    pub fn classify_batch(&self, x: &Tensor) -> Result<Vec<usize>> {
        let logits = self.logits_batch(x)?;
        Ok((0..logits.batch()).map(|i| argmax(logits.row(i))).collect())
    }

    /// Classifies `inputs` in chunks of `chunk` samples.
    pub fn classify_all(&self, inputs: &Tensor, chunk: usize) -> Result<Vec<usize>> {
        let n = inputs.batch();
        let mut out = Vec::with_capacity(n);
        let chunk = chunk.max(1);
        for start in (0..n).step_by(chunk) {
            let idx: Vec<usize> = (start..(start + chunk).min(n)).collect();
            out.extend(self.classify_batch(&inputs.select_rows(&idx))?);
        }
        Ok(out)
    }

    /// Concatenated ReLU pre-activations of one sample, in canonical site order.
    pub fn pre_activations(&self, x: &Tensor) -> Result<Vec<f64>> {
        self.check_sample(x)?;
        let mut sites = Vec::new();
        self.forward_probed(&x.unsqueeze0(), Mode::Eval, &mut |t| sites.extend_from_slice(t.data()))?;
        Ok(sites)
    }

    /// Per-sample ReLU pre-activations for a batch, `[B][sites]`.
    pub fn pre_activations_batch(&self, x: &Tensor) -> Result<Vec<Vec<f64>>> {
        let batch = x.batch();
        let mut rows: Vec<Vec<f64>> = vec![Vec::new(); batch];
        self.forward_probed(x, Mode::Eval, &mut |t| {
            for (b, row) in rows.iter_mut().enumerate() {
                row.extend_from_slice(t.row(b));
            }
        })?;
        Ok(rows)
    }

    pub fn relu_site_count(&self) -> usize {
        let mut dims = self.input_shape.clone();
        let mut total = 0;
        for layer in &self.layers {
            let (sites, out) = layer.relu_sites(&dims).expect("validated at construction");
            total += sites;
            dims = out;
        }
        total
    }

    /// Inputs to every layer plus the final output: `acts[i]` feeds `layers[i]`.
    pub fn forward_record(&self, x: &Tensor, mode: Mode) -> Result<Vec<Tensor>> {
        self.check_batch(x)?;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.clone());
        for layer in &self.layers {
            let next = layer.forward(acts.last().unwrap(), mode)?;
            acts.push(next);
        }
        Ok(acts)
    }

    /// Backpropagates `upstream` (gradient w.r.t. the output) through recorded activations.
    /// Returns `(d input, parameter gradients in `params()` order)`.
    pub fn backward(&self, acts: &[Tensor], upstream: &Tensor, mode: Mode) -> Result<(Tensor, Vec<Tensor>)> {
        if acts.len() != self.layers.len() + 1 {
            return Err(shape_err!("expected {} recorded activations, got {}", self.layers.len() + 1, acts.len()));
        }
        let mut g = upstream.clone();
        let mut per_layer = Vec::with_capacity(self.layers.len());
        for (layer, input) in self.layers.iter().zip(acts).rev() {
            let grads = layer.backward(input, &g, mode)?;
            g = grads.input;
            per_layer.push(grads.params);
        }
        per_layer.reverse();
        Ok((g, per_layer.into_iter().flatten().collect()))
    }

    /// Folds a training batch into batch-norm running statistics.
    pub fn absorb_batch(&mut self, acts: &[Tensor]) -> Result<()> {
        for (layer, input) in self.layers.iter_mut().zip(acts) {
            layer.absorb_batch(input)?;
        }
        Ok(())
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(Layer::params).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(Layer::params_mut).collect()
    }

    pub fn state(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(Layer::state).collect()
    }

    pub fn state_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(Layer::state_mut).collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    /// Re-checks the structural zero-bias guarantee.
    pub fn has_no_bias(&self) -> bool {
        self.layers.iter().all(Layer::is_bias_free)
    }

    /// SHA-256 over the checkpoint encoding, identifying architecture and parameters.
    pub fn digest(&self) -> String {
        let bytes = encode_checkpoint(self).expect("in-memory encoding");
        hex::encode(Sha256::digest(&bytes))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn one_layer(w: &[Vec<f64>]) -> Network {
        let lin = LinearLayer::from_weights(Tensor::matrix(w).unwrap(), None).unwrap();
        Network::new("one", vec![w[0].len()], vec![Layer::Linear(lin)], true).unwrap()
    }

    #[test]
    fn single_layer_logits() {
        let net = one_layer(&[vec![1.0, 0.0], vec![0.0, -1.0]]);
        assert_eq!(net.logits(&Tensor::vector(vec![2.0, 3.0])).unwrap().data(), &[2.0, -3.0]);
    }

    #[test]
    fn zero_input_gives_zero_logits_and_uniform_distribution() {
        let mut net = Network::fcn("z", 5, &[7, 4], 10, false).unwrap();
        net.initialize_he(&mut ChaCha8Rng::seed_from_u64(1));
        let p = net.predict(&Tensor::zeros(vec![5])).unwrap();
        assert!(p.logits.iter().all(|&v| v == 0.0));
        assert!(p.distribution.iter().all(|&q| (q - 0.1).abs() < 1e-15));
    }

    #[test]
    fn softmax_examples() {
        let u = softmax(&[0.0; 10]);
        assert!(u.iter().all(|&q| (q - 0.1).abs() < 1e-15));
        let p = softmax(&[1.0, 2.0]);
        let e = std::f64::consts::E;
        assert!((p[0] - 1.0 / (1.0 + e)).abs() < 1e-15);
        assert!((p[1] - e / (1.0 + e)).abs() < 1e-15);
        assert!((p[0] - 0.26894).abs() < 1e-5);
        let big = softmax(&[1e4, 0.0]);
        assert!(big.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn tie_break_picks_lowest_class() {
        let net = one_layer(&[vec![1.0], vec![1.0]]);
        let p = net.predict(&Tensor::vector(vec![3.0])).unwrap();
        assert_eq!(p.logits, vec![3.0, 3.0]);
        assert_eq!(p.class_index, 0);
    }

    #[test]
    fn zero_bias_flag_is_structural() {
        let layers = vec![Layer::Linear(LinearLayer::new(3, 2, true))];
        assert!(Network::new("bad", vec![3], layers, true).is_err());
        let bn = vec![
            Layer::Linear(LinearLayer::new(3, 2, false)),
            Layer::BatchNorm(crate::layers::BatchNormLayer::new(2, 1e-5).unwrap()),
        ];
        assert!(Network::new("bad", vec![3], bn, true).is_err());
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let net = Network::fcn("f", 4, &[3], 2, false).unwrap();
        assert!(matches!(net.logits(&Tensor::zeros(vec![5])), Err(crate::Error::ShapeMismatch(_))));
    }

    #[test]
    fn homogeneous_logits_at_tiny_scale() {
        let mut net = Network::fcn("h", 6, &[16, 16], 4, false).unwrap();
        net.initialize_he(&mut ChaCha8Rng::seed_from_u64(2));
        let x = Tensor::vector(vec![0.3, -1.2, 0.8, 2.0, -0.1, 0.9]);
        let s = 1e-4;
        let a = net.logits(&x.scale(s)).unwrap();
        let b = net.logits(&x).unwrap().scale(s);
        let bound = 1e-10 * b.max_abs().max(1.0);
        assert!(a.max_abs_diff(&b).unwrap() <= bound);
    }

    #[test]
    fn relu_sites_of_fcn_and_cnn() {
        assert_eq!(Network::fcn("f", 784, &[256], 10, false).unwrap().relu_site_count(), 256);
        assert_eq!(Network::cnn28("c", 10, false).unwrap().relu_site_count(), 16 * 28 * 28 + 32 * 14 * 14);
    }

    #[test]
    fn entropy_of_uniform() {
        assert!((entropy(&[0.1; 10]) - 10f64.ln()).abs() < 1e-15);
    }
}
