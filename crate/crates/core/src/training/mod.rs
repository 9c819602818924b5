//! Mini-batch training with cross-entropy, optional scalar augmentation and per-epoch logging.

mod loss;
mod optim;

pub use loss::{cross_entropy, head_loss, logistic_loss};
pub use optim::{Optimizer, OptimizerConfig};

use std::path::PathBuf;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datasets::LabeledDataset;
use crate::error::{config_err, shape_err, Error, Result};
use crate::layers::Mode;
use crate::network::Network;
use crate::numerics::{argmax, Tensor};

/// Seed streams derived from [`TrainConfig::seed`].
pub const INIT_STREAM: u64 = 0;
pub const SHUFFLE_STREAM: u64 = 1;
pub const AUGMENT_STREAM: u64 = 2;
/// Synthetic datasets and inputs.
pub const DATA_STREAM: u64 = 5;

/// A ChaCha generator on one stream of `seed`.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    pub seed: u64,
    #[serde(default)]
    pub scalar_augmentation: Option<Vec<f64>>,
    #[serde(default)]
    pub weight_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 512,
            learning_rate: 0.01,
            optimizer: OptimizerConfig::default(),
            seed: 0,
            scalar_augmentation: None,
            weight_decay: 0.0,
        }
    }
}

impl TrainConfig {
    /// Zero learning rate is accepted and freezes the parameters.
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(config_err!("epochs and batch_size must be at least 1"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(config_err!("learning rate must be finite and non-negative, got {}", self.learning_rate));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(config_err!("weight decay must be finite and non-negative, got {}", self.weight_decay));
        }
        if let Some(scalars) = &self.scalar_augmentation {
            check_scalars(scalars)?;
        }
        self.optimizer.validate()
    }

    /// Augmentation list with the identity multiplier added when absent.
    pub fn augmentation_scalars(&self) -> Option<Vec<f64>> {
        self.scalar_augmentation.as_ref().map(|s| {
            let mut out = s.clone();
            if !out.contains(&1.0) {
                out.push(1.0);
            }
            out
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainRun {
    pub config: TrainConfig,
    pub network: String,
    /// mean training loss of each epoch
    pub train_loss: Vec<f64>,
    /// test accuracy after each epoch, in `[0, 1]`
    pub test_accuracy: Vec<f64>,
    pub wall_time_secs: f64,
    pub checkpoint: Option<PathBuf>,
}

impl TrainRun {
    pub fn final_accuracy(&self) -> f64 {
        self.test_accuracy.last().copied().unwrap_or(0.0)
    }
}

fn check_scalars(scalars: &[f64]) -> Result<()> {
    if scalars.is_empty() {
        return Err(config_err!("augmentation scalar list is empty"));
    }
    match scalars.iter().find(|&&s| !(s > 0.0 && s.is_finite())) {
        Some(bad) => Err(config_err!("augmentation scalars must be positive, got {bad}")),
        None => Ok(()),
    }
}

/// Multiplies every sample by a scalar drawn uniformly from `scalars`.
pub fn scalar_augment(batch: &Tensor, scalars: &[f64], rng: &mut impl Rng) -> Result<Tensor> {
    check_scalars(scalars)?;
    let mut out = batch.clone();
    for i in 0..out.batch() {
        let s = scalars[rng.gen_range(0..scalars.len())];
        out.row_mut(i).iter_mut().for_each(|v| *v *= s);
    }
    Ok(out)
}

/// Single-logit heads predict class 1 for a positive logit, class 0 otherwise.
pub fn head_classes(logits: &Tensor) -> Vec<usize> {
    (0..logits.batch())
        .map(|i| {
            let row = logits.row(i);
            if row.len() == 1 {
                usize::from(row[0] > 0.0)
            } else {
                argmax(row)
            }
        })
        .collect()
}

/// Predicted classes for every sample, evaluated in chunks.
pub fn predict_all(net: &Network, inputs: &Tensor) -> Result<Vec<usize>> {
    let n = inputs.batch();
    let mut out = Vec::with_capacity(n);
    for start in (0..n).step_by(EVAL_CHUNK) {
        let idx: Vec<usize> = (start..(start + EVAL_CHUNK).min(n)).collect();
        out.extend(head_classes(&net.logits_batch(&inputs.select_rows(&idx))?));
    }
    Ok(out)
}

const EVAL_CHUNK: usize = 1000;

/// Fraction of `ds` classified correctly (softmax or single-logit head).
pub fn evaluate_accuracy(net: &Network, ds: &LabeledDataset) -> Result<f64> {
    if ds.is_empty() {
        return Ok(0.0);
    }
    check_dataset(net, ds)?;
    let predicted = predict_all(net, &ds.inputs)?;
    Ok(predicted.iter().zip(&ds.labels).filter(|(p, l)| p == l).count() as f64 / ds.len() as f64)
}

fn check_dataset(net: &Network, ds: &LabeledDataset) -> Result<()> {
    if ds.sample_dims() != net.input_shape.as_slice() {
        return Err(shape_err!("dataset samples {:?} do not match network input {:?}", ds.sample_dims(), net.input_shape));
    }
    let needed = if net.class_count == 1 { 2 } else { net.class_count };
    if let Some(&label) = ds.labels.iter().find(|&&l| l >= needed) {
        return Err(Error::InvalidLabel { label, classes: needed });
    }
    Ok(())
}

/// Trains `net` in place. Initialisation is the caller's job; shuffling and
/// augmentation draw from their own seed streams so twins see identical batches.
pub fn train(net: &mut Network, train_set: &LabeledDataset, test_set: &LabeledDataset, config: &TrainConfig) -> Result<TrainRun> {
    config.validate()?;
    check_dataset(net, train_set)?;
    if !test_set.is_empty() {
        check_dataset(net, test_set)?;
    }
    if train_set.is_empty() {
        return Err(config_err!("training set is empty"));
    }
    let zero_bias = net.zero_bias;
    let started = Instant::now();
    let mut shuffle_rng = seeded_rng(config.seed, SHUFFLE_STREAM);
    let mut augment_rng = seeded_rng(config.seed, AUGMENT_STREAM);
    let scalars = config.augmentation_scalars();
    let mut optimizer = Optimizer::new(config.optimizer.clone(), config.learning_rate, config.weight_decay, &net.params());
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut run = TrainRun {
        config: config.clone(),
        network: net.name.clone(),
        train_loss: Vec::with_capacity(config.epochs),
        test_accuracy: Vec::with_capacity(config.epochs),
        wall_time_secs: 0.0,
        checkpoint: None,
    };

    for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let mut x = train_set.inputs.select_rows(chunk);
            if let Some(s) = &scalars {
                x = scalar_augment(&x, s, &mut augment_rng)?;
            }
            let labels: Vec<usize> = chunk.iter().map(|&i| train_set.labels[i]).collect();
            let acts = net.forward_record(&x, Mode::Train)?;
            let (loss, upstream) = head_loss(acts.last().unwrap(), &labels)?;
            if !loss.is_finite() {
                return Err(Error::Numerical(format!("loss became {loss} in epoch {}", epoch + 1)));
            }
            loss_sum += loss * chunk.len() as f64;
            let (_, grads) = net.backward(&acts, &upstream, Mode::Train)?;
            net.absorb_batch(&acts)?;
            optimizer.step(&mut net.params_mut(), &grads);
        }
        let epoch_loss = loss_sum / train_set.len() as f64;
        let accuracy = if test_set.is_empty() { 0.0 } else { evaluate_accuracy(net, test_set)? };
        log::info!("{} epoch {}: loss {epoch_loss:.6}, test accuracy {accuracy:.4}", net.name, epoch + 1);
        run.train_loss.push(epoch_loss);
        run.test_accuracy.push(accuracy);
        debug_assert!(!zero_bias || net.has_no_bias());
    }
    if zero_bias && !net.has_no_bias() {
        return Err(Error::InapplicableNetwork("zero-bias structure lost during training".into()));
    }
    run.wall_time_secs = started.elapsed().as_secs_f64();
    Ok(run)
}
