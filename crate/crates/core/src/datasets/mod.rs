//! Labelled datasets: IDX ingestion, scalar-sweep views and the 2D ray datasets.

mod idx;
mod rays;

pub use idx::{
    decode_idx, encode_idx_images, encode_idx_labels, load_idx, load_mnist_dir, parse_idx_images, parse_idx_labels,
    write_idx, MnistFiles, IMAGES_MAGIC, LABELS_MAGIC,
};
pub use rays::{make_ray_dataset, Ray, RayDataset2D, RayVariant};

use serde::{Deserialize, Serialize};

use crate::error::{config_err, shape_err, Error, Result};
use crate::numerics::Tensor;

/// Contrast multipliers of the scalar sweep, largest first.
pub const DEFAULT_SWEEP: [f64; 11] = [1.0, 0.25, 0.15, 0.125, 0.1, 0.075, 0.05, 0.025, 0.01, 0.001, 0.0001];

/// Affine map applied to raw values: `value = raw * scale + shift`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub scale: f64,
    pub shift: f64,
}

impl Normalization {
    pub const IDENTITY: Normalization = Normalization { scale: 1.0, shift: 0.0 };
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    /// `[N, …]`
    pub inputs: Tensor,
    pub labels: Vec<usize>,
    pub class_count: usize,
    pub normalization: Normalization,
}

impl LabeledDataset {
    pub fn new(inputs: Tensor, labels: Vec<usize>, class_count: usize, normalization: Normalization) -> Result<Self> {
        if inputs.batch() != labels.len() {
            return Err(shape_err!("{} inputs but {} labels", inputs.batch(), labels.len()));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::InvalidLabel { label, classes: class_count });
        }
        Ok(LabeledDataset { inputs, labels, class_count, normalization })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample_dims(&self) -> &[usize] {
        &self.inputs.dims()[1..]
    }

    /// One sample as a tensor shaped like [`LabeledDataset::sample_dims`].
    pub fn sample(&self, i: usize) -> Tensor {
        Tensor::new(self.sample_dims().to_vec(), self.inputs.row(i).to_vec()).expect("row matches sample dims")
    }

    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        LabeledDataset {
            inputs: self.inputs.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_count: self.class_count,
            normalization: self.normalization,
        }
    }

    /// First `n` samples (or all of them).
    pub fn head(&self, n: usize) -> LabeledDataset {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&idx)
    }

    /// Reinterprets each sample with new per-sample extents of equal size.
    pub fn reshaped(&self, sample_dims: &[usize]) -> Result<LabeledDataset> {
        let mut dims = vec![self.len()];
        dims.extend_from_slice(sample_dims);
        Ok(LabeledDataset { inputs: self.inputs.clone().reshape(dims)?, ..self.clone() })
    }

    /// Every input multiplied by `s`.
    pub fn scaled(&self, s: f64) -> LabeledDataset {
        LabeledDataset {
            inputs: self.inputs.scale(s),
            normalization: Normalization { scale: self.normalization.scale * s, shift: self.normalization.shift * s },
            ..self.clone()
        }
    }
}

/// One scaled copy of `ds` per multiplier.
pub fn scalar_sweep_views(ds: &LabeledDataset, scalars: &[f64]) -> Result<Vec<LabeledDataset>> {
    if let Some(bad) = scalars.iter().find(|&&s| !(s > 0.0 && s.is_finite())) {
        return Err(config_err!("sweep multipliers must be positive, got {bad}"));
    }
    Ok(scalars.iter().map(|&s| ds.scaled(s)).collect())
}
