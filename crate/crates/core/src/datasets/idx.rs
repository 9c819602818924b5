//! IDX (MNIST-family) readers and writers.

use std::fs;
use std::path::{Path, PathBuf};

use super::{LabeledDataset, Normalization};
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::numerics::Tensor;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::Format(format!("{what}: header truncated")))
}

/// Parses an IDX3 image file into `(count, rows, cols, pixels)`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, &[u8])> {
    let magic = be_u32(bytes, 0, "images")?;
    if magic != IMAGES_MAGIC {
        return Err(Error::Format(format!("images: magic {magic:#010x}, expected {IMAGES_MAGIC:#010x}")));
    }
    let count = be_u32(bytes, 4, "images")? as usize;
    let rows = be_u32(bytes, 8, "images")? as usize;
    let cols = be_u32(bytes, 12, "images")? as usize;
    let expected = count
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or_else(|| Error::Format("images: size overflow".into()))?;
    let body = &bytes[16..];
    if body.len() != expected {
        return Err(Error::Format(format!("images: expected {expected} pixel bytes, found {}", body.len())));
    }
    Ok((count, rows, cols, body))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<&[u8]> {
    let magic = be_u32(bytes, 0, "labels")?;
    if magic != LABELS_MAGIC {
        return Err(Error::Format(format!("labels: magic {magic:#010x}, expected {LABELS_MAGIC:#010x}")));
    }
    let count = be_u32(bytes, 4, "labels")? as usize;
    let body = &bytes[8..];
    if body.len() != count {
        return Err(Error::Format(format!("labels: expected {count} bytes, found {}", body.len())));
    }
    Ok(body)
}

/// Loads an image/label IDX pair; pixels are divided by 255, no centering.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let images = fs::read(images_path)?;
    let labels = fs::read(labels_path)?;
    decode_idx(&images, &labels)
}

pub fn decode_idx(images: &[u8], labels: &[u8]) -> Result<LabeledDataset> {
    let (count, rows, cols, pixels) = parse_idx_images(images)?;
    let labels = parse_idx_labels(labels)?;
    if labels.len() != count {
        return Err(Error::Format(format!("{count} images but {} labels", labels.len())));
    }
    let inputs = Tensor::new(vec![count, rows, cols], pixels.iter().map(|&p| p as f64 / 255.0).collect())?;
    let labels: Vec<usize> = labels.iter().map(|&l| l as usize).collect();
    let class_count = labels.iter().map(|&l| l + 1).max().unwrap_or(0).max(10);
    LabeledDataset::new(inputs, labels, class_count, Normalization { scale: 1.0 / 255.0, shift: 0.0 })
}

pub fn encode_idx_images(count: usize, rows: usize, cols: usize, pixels: &[u8]) -> Vec<u8> {
    assert_eq!(pixels.len(), count * rows * cols);
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IMAGES_MAGIC, count as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Writes a `[N, rows, cols]` dataset with pixels in `[0, 1]` back to IDX, rounding to bytes.
pub fn write_idx(ds: &LabeledDataset, images_path: &Path, labels_path: &Path) -> Result<()> {
    let d = ds.inputs.dims();
    if d.len() != 3 {
        return Err(crate::error::shape_err!("IDX export needs [N, rows, cols] inputs, got {}", ds.inputs.shape()));
    }
    let pixels: Vec<u8> = ds.inputs.data().iter().map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8).collect();
    let labels: Vec<u8> = ds.labels.iter().map(|&l| l as u8).collect();
    write_atomic(images_path, &encode_idx_images(d[0], d[1], d[2], &pixels))?;
    write_atomic(labels_path, &encode_idx_labels(&labels))
}

/// Standard file names inside an MNIST-layout directory.
pub struct MnistFiles {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
}

impl MnistFiles {
    pub fn in_dir(dir: &Path) -> Self {
        MnistFiles {
            train_images: dir.join("train-images-idx3-ubyte"),
            train_labels: dir.join("train-labels-idx1-ubyte"),
            test_images: dir.join("t10k-images-idx3-ubyte"),
            test_labels: dir.join("t10k-labels-idx1-ubyte"),
        }
    }

    pub fn all(&self) -> [&Path; 4] {
        [&self.train_images, &self.train_labels, &self.test_images, &self.test_labels]
    }
}

/// Loads `(train, test)` from a directory holding the four standard IDX files.
pub fn load_mnist_dir(dir: impl AsRef<Path>) -> Result<(LabeledDataset, LabeledDataset)> {
    let files = MnistFiles::in_dir(dir.as_ref());
    Ok((load_idx(&files.train_images, &files.train_labels)?, load_idx(&files.test_images, &files.test_labels)?))
}
