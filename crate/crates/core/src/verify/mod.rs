//! Activation patterns, robustness certificates, same-pattern search and zero-input fairness.

mod certify;
mod nap;

pub use certify::{
    certify_convex, certify_directional, certify_interpolation, lambda_grid, replay, simplex_weights, Certificate,
    CertificateKind, CertificateParams, Check, Counterexample, Verdict, Witness,
};
pub use nap::{evaluate_points, extract_nap, extract_nap_with_margin, Evaluation, Nap, ZERO_THRESHOLD_CONVENTION};

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::datasets::LabeledDataset;
use crate::error::{shape_err, Result};
use crate::io::encode_pgm;
use crate::network::{entropy, softmax, Network};
use crate::numerics::{argmax, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NapPair {
    pub first: usize,
    pub second: usize,
    pub first_class: usize,
    pub second_class: usize,
    pub nap_digest: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NapSearch {
    pub pairs: Vec<NapPair>,
    pub distinct_patterns: usize,
    /// group size → number of patterns shared by exactly that many inputs
    pub group_histogram: BTreeMap<usize, usize>,
    /// indices of every group with at least two members, by first index
    pub groups: Vec<Vec<usize>>,
}

/// Groups inputs by exact NAP and lists up to `limit` pairs within groups,
/// optionally only pairs with equal predictions.
pub fn search_same_nap_pairs(net: &Network, ds: &LabeledDataset, same_class_required: bool, limit: usize) -> Result<NapSearch> {
    let evals = if ds.is_empty() { Vec::new() } else { evaluate_points(net, &ds.inputs)? };
    let mut by_nap: HashMap<&Nap, Vec<usize>> = HashMap::new();
    for (i, e) in evals.iter().enumerate() {
        by_nap.entry(&e.nap).or_default().push(i);
    }
    let mut group_histogram = BTreeMap::new();
    for members in by_nap.values() {
        *group_histogram.entry(members.len()).or_insert(0) += 1;
    }
    let distinct_patterns = by_nap.len();
    let mut groups: Vec<Vec<usize>> = by_nap.into_values().filter(|g| g.len() > 1).collect();
    groups.sort_by_key(|g| g[0]);

    let mut pairs = Vec::new();
    'outer: for group in &groups {
        for (a, &i) in group.iter().enumerate() {
            for &j in &group[a + 1..] {
                if pairs.len() >= limit {
                    break 'outer;
                }
                let (ci, cj) = (evals[i].class, evals[j].class);
                if same_class_required && ci != cj {
                    continue;
                }
                pairs.push(NapPair { first: i, second: j, first_class: ci, second_class: cj, nap_digest: evals[i].nap.digest() });
            }
        }
    }
    Ok(NapSearch { pairs, distinct_patterns, group_histogram, groups })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub network_digest: String,
    pub zero_bias: bool,
    pub logits: Vec<f64>,
    pub distribution: Vec<f64>,
    /// `max_c |p_c − 1/|C||`
    pub max_deviation: f64,
    /// natural-log entropy of the distribution
    pub entropy: f64,
    pub predicted_class: usize,
}

/// Softmax output for the all-zero input.
pub fn fairness_zero_image(net: &Network) -> Result<FairnessReport> {
    let zero = Tensor::zeros(net.input_shape.clone());
    let logits = net.logits(&zero)?.into_data();
    let distribution = softmax(&logits);
    let uniform = 1.0 / distribution.len() as f64;
    let max_deviation = distribution.iter().fold(0.0f64, |m, p| m.max((p - uniform).abs()));
    Ok(FairnessReport {
        network_digest: net.digest(),
        zero_bias: net.zero_bias && net.has_no_bias(),
        predicted_class: argmax(&logits),
        entropy: entropy(&distribution),
        logits,
        distribution,
        max_deviation,
    })
}

/// Grayscale strip of `x1`, the `λ`-interpolant and `x2`, each `rows × cols`, separated by a one-pixel gap.
pub fn interpolation_strip_pgm(x1: &Tensor, x2: &Tensor, lambda: f64, rows: usize, cols: usize) -> Result<Vec<u8>> {
    if x1.len() != rows * cols || x2.len() != rows * cols {
        return Err(shape_err!("images of {} and {} values do not fit {rows}x{cols}", x1.len(), x2.len()));
    }
    let mid = x1.zip_map(x2, |a, b| lambda * a + (1.0 - lambda) * b)?;
    let width = 3 * cols + 2;
    let mut pixels = vec![1.0; width * rows];
    for (k, img) in [x1, &mid, x2].into_iter().enumerate() {
        for r in 0..rows {
            for c in 0..cols {
                pixels[r * width + k * (cols + 1) + c] = img.data()[r * cols + c];
            }
        }
    }
    Ok(encode_pgm(width, rows, &pixels))
}
