use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::error::{shape_err, Result};
use crate::layers::Mode;
use crate::network::Network;
use crate::numerics::Tensor;
use crate::training::head_classes;

/// Activation threshold convention recorded with every certificate.
pub const ZERO_THRESHOLD_CONVENTION: &str = "site activated iff pre-activation > 0; exactly 0 counts as deactivated";

/// Neural activation pattern: one bit per ReLU site in canonical order.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Nap {
    words: Vec<u64>,
    site_count: usize,
}

impl Nap {
    pub fn from_pre_activations(pre: &[f64]) -> Nap {
        let mut words = vec![0u64; pre.len().div_ceil(64)];
        for (i, &v) in pre.iter().enumerate() {
            if v > 0.0 {
                words[i / 64] |= 1 << (i % 64);
            }
        }
        Nap { words, site_count: pre.len() }
    }

    pub fn from_bits(bits: &[bool]) -> Nap {
        let pre: Vec<f64> = bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        Nap::from_pre_activations(&pre)
    }

    pub fn site_count(&self) -> usize {
        self.site_count
    }

    pub fn bit(&self, i: usize) -> bool {
        assert!(i < self.site_count, "site {i} out of {}", self.site_count);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn bits(&self) -> Vec<bool> {
        (0..self.site_count).map(|i| self.bit(i)).collect()
    }

    /// Number of activated sites (|A|).
    pub fn active_count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Sites that differ between two patterns of equal length.
    pub fn hamming(&self, other: &Nap) -> usize {
        assert_eq!(self.site_count, other.site_count);
        self.words.iter().zip(&other.words).map(|(a, b)| (a ^ b).count_ones() as usize).sum()
    }

    /// `0`/`1` string, site 0 first.
    pub fn to_bit_string(&self) -> String {
        (0..self.site_count).map(|i| if self.bit(i) { '1' } else { '0' }).collect()
    }

    pub fn parse_bit_string(s: &str) -> Option<Nap> {
        let bits: Option<Vec<bool>> = s
            .chars()
            .map(|c| match c {
                '0' => Some(false),
                '1' => Some(true),
                _ => None,
            })
            .collect();
        bits.map(|b| Nap::from_bits(&b))
    }

    /// SHA-256 of the site count and packed bits.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.site_count as u64).to_le_bytes());
        for w in &self.words {
            h.update(w.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

impl fmt::Debug for Nap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Nap({})", self.to_bit_string())
    }
}

impl Serialize for Nap {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_bit_string())
    }
}

impl<'de> Deserialize<'de> for Nap {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Nap, D::Error> {
        let s = String::deserialize(d)?;
        Nap::parse_bit_string(&s).ok_or_else(|| serde::de::Error::custom("NAP must be a string of 0 and 1"))
    }
}

/// NAP of one input shaped like the network input.
pub fn extract_nap(net: &Network, x: &Tensor) -> Result<Nap> {
    Ok(Nap::from_pre_activations(&net.pre_activations(x)?))
}

/// NAP together with the smallest pre-activation magnitude, the distance to the
/// nearest region boundary along that coordinate.
pub fn extract_nap_with_margin(net: &Network, x: &Tensor) -> Result<(Nap, f64)> {
    let pre = net.pre_activations(x)?;
    let margin = pre.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    Ok((Nap::from_pre_activations(&pre), margin))
}

/// Predicted class and NAP for one point.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub class: usize,
    pub nap: Nap,
}

const CHUNK: usize = 256;

/// Class and NAP of every sample of `[B, input…]`, in one forward pass per chunk.
pub fn evaluate_points(net: &Network, points: &Tensor) -> Result<Vec<Evaluation>> {
    if points.dims().get(1..) != Some(net.input_shape.as_slice()) {
        return Err(shape_err!("points {} do not match network input {:?}", points.shape(), net.input_shape));
    }
    let n = points.batch();
    let mut out = Vec::with_capacity(n);
    for start in (0..n).step_by(CHUNK) {
        let idx: Vec<usize> = (start..(start + CHUNK).min(n)).collect();
        let chunk = points.select_rows(&idx);
        let mut rows: Vec<Vec<f64>> = vec![Vec::new(); idx.len()];
        let logits = net.forward_probed(&chunk, Mode::Eval, &mut |t| {
            for (b, row) in rows.iter_mut().enumerate() {
                row.extend_from_slice(t.row(b));
            }
        })?;
        let classes = head_classes(&logits);
        out.extend(classes.into_iter().zip(rows).map(|(class, pre)| Evaluation { class, nap: Nap::from_pre_activations(&pre) }));
    }
    Ok(out)
}
