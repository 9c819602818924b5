use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReduceKind {
    Max,
    Mean,
    Sum,
}

/// Reduces `t` over `axes`, keeping the remaining axes in order.
///
/// Reducing every axis yields a `[1]` tensor. Elements are folded in
/// row-major input order, so results do not depend on the axis list order.
pub fn reduce(t: &Tensor, kind: ReduceKind, axes: &[usize]) -> Result<Tensor> {
    let rank = t.rank();
    let mut reduced = vec![false; rank];
    for &axis in axes {
        if axis >= rank {
            return Err(Error::InvalidAxis { axis, rank });
        }
        reduced[axis] = true;
    }
    let dims = t.dims();
    let kept: Vec<usize> = (0..rank).filter(|&a| !reduced[a]).map(|a| dims[a]).collect();
    let out_dims = if kept.is_empty() { vec![1] } else { kept };
    let out_len: usize = out_dims.iter().product();
    let count: usize = (0..rank).filter(|&a| reduced[a]).map(|a| dims[a]).product();

    // Output stride contributed by each input axis (0 for reduced axes).
    let mut out_stride = vec![0usize; rank];
    let mut acc = 1;
    for a in (0..rank).rev() {
        if !reduced[a] {
            out_stride[a] = acc;
            acc *= dims[a];
        }
    }

    let init = match kind {
        ReduceKind::Max => f64::NEG_INFINITY,
        ReduceKind::Mean | ReduceKind::Sum => 0.0,
    };
    let mut out = vec![init; out_len];
    let mut index = vec![0usize; rank];
    for &v in t.data() {
        let o: usize = index.iter().zip(&out_stride).map(|(i, s)| i * s).sum();
        match kind {
            ReduceKind::Max => {
                if v > out[o] {
                    out[o] = v;
                }
            }
            ReduceKind::Mean | ReduceKind::Sum => out[o] += v,
        }
        for a in (0..rank).rev() {
            index[a] += 1;
            if index[a] < dims[a] {
                break;
            }
            index[a] = 0;
        }
    }
    if kind == ReduceKind::Mean {
        let n = count as f64;
        out.iter_mut().for_each(|v| *v /= n);
    }
    Tensor::new(out_dims, out)
}
