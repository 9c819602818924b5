use serde::{Deserialize, Serialize};

use crate::error::{config_err, shape_err, Result};
use crate::numerics::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolKind {
    Max,
    Avg,
}

/// Square-window pooling over `[B, C, H, W]`, no padding.
#[derive(Clone, Debug, PartialEq)]
pub struct PoolLayer {
    pub kind: PoolKind,
    pub window: usize,
    pub stride: usize,
}

struct PoolDims {
    batch: usize,
    channels: usize,
    h: usize,
    w: usize,
    oh: usize,
    ow: usize,
}

impl PoolLayer {
    pub fn new(kind: PoolKind, window: usize, stride: usize) -> Result<Self> {
        if window == 0 || stride == 0 {
            return Err(config_err!("pool window and stride must be at least 1"));
        }
        Ok(PoolLayer { kind, window, stride })
    }

    fn dims(&self, x: &Tensor) -> Result<PoolDims> {
        if x.rank() != 4 {
            return Err(shape_err!("pool layer expects [B, C, H, W], got {}", x.shape()));
        }
        let d = x.dims();
        if d[2] < self.window || d[3] < self.window {
            return Err(shape_err!("pool window {} exceeds input {}x{}", self.window, d[2], d[3]));
        }
        Ok(PoolDims {
            batch: d[0],
            channels: d[1],
            h: d[2],
            w: d[3],
            oh: (d[2] - self.window) / self.stride + 1,
            ow: (d[3] - self.window) / self.stride + 1,
        })
    }

    /// Visits every output cell with its window's flat input offsets in scan order.
    fn for_each_window(&self, p: &PoolDims, mut f: impl FnMut(usize, &mut dyn Iterator<Item = usize>)) {
        let mut out_index = 0;
        for plane in 0..p.batch * p.channels {
            let base = plane * p.h * p.w;
            for oy in 0..p.oh {
                for ox in 0..p.ow {
                    let (y0, x0) = (oy * self.stride, ox * self.stride);
                    let window = self.window;
                    let w = p.w;
                    let mut it = (0..window)
                        .flat_map(move |dy| (0..window).map(move |dx| base + (y0 + dy) * w + x0 + dx));
                    f(out_index, &mut it);
                    out_index += 1;
                }
            }
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let p = self.dims(x)?;
        let data = x.data();
        let mut out = vec![0.0; p.batch * p.channels * p.oh * p.ow];
        let area = (self.window * self.window) as f64;
        self.for_each_window(&p, |o, idx| {
            out[o] = match self.kind {
                PoolKind::Max => idx.map(|i| data[i]).fold(f64::NEG_INFINITY, |m, v| if v > m { v } else { m }),
                PoolKind::Avg => idx.map(|i| data[i]).sum::<f64>() / area,
            };
        });
        Tensor::new(vec![p.batch, p.channels, p.oh, p.ow], out)
    }

    /// Max pooling routes each gradient to the first maximal element of its window.
    pub fn backward(&self, x: &Tensor, upstream: &Tensor) -> Result<Tensor> {
        let p = self.dims(x)?;
        if upstream.dims() != [p.batch, p.channels, p.oh, p.ow] {
            return Err(shape_err!("pool upstream has shape {}", upstream.shape()));
        }
        let data = x.data();
        let up = upstream.data();
        let mut dx = vec![0.0; x.len()];
        let area = (self.window * self.window) as f64;
        self.for_each_window(&p, |o, idx| match self.kind {
            PoolKind::Max => {
                let mut best: Option<usize> = None;
                for i in idx {
                    if best.is_none_or(|b| data[i] > data[b]) {
                        best = Some(i);
                    }
                }
                if let Some(b) = best {
                    dx[b] += up[o];
                }
            }
            PoolKind::Avg => {
                for i in idx {
                    dx[i] += up[o] / area;
                }
            }
        });
        Tensor::new(x.dims().to_vec(), dx)
    }
}
