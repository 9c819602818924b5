use crate::error::{shape_err, Result};
use crate::numerics::{xcorr2d_backward, xcorr2d_into, ConvGeometry, Tensor};

/// Batched 2D cross-correlation over `[B, C, H, W]` inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer {
    /// `[out_ch, in_ch, kh, kw]`
    pub kernel: Tensor,
    /// `[out_ch]`
    pub bias: Option<Tensor>,
    pub stride: (usize, usize),
    pub padding: (usize, usize),
}

impl ConvLayer {
    pub fn new(
        in_ch: usize,
        out_ch: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        padding: (usize, usize),
        bias: bool,
    ) -> Self {
        ConvLayer {
            kernel: Tensor::zeros(vec![out_ch, in_ch, kernel.0, kernel.1]),
            bias: bias.then(|| Tensor::zeros(vec![out_ch])),
            stride,
            padding,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.kernel.dims()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.kernel.dims()[1]
    }

    pub fn geometry(&self, x: &Tensor) -> Result<ConvGeometry> {
        if x.rank() != 4 {
            return Err(shape_err!("conv layer expects [B, C, H, W], got {}", x.shape()));
        }
        let d = x.dims();
        ConvGeometry::new((d[1], d[2], d[3]), self.kernel.dims(), self.stride, self.padding)
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let g = self.geometry(x)?;
        let batch = x.batch();
        let per_out = g.filters * g.out_len();
        let mut out = vec![0.0; batch * per_out];
        for (b, dst) in out.chunks_exact_mut(per_out.max(1)).enumerate().take(batch) {
            xcorr2d_into(&g, x.row(b), self.kernel.data(), dst);
            if let Some(bias) = &self.bias {
                for (plane, &bv) in dst.chunks_exact_mut(g.out_len()).zip(bias.data()) {
                    plane.iter_mut().for_each(|v| *v += bv);
                }
            }
        }
        Tensor::new(vec![batch, g.filters, g.out_h, g.out_w], out)
    }

    pub fn backward(&self, x: &Tensor, upstream: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        let g = self.geometry(x)?;
        let batch = x.batch();
        if upstream.dims() != [batch, g.filters, g.out_h, g.out_w] {
            return Err(shape_err!("conv upstream has shape {}", upstream.shape()));
        }
        let mut dx = Vec::with_capacity(x.len());
        let mut dk = vec![0.0; self.kernel.len()];
        let mut db = vec![0.0; g.filters];
        for b in 0..batch {
            let up = upstream.row(b);
            let (dxi, dki) = xcorr2d_backward(&g, x.row(b), self.kernel.data(), up);
            dx.extend_from_slice(&dxi);
            dk.iter_mut().zip(&dki).for_each(|(a, v)| *a += v);
            if self.bias.is_some() {
                for (d, plane) in db.iter_mut().zip(up.chunks_exact(g.out_len())) {
                    *d += plane.iter().sum::<f64>();
                }
            }
        }
        let mut grads = vec![Tensor::new(self.kernel.dims().to_vec(), dk)?];
        if self.bias.is_some() {
            grads.push(Tensor::vector(db));
        }
        Ok((Tensor::new(x.dims().to_vec(), dx)?, grads))
    }
}
