//! Bias-free 2D cross-correlation, lowered to `gemm` through im2col.

use super::matmul::gemm;
use super::Tensor;
use crate::error::{config_err, shape_err, Result};

/// Resolved sizes of one cross-correlation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub filters: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: (usize, usize),
    pub padding: (usize, usize),
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    pub fn new(
        input: (usize, usize, usize),
        kernel: &[usize],
        stride: (usize, usize),
        padding: (usize, usize),
    ) -> Result<Self> {
        let (channels, height, width) = input;
        if kernel.len() != 4 {
            return Err(shape_err!("kernel must be rank 4, got {:?}", kernel));
        }
        let (filters, kc, kh, kw) = (kernel[0], kernel[1], kernel[2], kernel[3]);
        if kc != channels {
            return Err(shape_err!("kernel expects {kc} channels, input has {channels}"));
        }
        if stride.0 == 0 || stride.1 == 0 {
            return Err(config_err!("convolution stride must be at least 1"));
        }
        if kh == 0 || kw == 0 || kh > height + 2 * padding.0 || kw > width + 2 * padding.1 {
            return Err(shape_err!(
                "kernel {kh}x{kw} does not fit padded input {}x{}",
                height + 2 * padding.0,
                width + 2 * padding.1
            ));
        }
        let out_h = (height + 2 * padding.0 - kh) / stride.0 + 1;
        let out_w = (width + 2 * padding.1 - kw) / stride.1 + 1;
        Ok(ConvGeometry { channels, height, width, filters, kh, kw, stride, padding, out_h, out_w })
    }

    pub fn patch_len(&self) -> usize {
        self.channels * self.kh * self.kw
    }

    pub fn out_len(&self) -> usize {
        self.out_h * self.out_w
    }

    pub fn in_len(&self) -> usize {
        self.channels * self.height * self.width
    }

    /// Source offset for patch row `(c, ky, kx)` at output `(oy, ox)`, or `None` inside padding.
    #[inline]
    fn source(&self, c: usize, ky: usize, kx: usize, oy: usize, ox: usize) -> Option<usize> {
        let y = (oy * self.stride.0 + ky).checked_sub(self.padding.0)?;
        let x = (ox * self.stride.1 + kx).checked_sub(self.padding.1)?;
        (y < self.height && x < self.width).then(|| (c * self.height + y) * self.width + x)
    }

    /// Unfolds one `[C,H,W]` sample into a `[C·kh·kw, H'·W']` patch matrix.
    pub fn im2col(&self, input: &[f64]) -> Vec<f64> {
        let cols = self.out_len();
        let mut out = vec![0.0; self.patch_len() * cols];
        for c in 0..self.channels {
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = (c * self.kh + ky) * self.kw + kx;
                    let dst = &mut out[row * cols..(row + 1) * cols];
                    for oy in 0..self.out_h {
                        for ox in 0..self.out_w {
                            if let Some(src) = self.source(c, ky, kx, oy, ox) {
                                dst[oy * self.out_w + ox] = input[src];
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Adjoint of [`ConvGeometry::im2col`]: folds a patch-matrix gradient back onto the input grid.
    pub fn col2im(&self, cols_grad: &[f64]) -> Vec<f64> {
        let cols = self.out_len();
        let mut out = vec![0.0; self.in_len()];
        for c in 0..self.channels {
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = (c * self.kh + ky) * self.kw + kx;
                    let src = &cols_grad[row * cols..(row + 1) * cols];
                    for oy in 0..self.out_h {
                        for ox in 0..self.out_w {
                            if let Some(dst) = self.source(c, ky, kx, oy, ox) {
                                out[dst] += src[oy * self.out_w + ox];
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// Cross-correlation of one `[C,H,W]` input with a `[K,C,kh,kw]` kernel; no bias.
pub fn xcorr2d(
    input: &Tensor,
    kernel: &Tensor,
    stride: (usize, usize),
    padding: (usize, usize),
) -> Result<Tensor> {
    if input.rank() != 3 {
        return Err(shape_err!("xcorr2d input must be [C,H,W], got {}", input.shape()));
    }
    let d = input.dims();
    let g = ConvGeometry::new((d[0], d[1], d[2]), kernel.dims(), stride, padding)?;
    let mut out = vec![0.0; g.filters * g.out_len()];
    xcorr2d_into(&g, input.data(), kernel.data(), &mut out);
    Tensor::new(vec![g.filters, g.out_h, g.out_w], out)
}

pub(crate) fn xcorr2d_into(g: &ConvGeometry, input: &[f64], kernel: &[f64], out: &mut [f64]) {
    let cols = g.im2col(input);
    gemm(g.filters, g.out_len(), g.patch_len(), kernel, &cols, out);
}

/// Gradients of one sample's cross-correlation: returns `(d input, d kernel)`.
pub(crate) fn xcorr2d_backward(
    g: &ConvGeometry,
    input: &[f64],
    kernel: &[f64],
    upstream: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let cols = g.im2col(input);
    let cols_t = transpose(&cols, g.patch_len(), g.out_len());
    let mut kernel_grad = vec![0.0; g.filters * g.patch_len()];
    gemm(g.filters, g.patch_len(), g.out_len(), upstream, &cols_t, &mut kernel_grad);

    let kernel_t = transpose(kernel, g.filters, g.patch_len());
    let mut cols_grad = vec![0.0; g.patch_len() * g.out_len()];
    gemm(g.patch_len(), g.out_len(), g.filters, &kernel_t, upstream, &mut cols_grad);
    (g.col2im(&cols_grad), kernel_grad)
}

pub(crate) fn transpose(data: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; data.len()];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = data[i * cols + j];
        }
    }
    out
}
