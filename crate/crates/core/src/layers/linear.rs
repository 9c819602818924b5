use crate::error::{shape_err, Result};
use crate::numerics::{gemm, transpose, Tensor};

/// Fully connected map `y = x·Wᵀ (+ b)`. `bias == None` is the zero-bias form.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearLayer {
    /// `[out, in]`
    pub weight: Tensor,
    /// `[out]`
    pub bias: Option<Tensor>,
}

impl LinearLayer {
    pub fn new(inputs: usize, outputs: usize, bias: bool) -> Self {
        LinearLayer {
            weight: Tensor::zeros(vec![outputs, inputs]),
            bias: bias.then(|| Tensor::zeros(vec![outputs])),
        }
    }

    pub fn from_weights(weight: Tensor, bias: Option<Tensor>) -> Result<Self> {
        if weight.rank() != 2 {
            return Err(shape_err!("linear weight must be [out, in], got {}", weight.shape()));
        }
        if let Some(b) = &bias {
            if b.dims() != [weight.dims()[0]] {
                return Err(shape_err!("bias {} does not match weight {}", b.shape(), weight.shape()));
            }
        }
        Ok(LinearLayer { weight, bias })
    }

    pub fn inputs(&self) -> usize {
        self.weight.dims()[1]
    }

    pub fn outputs(&self) -> usize {
        self.weight.dims()[0]
    }

    fn check(&self, x: &Tensor) -> Result<usize> {
        if x.rank() != 2 || x.dims()[1] != self.inputs() {
            return Err(shape_err!("linear layer expects [B, {}], got {}", self.inputs(), x.shape()));
        }
        Ok(x.dims()[0])
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let batch = self.check(x)?;
        let (n_in, n_out) = (self.inputs(), self.outputs());
        let wt = transpose(self.weight.data(), n_out, n_in);
        let mut out = vec![0.0; batch * n_out];
        gemm(batch, n_out, n_in, x.data(), &wt, &mut out);
        if let Some(b) = &self.bias {
            for row in out.chunks_exact_mut(n_out) {
                for (v, bv) in row.iter_mut().zip(b.data()) {
                    *v += bv;
                }
            }
        }
        Tensor::new(vec![batch, n_out], out)
    }

    /// Returns `(d input, [d weight, d bias?])`.
    pub fn backward(&self, x: &Tensor, upstream: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        let batch = self.check(x)?;
        let (n_in, n_out) = (self.inputs(), self.outputs());
        if upstream.dims() != [batch, n_out] {
            return Err(shape_err!("linear upstream must be [{batch}, {n_out}], got {}", upstream.shape()));
        }
        let mut dx = vec![0.0; batch * n_in];
        gemm(batch, n_in, n_out, upstream.data(), self.weight.data(), &mut dx);

        let gt = transpose(upstream.data(), batch, n_out);
        let mut dw = vec![0.0; n_out * n_in];
        gemm(n_out, n_in, batch, &gt, x.data(), &mut dw);

        let mut grads = vec![Tensor::new(vec![n_out, n_in], dw)?];
        if self.bias.is_some() {
            let mut db = vec![0.0; n_out];
            for row in upstream.data().chunks_exact(n_out) {
                for (d, g) in db.iter_mut().zip(row) {
                    *d += g;
                }
            }
            grads.push(Tensor::vector(db));
        }
        Ok((Tensor::new(vec![batch, n_in], dx)?, grads))
    }
}
