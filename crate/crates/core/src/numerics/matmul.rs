//! Deterministic dense matrix product.
//!
//! Every output element is accumulated as `((0 + a0*b0) + a1*b1) + ...` in
//! increasing inner index, whatever the tiling. The result is therefore
//! bit-identical to the textbook triple loop; tiling only changes speed.

use super::Tensor;
use crate::error::{shape_err, Result};

const MR: usize = 4;
const NR: usize = 8;

/// `a · b` for rank-2 tensors.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rank() != 2 || b.rank() != 2 {
        return Err(shape_err!("matmul needs rank-2 operands, got {} and {}", a.shape(), b.shape()));
    }
    let (m, k) = (a.dims()[0], a.dims()[1]);
    let (k2, n) = (b.dims()[0], b.dims()[1]);
    if k != k2 {
        return Err(shape_err!("matmul inner dimensions differ: {} vs {}", a.shape(), b.shape()));
    }
    let mut out = vec![0.0; m * n];
    gemm(m, n, k, a.data(), b.data(), &mut out);
    Tensor::new(vec![m, n], out)
}

/// `c = a · b` with row-major `a: m×k`, `b: k×n`, `c: m×n`. `c` is overwritten.
pub fn gemm(m: usize, n: usize, k: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.fill(0.0);
        return;
    }

    let n_full = n - n % NR;
    let m_full = m - m % MR;
    let mut panel = vec![0.0; k * NR];

    for j0 in (0..n_full).step_by(NR) {
        for p in 0..k {
            panel[p * NR..(p + 1) * NR].copy_from_slice(&b[p * n + j0..p * n + j0 + NR]);
        }
        for i0 in (0..m_full).step_by(MR) {
            let tile = micro_kernel(&a[i0 * k..(i0 + MR) * k], k, &panel);
            for (r, row) in tile.iter().enumerate() {
                c[(i0 + r) * n + j0..(i0 + r) * n + j0 + NR].copy_from_slice(row);
            }
        }
        for i in m_full..m {
            let arow = &a[i * k..(i + 1) * k];
            let mut acc = [0.0f64; NR];
            for (p, &av) in arow.iter().enumerate() {
                let bp = &panel[p * NR..(p + 1) * NR];
                for q in 0..NR {
                    acc[q] += av * bp[q];
                }
            }
            c[i * n + j0..i * n + j0 + NR].copy_from_slice(&acc);
        }
    }

    if n_full < n {
        // Right edge: row-by-row axpy form, still increasing inner index per element.
        let w = n - n_full;
        let mut acc = vec![0.0; w];
        for i in 0..m {
            acc.fill(0.0);
            for p in 0..k {
                let av = a[i * k + p];
                let brow = &b[p * n + n_full..p * n + n];
                for q in 0..w {
                    acc[q] += av * brow[q];
                }
            }
            c[i * n + n_full..i * n + n].copy_from_slice(&acc);
        }
    }
}

#[inline(always)]
fn micro_kernel(a_rows: &[f64], k: usize, panel: &[f64]) -> [[f64; NR]; MR] {
    let mut acc = [[0.0f64; NR]; MR];
    let (r0, rest) = a_rows.split_at(k);
    let (r1, rest) = rest.split_at(k);
    let (r2, r3) = rest.split_at(k);
    for p in 0..k {
        let bp: &[f64; NR] = panel[p * NR..(p + 1) * NR].try_into().unwrap();
        let av = [r0[p], r1[p], r2[p], r3[p]];
        for r in 0..MR {
            for q in 0..NR {
                acc[r][q] += av[r] * bp[q];
            }
        }
    }
    acc
}
