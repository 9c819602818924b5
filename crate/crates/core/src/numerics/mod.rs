//! Dense `f64` tensor arithmetic shared by every other module.

mod conv;
mod matmul;
mod reduce;
mod tensor;

pub use conv::{xcorr2d, ConvGeometry};
pub(crate) use conv::{transpose, xcorr2d_backward, xcorr2d_into};
pub use matmul::{gemm, matmul};
pub use reduce::{reduce, ReduceKind};
pub use tensor::{argmax, Shape, Tensor};
