#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod datasets;
pub mod error;
pub mod geometry;
pub mod io;
pub mod layers;
pub mod network;
pub mod ntk;
pub mod numerics;
pub mod training;
pub mod verify;

pub use error::{Error, Result};
pub use network::{Network, Prediction};
pub use numerics::{Shape, Tensor};
