//! Boundary-aware feature propagation.
//!
//! * [`tensor`]: dense tensors with explicit vector-Jacobian products, the
//!   loss and the optimizer.
//! * [`labels`]: boundary-class ground truth and trimap bands.
//! * [`scan`]: row/column (UAG) scans with boundary gating, their fusion and
//!   backward passes, and the pixel-by-pixel (DAG) reference scan.
//! * [`confidence`]: boundary confidence and the propagation gate.
//! * [`harness`]: synthetic scenes, a toy model, training and evaluation.
//! * [`gradcheck`]: finite-difference checks of every backward pass.

pub mod confidence;
mod error;
pub mod exec;
pub mod gradcheck;
pub mod harness;
pub mod labels;
mod real;
pub mod scan;
pub mod tensor;

pub use error::{Error, Result};
pub use real::{DType, Real};
pub use tensor::Tensor;
