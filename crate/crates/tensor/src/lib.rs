//! Minimal dense-tensor engine with reverse-mode gradients.
//!
//! Values are 64-bit floats in row-major order. A [`Tape`] records one
//! forward pass; [`Tape::backward`] walks it in reverse and accumulates
//! gradients for every leaf marked as a parameter. Shape violations are
//! programming errors and panic with a description.
//!
//! Matrix products parallelize over output rows; each row is an independent
//! sequential reduction, so results are bit-identical for any thread count.

pub mod optim;
pub mod tape;
pub mod tensor;

pub use optim::{AdamW, AdamWConfig};
pub use tape::{Tape, Var};
pub use tensor::Tensor;
