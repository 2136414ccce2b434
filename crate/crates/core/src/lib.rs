//! Rational Kolmogorov-Arnold networks.
//!
//! The crate is `no_std` with `alloc`. It contains a small reverse-mode
//! autodiff tape over dense `f64` tensors, forward-mode jets for first and
//! second input derivatives, Jacobi polynomial bases with trainable
//! `alpha`/`beta`, the rational domain mappings, the Padé and rational
//! Jacobi layer families, Adam and L-BFGS, and the regression and
//! physics-informed training harnesses.
//!
//! IO, timing, config files and the command line live in the `rkan` crate.

#![no_std]
// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub mod autodiff;
pub mod error;
pub mod experiments;
pub mod gradcheck;
pub mod jacobi;
pub mod layers;
pub mod mapping;
pub mod optim;
pub mod quadrature;
pub mod tensor;

pub use autodiff::{Gradients, Jet, Tape, Var};
pub use error::{Error, Result};
pub use tensor::Tensor;
