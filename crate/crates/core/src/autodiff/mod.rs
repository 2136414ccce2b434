//! Reverse-mode automatic differentiation with forward-mode jets for input
//! derivatives up to second order.

mod jet;
mod tape;

pub use jet::{input_derivative, Jet, JetFn, Partial};
pub use tape::{Gradients, OpKind, Tape, Var, MIN_DENOMINATOR};
