//! Adam and L-BFGS over a flat parameter vector.

mod adam;
mod lbfgs;

pub use adam::{adam_minimize, AdamConfig, AdamState};
pub use lbfgs::{lbfgs_minimize, LbfgsConfig, LbfgsState, Outcome, Status};

use crate::error::{Error, Result};

/// Loss and gradient at a point.
pub trait Objective {
    fn eval(&mut self, x: &[f64]) -> Result<(f64, alloc::vec::Vec<f64>)>;
}

impl<F> Objective for F
where
    F: FnMut(&[f64]) -> Result<(f64, alloc::vec::Vec<f64>)>,
{
    fn eval(&mut self, x: &[f64]) -> Result<(f64, alloc::vec::Vec<f64>)> {
        self(x)
    }
}

pub(crate) fn check_gradient(g: &[f64]) -> Result<()> {
    match g.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::NonFiniteGradient(i)),
        None => Ok(()),
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
