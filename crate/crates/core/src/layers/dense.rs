//! Affine layers and fixed elementwise activations.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::NamedParams;
use crate::autodiff::{Jet, Tape, Var};
use crate::error::{invalid, Error, Result};
use crate::tensor::Tensor;

/// `y = x W + b` with `W: [in, out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Dense {
    pub fn init(in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(invalid("layer dimensions must be positive"));
        }
        let bound = 1.0 / libm::sqrt(in_dim as f64);
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-bound..bound)).collect() };
        let weight = Tensor::new(vec![in_dim, out_dim], draw(in_dim * out_dim))?;
        let bias = Tensor::from_vec(draw(out_dim));
        Ok(Self {
            in_dim,
            out_dim,
            weight,
            bias,
        })
    }

    pub fn identity(dim: usize) -> Self {
        let mut w = vec![0.0; dim * dim];
        for i in 0..dim {
            w[i * dim + i] = 1.0;
        }
        Self {
            in_dim: dim,
            out_dim: dim,
            weight: Tensor::new(vec![dim, dim], w).expect("square"),
            bias: Tensor::zeros(&[dim]),
        }
    }

    pub fn params(&self) -> NamedParams<'_> {
        vec![("weight", &self.weight), ("bias", &self.bias)]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.weight, &mut self.bias]
    }

    pub fn forward(&self, tape: &mut Tape, params: &[Var], x: &Jet) -> Result<Jet> {
        let n = match tape.value(x.value).dims2() {
            Some((n, w)) if w == self.in_dim => n,
            _ => {
                return Err(Error::ShapeMismatch {
                    op: "dense input",
                    lhs: tape.value(x.value).shape().to_vec(),
                    rhs: vec![0, self.in_dim],
                })
            }
        };
        let y = x.matmul(tape, &Jet::constant(params[0]))?;
        let b = tape.broadcast(params[1], [n, self.out_dim])?;
        y.add(tape, &Jet::constant(b))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FixedActivation {
    Tanh,
    Relu,
    Sigmoid,
}

impl FixedActivation {
    pub fn forward(self, tape: &mut Tape, x: &Jet) -> Result<Jet> {
        match self {
            FixedActivation::Tanh => x.tanh(tape),
            FixedActivation::Sigmoid => x.sigmoid(tape),
            FixedActivation::Relu => {
                let mask: Vec<bool> = tape.value(x.value).data().iter().map(|&v| v > 0.0).collect();
                let shape = tape.value(x.value).shape().to_vec();
                let zero = Jet::constant(tape.constant(Tensor::zeros(&shape)));
                Jet::select(tape, &mask, x, &zero)
            }
        }
    }
}
