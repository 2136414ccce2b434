//! Second-order forward-mode jets built out of tape nodes.
//!
//! A [`Jet`] carries a value together with, for each seeded input axis, the
//! first and second (pure) derivative of that value with respect to the
//! axis. Every component is an ordinary tape node, so a loss that mixes
//! values and input derivatives can still be differentiated with respect to
//! the network parameters by a single reverse pass.

use alloc::vec;
use alloc::vec::Vec;

use super::tape::{Tape, Var};
use crate::error::{invalid, Error, Result};
use crate::tensor::Tensor;

/// First and second derivative along one input axis.
#[derive(Clone, Copy, Debug)]
pub struct Partial {
    pub first: Var,
    pub second: Var,
}

#[derive(Clone, Debug)]
pub struct Jet {
    pub value: Var,
    /// Empty when the value does not depend on the input.
    pub partials: Vec<Partial>,
}

/// A function of a batch of inputs that can be evaluated on jets.
pub trait JetFn {
    fn eval(&self, tape: &mut Tape, x: &Jet) -> Result<Jet>;
}

impl<F> JetFn for F
where
    F: Fn(&mut Tape, &Jet) -> Result<Jet>,
{
    fn eval(&self, tape: &mut Tape, x: &Jet) -> Result<Jet> {
        self(tape, x)
    }
}

impl Jet {
    /// A jet with no input dependence.
    pub fn constant(value: Var) -> Self {
        Self {
            value,
            partials: Vec::new(),
        }
    }

    /// Input batch `x` of shape `[n, d]` seeded along each of `axes`.
    pub fn seed(tape: &mut Tape, x: Tensor, axes: &[usize]) -> Result<Self> {
        let (n, d) = x.dims2().ok_or_else(|| invalid("jet seed expects a [n, d] batch"))?;
        let value = tape.constant(x);
        Self::seed_var(tape, value, n, d, axes)
    }

    /// Seed an existing `[n, d]` node (e.g. a differentiable input).
    pub fn seed_var(tape: &mut Tape, value: Var, n: usize, d: usize, axes: &[usize]) -> Result<Self> {
        let zeros = tape.constant(Tensor::zeros(&[n, d]));
        let mut partials = Vec::with_capacity(axes.len());
        for &axis in axes {
            if axis >= d {
                return Err(invalid("seed axis out of range"));
            }
            let mut e = vec![0.0; n * d];
            for i in 0..n {
                e[i * d + axis] = 1.0;
            }
            let first = tape.constant(Tensor::new(vec![n, d], e)?);
            partials.push(Partial { first, second: zeros });
        }
        Ok(Self { value, partials })
    }

    pub fn is_constant(&self) -> bool {
        self.partials.is_empty()
    }

    fn directions(a: &Jet, b: &Jet) -> Result<usize> {
        match (a.partials.len(), b.partials.len()) {
            (0, k) | (k, 0) => Ok(k),
            (k, l) if k == l => Ok(k),
            _ => Err(invalid("jets seeded with different axis counts")),
        }
    }

    /// Apply a linear map to every component.
    pub fn linear(&self, tape: &mut Tape, mut f: impl FnMut(&mut Tape, Var) -> Result<Var>) -> Result<Jet> {
        let value = f(tape, self.value)?;
        let mut partials = Vec::with_capacity(self.partials.len());
        for p in &self.partials {
            partials.push(Partial {
                first: f(tape, p.first)?,
                second: f(tape, p.second)?,
            });
        }
        Ok(Jet { value, partials })
    }

    pub fn neg(&self, tape: &mut Tape) -> Result<Jet> {
        self.linear(tape, |t, v| Ok(t.neg(v)))
    }

    pub fn scale(&self, tape: &mut Tape, c: f64) -> Result<Jet> {
        self.linear(tape, |t, v| Ok(t.scale(v, c)))
    }

    pub fn shift(&self, tape: &mut Tape, c: f64) -> Result<Jet> {
        let value = tape.shift(self.value, c);
        Ok(Jet {
            value,
            partials: self.partials.clone(),
        })
    }

    pub fn broadcast(&self, tape: &mut Tape, shape: [usize; 2]) -> Result<Jet> {
        self.linear(tape, |t, v| t.broadcast(v, shape))
    }

    pub fn gather(&self, tape: &mut Tape, indices: &[usize], shape: &[usize]) -> Result<Jet> {
        self.linear(tape, |t, v| t.gather(v, indices.to_vec(), shape.to_vec()))
    }

    pub fn column(&self, tape: &mut Tape, j: usize) -> Result<Jet> {
        self.linear(tape, |t, v| t.column(v, j))
    }

    pub fn sum(&self, tape: &mut Tape) -> Result<Jet> {
        self.linear(tape, |t, v| Ok(t.sum(v)))
    }

    pub fn mean(&self, tape: &mut Tape) -> Result<Jet> {
        self.linear(tape, |t, v| Ok(t.mean(v)))
    }

    pub fn add(&self, tape: &mut Tape, other: &Jet) -> Result<Jet> {
        self.combine(tape, other, false)
    }

    pub fn sub(&self, tape: &mut Tape, other: &Jet) -> Result<Jet> {
        self.combine(tape, other, true)
    }

    fn combine(&self, tape: &mut Tape, other: &Jet, subtract: bool) -> Result<Jet> {
        let k = Self::directions(self, other)?;
        let op = |t: &mut Tape, a: Var, b: Var| if subtract { t.sub(a, b) } else { t.add(a, b) };
        let value = op(tape, self.value, other.value)?;
        let mut partials = Vec::with_capacity(k);
        for i in 0..k {
            let p = match (self.partials.get(i), other.partials.get(i)) {
                (Some(a), Some(b)) => Partial {
                    first: op(tape, a.first, b.first)?,
                    second: op(tape, a.second, b.second)?,
                },
                (Some(a), None) => {
                    // broadcasting a scalar jet against a constant tensor
                    let shape = tape.value(value).shape().to_vec();
                    let first = broadcast_like(tape, a.first, &shape)?;
                    let second = broadcast_like(tape, a.second, &shape)?;
                    Partial { first, second }
                }
                (None, Some(b)) => {
                    let shape = tape.value(value).shape().to_vec();
                    let mut first = broadcast_like(tape, b.first, &shape)?;
                    let mut second = broadcast_like(tape, b.second, &shape)?;
                    if subtract {
                        first = tape.neg(first);
                        second = tape.neg(second);
                    }
                    Partial { first, second }
                }
                (None, None) => unreachable!(),
            };
            partials.push(p);
        }
        Ok(Jet { value, partials })
    }

    /// Elementwise product (with scalar broadcast).
    pub fn mul(&self, tape: &mut Tape, other: &Jet) -> Result<Jet> {
        self.product(tape, other, |t, a, b| t.mul(a, b))
    }

    /// Matrix product.
    pub fn matmul(&self, tape: &mut Tape, other: &Jet) -> Result<Jet> {
        self.product(tape, other, |t, a, b| t.matmul(a, b))
    }

    // Any bilinear map: (uv)' = u'v + uv', (uv)'' = u''v + 2u'v' + uv''.
    fn product(&self, tape: &mut Tape, other: &Jet, f: impl Fn(&mut Tape, Var, Var) -> Result<Var>) -> Result<Jet> {
        let k = Self::directions(self, other)?;
        let value = f(tape, self.value, other.value)?;
        let mut partials = Vec::with_capacity(k);
        for i in 0..k {
            let p = match (self.partials.get(i), other.partials.get(i)) {
                (Some(a), Some(b)) => {
                    let f1 = f(tape, a.first, other.value)?;
                    let f2 = f(tape, self.value, b.first)?;
                    let first = tape.add(f1, f2)?;
                    let s1 = f(tape, a.second, other.value)?;
                    let s2 = f(tape, a.first, b.first)?;
                    let s2 = tape.scale(s2, 2.0);
                    let s3 = f(tape, self.value, b.second)?;
                    let s = tape.add(s1, s2)?;
                    let second = tape.add(s, s3)?;
                    Partial { first, second }
                }
                (Some(a), None) => Partial {
                    first: f(tape, a.first, other.value)?,
                    second: f(tape, a.second, other.value)?,
                },
                (None, Some(b)) => Partial {
                    first: f(tape, self.value, b.first)?,
                    second: f(tape, self.value, b.second)?,
                },
                (None, None) => unreachable!(),
            };
            partials.push(p);
        }
        Ok(Jet { value, partials })
    }

    /// Elementwise quotient; every denominator must be non-negligible.
    pub fn div(&self, tape: &mut Tape, other: &Jet) -> Result<Jet> {
        if other.is_constant() {
            return self.linear(tape, |t, v| t.div(v, other.value));
        }
        // q = u/v, q' = (u' - q v')/v, q'' = (u'' - 2 q' v' - q v'')/v
        let k = Self::directions(self, other)?;
        let q = tape.div(self.value, other.value)?;
        let mut partials = Vec::with_capacity(k);
        for i in 0..k {
            let b = other.partials[i];
            let qv1 = tape.mul(q, b.first)?;
            let num1 = match self.partials.get(i) {
                Some(a) => tape.sub(a.first, qv1)?,
                None => tape.neg(qv1),
            };
            let first = tape.div(num1, other.value)?;
            let t1 = tape.mul(first, b.first)?;
            let t1 = tape.scale(t1, 2.0);
            let t2 = tape.mul(q, b.second)?;
            let rest = tape.add(t1, t2)?;
            let num2 = match self.partials.get(i) {
                Some(a) => tape.sub(a.second, rest)?,
                None => tape.neg(rest),
            };
            let second = tape.div(num2, other.value)?;
            partials.push(Partial { first, second });
        }
        Ok(Jet { value: q, partials })
    }

    /// Chain rule for an elementwise function with value `y = f(x)`, first
    /// derivative `d1 = f'(x)` and second derivative `d2 = f''(x)`, the
    /// derivative nodes produced lazily by `derivs` only when needed.
    pub fn chain(&self, tape: &mut Tape, y: Var, derivs: impl FnOnce(&mut Tape) -> Result<(Var, Var)>) -> Result<Jet> {
        if self.is_constant() {
            return Ok(Jet::constant(y));
        }
        let (d1, d2) = derivs(tape)?;
        let mut partials = Vec::with_capacity(self.partials.len());
        for p in &self.partials {
            let first = tape.mul(d1, p.first)?;
            let g2 = tape.square(p.first);
            let a = tape.mul(d2, g2)?;
            let b = tape.mul(d1, p.second)?;
            let second = tape.add(a, b)?;
            partials.push(Partial { first, second });
        }
        Ok(Jet { value: y, partials })
    }

    pub fn exp(&self, tape: &mut Tape) -> Result<Jet> {
        let y = tape.exp(self.value);
        self.chain(tape, y, |_| Ok((y, y)))
    }

    pub fn log(&self, tape: &mut Tape) -> Result<Jet> {
        let y = tape.log(self.value)?;
        let x = self.value;
        self.chain(tape, y, |t| {
            let d2 = t.pow(x, -2.0);
            let d2 = t.neg(d2);
            let one = t.scalar(1.0);
            let d1 = t.div(one, x)?;
            Ok((d1, d2))
        })
    }

    pub fn tanh(&self, tape: &mut Tape) -> Result<Jet> {
        let y = tape.tanh(self.value);
        self.chain(tape, y, |t| {
            // 1 - y², -2 y (1 - y²)
            let y2 = t.square(y);
            let d1 = t.neg(y2);
            let d1 = t.shift(d1, 1.0);
            let d2 = t.mul(y, d1)?;
            let d2 = t.scale(d2, -2.0);
            Ok((d1, d2))
        })
    }

    pub fn sin(&self, tape: &mut Tape) -> Result<Jet> {
        let y = tape.sin(self.value);
        let x = self.value;
        self.chain(tape, y, |t| Ok((t.cos(x), t.neg(y))))
    }

    pub fn cos(&self, tape: &mut Tape) -> Result<Jet> {
        let y = tape.cos(self.value);
        let x = self.value;
        self.chain(tape, y, |t| {
            let s = t.sin(x);
            Ok((t.neg(s), t.neg(y)))
        })
    }

    pub fn sigmoid(&self, tape: &mut Tape) -> Result<Jet> {
        let y = tape.sigmoid(self.value);
        self.chain(tape, y, |t| {
            // y (1 - y), y (1 - y)(1 - 2y)
            let om = t.neg(y);
            let om = t.shift(om, 1.0);
            let d1 = t.mul(y, om)?;
            let f = t.scale(y, -2.0);
            let f = t.shift(f, 1.0);
            let d2 = t.mul(d1, f)?;
            Ok((d1, d2))
        })
    }

    /// `x^p` for a fixed real exponent.
    pub fn powf(&self, tape: &mut Tape, p: f64) -> Result<Jet> {
        if p == 0.0 {
            let shape = tape.value(self.value).shape().to_vec();
            return Ok(Jet::constant(tape.constant(Tensor::ones(&shape))));
        }
        if p == 1.0 {
            return Ok(self.clone());
        }
        if p == 2.0 {
            return self.mul(tape, self);
        }
        let y = tape.pow(self.value, p);
        let x = self.value;
        self.chain(tape, y, |t| {
            let d1 = t.pow(x, p - 1.0);
            let d1 = t.scale(d1, p);
            let d2 = t.pow(x, p - 2.0);
            let d2 = t.scale(d2, p * (p - 1.0));
            Ok((d1, d2))
        })
    }

    pub fn square(&self, tape: &mut Tape) -> Result<Jet> {
        self.mul(tape, self)
    }

    /// Elementwise `mask ? a : b`.
    pub fn select(tape: &mut Tape, mask: &[bool], a: &Jet, b: &Jet) -> Result<Jet> {
        let k = Self::directions(a, b)?;
        let value = tape.select(mask, a.value, b.value)?;
        let shape = tape.value(value).shape().to_vec();
        let mut partials = Vec::with_capacity(k);
        for i in 0..k {
            let pick = |t: &mut Tape, j: &Jet, second: bool| -> Result<Var> {
                match j.partials.get(i) {
                    Some(p) => Ok(if second { p.second } else { p.first }),
                    None => Ok(t.constant(Tensor::zeros(&shape))),
                }
            };
            let (af, bf) = (pick(tape, a, false)?, pick(tape, b, false)?);
            let (as_, bs) = (pick(tape, a, true)?, pick(tape, b, true)?);
            partials.push(Partial {
                first: tape.select(mask, af, bf)?,
                second: tape.select(mask, as_, bs)?,
            });
        }
        Ok(Jet { value, partials })
    }

    /// Concatenate along `axis`; constant parts contribute zero derivatives.
    pub fn concat(tape: &mut Tape, parts: &[Jet], axis: usize) -> Result<Jet> {
        let k = parts.iter().map(|p| p.partials.len()).max().unwrap_or(0);
        if parts.iter().any(|p| !p.partials.is_empty() && p.partials.len() != k) {
            return Err(invalid("jets seeded with different axis counts"));
        }
        let values: Vec<Var> = parts.iter().map(|p| p.value).collect();
        let value = tape.concat(&values, axis)?;
        let mut partials = Vec::with_capacity(k);
        for i in 0..k {
            let mut firsts = Vec::with_capacity(parts.len());
            let mut seconds = Vec::with_capacity(parts.len());
            for p in parts {
                match p.partials.get(i) {
                    Some(d) => {
                        firsts.push(d.first);
                        seconds.push(d.second);
                    }
                    None => {
                        let shape = tape.value(p.value).shape().to_vec();
                        let z = tape.constant(Tensor::zeros(&shape));
                        firsts.push(z);
                        seconds.push(z);
                    }
                }
            }
            partials.push(Partial {
                first: tape.concat(&firsts, axis)?,
                second: tape.concat(&seconds, axis)?,
            });
        }
        Ok(Jet { value, partials })
    }
}

fn broadcast_like(tape: &mut Tape, v: Var, shape: &[usize]) -> Result<Var> {
    if tape.value(v).shape() == shape {
        return Ok(v);
    }
    match shape {
        [] | [_] if tape.value(v).len() == shape.iter().product::<usize>() => tape.reshape(v, shape.to_vec()),
        [n, m] => tape.broadcast(v, [*n, *m]),
        _ => {
            let n: usize = shape.iter().product();
            let b = tape.broadcast(v, [n, 1])?;
            tape.reshape(b, shape.to_vec())
        }
    }
}

/// `∂^order F / ∂x_axis^order` at every row of `x`, for a batch function
/// `F: [n, d] -> [n, 1]`.
pub fn input_derivative(f: &impl JetFn, x: &Tensor, order: usize, axis: usize) -> Result<Tensor> {
    if !(order == 1 || order == 2) {
        return Err(Error::BadOrder(order));
    }
    let mut tape = Tape::new();
    let jet = Jet::seed(&mut tape, x.clone(), &[axis])?;
    let out = f.eval(&mut tape, &jet)?;
    let shape = tape.value(out.value).shape().to_vec();
    Ok(match out.partials.first() {
        Some(p) => {
            let v = if order == 1 { p.first } else { p.second };
            tape.value(v).clone()
        }
        None => Tensor::zeros(&shape),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn at(xs: &[f64]) -> Tensor {
        Tensor::column(xs)
    }

    #[test]
    fn sine_derivatives() {
        let f = |t: &mut Tape, x: &Jet| x.sin(t);
        let d2 = input_derivative(&f, &at(&[0.7]), 2, 0).unwrap();
        assert!((d2.data()[0] + libm::sin(0.7)).abs() < 1e-15);
        let g = |t: &mut Tape, x: &Jet| x.cos(t);
        let d1 = input_derivative(&g, &at(&[0.7]), 1, 0).unwrap();
        assert!((d1.data()[0] + libm::sin(0.7)).abs() < 1e-15);
    }

    #[test]
    fn cube_second_derivative() {
        let f = |t: &mut Tape, x: &Jet| x.powf(t, 3.0);
        let d2 = input_derivative(&f, &at(&[2.0]), 2, 0).unwrap();
        assert!((d2.data()[0] - 12.0).abs() < 1e-12);
        let d1 = input_derivative(&f, &at(&[2.0]), 1, 0).unwrap();
        assert!((d1.data()[0] - 12.0).abs() < 1e-12);
    }

    #[test]
    fn tanh_second_derivative_vanishes_at_origin() {
        let f = |t: &mut Tape, x: &Jet| x.tanh(t);
        let d2 = input_derivative(&f, &at(&[0.0]), 2, 0).unwrap();
        assert_eq!(d2.data()[0], 0.0);
    }

    #[test]
    fn order_must_be_one_or_two() {
        let f = |t: &mut Tape, x: &Jet| x.tanh(t);
        assert!(matches!(
            input_derivative(&f, &at(&[0.0]), 3, 0),
            Err(Error::BadOrder(3))
        ));
        assert!(matches!(
            input_derivative(&f, &at(&[0.0]), 0, 0),
            Err(Error::BadOrder(0))
        ));
    }

    #[test]
    fn quotient_and_composition_against_closed_form() {
        // f = exp(x) / (1 + x²)
        let f = |t: &mut Tape, x: &Jet| {
            let e = x.exp(t)?;
            let d = x.square(t)?.shift(t, 1.0)?;
            e.div(t, &d)
        };
        let xs = [-1.3, 0.0, 0.4, 2.0];
        let d1 = input_derivative(&f, &at(&xs), 1, 0).unwrap();
        let d2 = input_derivative(&f, &at(&xs), 2, 0).unwrap();
        for (i, &x) in xs.iter().enumerate() {
            let e = libm::exp(x);
            let u = 1.0 + x * x;
            let e1 = e * (u - 2.0 * x) / (u * u);
            // f'' = e (x⁴ - 4x³ + 8x² - 4x - 1) / u³
            let e2 = e * (x * x * x * x - 4.0 * x * x * x + 8.0 * x * x - 4.0 * x - 1.0) / (u * u * u);
            assert!((d1.data()[i] - e1).abs() < 1e-12 * (1.0 + e1.abs()));
            assert!((d2.data()[i] - e2).abs() < 1e-12 * (1.0 + e2.abs()));
        }
    }

    #[test]
    fn two_axis_seeding_gives_pure_second_derivatives() {
        // f(x, y) = x² y³ → f_xx = 2 y³, f_yy = 6 x² y
        let f = |t: &mut Tape, x: &Jet| {
            let a = x.column(t, 0)?;
            let b = x.column(t, 1)?;
            let a2 = a.square(t)?;
            let b3 = b.powf(t, 3.0)?;
            a2.mul(t, &b3)
        };
        let x = Tensor::new(vec![2, 2], vec![0.5, 1.5, -2.0, 0.7]).unwrap();
        let fxx = input_derivative(&f, &x, 2, 0).unwrap();
        let fyy = input_derivative(&f, &x, 2, 1).unwrap();
        for i in 0..2 {
            let (a, b) = (x.data()[2 * i], x.data()[2 * i + 1]);
            assert!((fxx.data()[i] - 2.0 * b * b * b).abs() < 1e-12);
            assert!((fyy.data()[i] - 6.0 * a * a * b).abs() < 1e-12);
        }
    }

    #[test]
    fn sigmoid_and_log_chain() {
        let f = |t: &mut Tape, x: &Jet| {
            let s = x.sigmoid(t)?;
            s.log(t)
        };
        // d/dx log σ(x) = 1 - σ(x); second = -σ(1-σ)
        let xs = [-0.5, 0.3];
        let d1 = input_derivative(&f, &at(&xs), 1, 0).unwrap();
        let d2 = input_derivative(&f, &at(&xs), 2, 0).unwrap();
        for (i, &x) in xs.iter().enumerate() {
            let s = 1.0 / (1.0 + libm::exp(-x));
            assert!((d1.data()[i] - (1.0 - s)).abs() < 1e-14);
            assert!((d2.data()[i] + s * (1.0 - s)).abs() < 1e-14);
        }
    }
}
