//! Jacobi polynomials `J_n^{(α,β)}` with trainable, constrained `α`, `β`.
//!
//! The production path is the three-term recurrence recorded on a [`Tape`],
//! so gradients with respect to `ξ`, `α` and `β` come out of the ordinary
//! backward pass. [`jacobi_explicit`] evaluates the closed Gamma-function sum
//! and is kept as a slow reference.

use alloc::vec::Vec;

use crate::autodiff::{Jet, Tape, Var};
use crate::error::{invalid, Error, Result};
use crate::tensor::Tensor;

/// Lower-bound parameter of the ELU transform applied to `α` and `β`.
pub const KAPPA: f64 = 1.0;

/// `ELU(raw; κ)`: `raw` when positive, `κ(e^raw - 1)` otherwise.
pub fn elu_constrain(raw: f64, kappa: f64) -> Result<f64> {
    if !(kappa > 0.0) {
        return Err(invalid("ELU kappa must be positive"));
    }
    // e^raw underflows for raw below about -37; stay strictly above -κ
    Ok(if raw > 0.0 {
        raw
    } else {
        libm::fmax(kappa * libm::expm1(raw), (-kappa).next_up())
    })
}

/// `log(1 + e^raw)` in the overflow-safe form.
pub fn softplus_constrain(raw: f64) -> f64 {
    libm::fmax(raw, 0.0) + libm::log1p(libm::exp(-libm::fabs(raw)))
}

/// Inverse of [`softplus_constrain`] for a positive target.
pub fn softplus_inverse(y: f64) -> f64 {
    // log(e^y - 1) = y + log(1 - e^-y)
    y + libm::log(-libm::expm1(-y))
}

/// ELU with κ = 1 recorded on the tape. `raw` is a one-element node.
pub fn elu_on_tape(tape: &mut Tape, raw: Var) -> Result<Var> {
    let positive: Vec<bool> = tape.value(raw).data().iter().map(|&r| r > 0.0).collect();
    let zero = tape.constant(Tensor::zeros(tape.value(raw).shape()));
    // exp(min(raw, 0)) - 1, so the unused branch cannot overflow
    let clipped = tape.select(&positive, zero, raw)?;
    let neg = tape.exp(clipped);
    let neg = tape.shift(neg, -1.0);
    let neg = tape.scale(neg, KAPPA);
    let floor = (-KAPPA).next_up();
    let saturated: Vec<bool> = tape.value(neg).data().iter().map(|&v| v < floor).collect();
    let floor = tape.constant(Tensor::full(tape.value(raw).shape(), floor));
    let neg = tape.select(&saturated, floor, neg)?;
    tape.select(&positive, raw, neg)
}

/// SoftPlus recorded on the tape.
pub fn softplus_on_tape(tape: &mut Tape, raw: Var) -> Result<Var> {
    let positive: Vec<bool> = tape.value(raw).data().iter().map(|&r| r > 0.0).collect();
    let zero = tape.constant(Tensor::zeros(tape.value(raw).shape()));
    let neg_raw = tape.neg(raw);
    let abs = tape.select(&positive, raw, neg_raw)?;
    let relu = tape.select(&positive, raw, zero)?;
    let e = tape.neg(abs);
    let e = tape.exp(e);
    let e = tape.shift(e, 1.0);
    let l = tape.log(e)?;
    tape.add(relu, l)
}

/// Degree bound and raw shape parameters of a Jacobi basis.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobiBasisConfig {
    pub degree: usize,
    pub alpha_raw: f64,
    pub beta_raw: f64,
}

impl JacobiBasisConfig {
    pub fn new(degree: usize, alpha_raw: f64, beta_raw: f64) -> Self {
        Self {
            degree,
            alpha_raw,
            beta_raw,
        }
    }

    pub fn alpha(&self) -> f64 {
        elu_constrain(self.alpha_raw, KAPPA).expect("kappa is positive")
    }

    pub fn beta(&self) -> f64 {
        elu_constrain(self.beta_raw, KAPPA).expect("kappa is positive")
    }
}

fn check_params(alpha: f64, beta: f64) -> Result<()> {
    if !(alpha > -1.0) {
        return Err(Error::Domain {
            what: "jacobi alpha",
            value: alpha,
        });
    }
    if !(beta > -1.0) {
        return Err(Error::Domain {
            what: "jacobi beta",
            value: beta,
        });
    }
    Ok(())
}

/// Rising factorial `(a)_m = a (a+1) ... (a+m-1)` = `Γ(a+m)/Γ(a)`.
fn pochhammer(a: f64, m: usize) -> f64 {
    (0..m).fold(1.0, |acc, i| acc * (a + i as f64))
}

fn binomial(n: usize, m: usize) -> f64 {
    (0..m).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, i| acc * i as f64)
}

/// The explicit Gamma-function sum
///
/// `J_n(ξ) = Γ(α+n+1) / (n! Γ(α+β+n+1)) Σ_m C(n,m) Γ(α+β+n+m+1)/Γ(α+m+1) ((ξ-1)/2)^m`.
///
/// The Gamma ratios are formed as rising factorials, which is exact in the
/// degree range used here, and the sum is accumulated in double-double
/// arithmetic so that the alternating terms near `ξ = -1` do not cancel away
/// the low-order bits.
pub fn jacobi_explicit(n: usize, alpha: f64, beta: f64, xi: f64) -> Result<f64> {
    check_params(alpha, beta)?;
    if n == 0 {
        return Ok(1.0);
    }
    let ab = alpha + beta;
    let x = DoubleDouble::from(xi).sub(DoubleDouble::from(1.0)).scale(0.5);
    let mut total = DoubleDouble::from(0.0);
    let mut power = DoubleDouble::from(1.0);
    for m in 0..=n {
        // Γ(α+n+1)/Γ(α+m+1) · Γ(α+β+n+m+1)/Γ(α+β+n+1)
        let coeff = DoubleDouble::from(binomial(n, m))
            .mul(DoubleDouble::pochhammer(alpha + m as f64 + 1.0, n - m))
            .mul(DoubleDouble::pochhammer(ab + n as f64 + 1.0, m));
        total = total.add(coeff.mul(power));
        power = power.mul(x);
    }
    Ok(total.div_f64(factorial(n)).hi)
}

/// `J_n^{(α,β)}(1) = Γ(α+n+1) / (n! Γ(α+1))`.
pub fn jacobi_at_one(n: usize, alpha: f64) -> f64 {
    pochhammer(alpha + 1.0, n) / factorial(n)
}

/// Recurrence coefficients `(A_n, B_n, C_n)` of
/// `J_n = (A_n ξ + B_n) J_{n-1} - C_n J_{n-2}` for `n ≥ 2`.
fn recurrence_coeffs(tape: &mut Tape, alpha: Var, beta: Var, n: usize) -> Result<(Var, Var, Var)> {
    let nf = n as f64;
    let ab = tape.add(alpha, beta)?;
    let c = tape.shift(ab, 2.0 * nf); // 2n+α+β
    let n_ab = tape.shift(ab, nf); // n+α+β
    let c_m2 = tape.shift(c, -2.0);
    let c_m1 = tape.shift(c, -1.0);
    // a1 = 2n (n+α+β)(2n+α+β-2)
    let a1 = tape.mul(n_ab, c_m2)?;
    let a1 = tape.scale(a1, 2.0 * nf);
    // a2 = (2n+α+β-1)(α²-β²) = (2n+α+β-1)(α+β)(α-β)
    let amb = tape.sub(alpha, beta)?;
    let a2 = tape.mul(ab, amb)?;
    let a2 = tape.mul(c_m1, a2)?;
    // a3 = (2n+α+β-2)(2n+α+β-1)(2n+α+β)
    let a3 = tape.mul(c_m2, c_m1)?;
    let a3 = tape.mul(a3, c)?;
    // a4 = 2 (n+α-1)(n+β-1)(2n+α+β)
    let na = tape.shift(alpha, nf - 1.0);
    let nb = tape.shift(beta, nf - 1.0);
    let a4 = tape.mul(na, nb)?;
    let a4 = tape.mul(a4, c)?;
    let a4 = tape.scale(a4, 2.0);
    Ok((tape.div(a3, a1)?, tape.div(a2, a1)?, tape.div(a4, a1)?))
}

/// `J_0 .. J_degree` at the mapped argument `s` (any shape). `alpha` and
/// `beta` are one-element nodes holding the effective (constrained) values.
pub fn basis_on_tape(tape: &mut Tape, alpha: Var, beta: Var, s: &Jet, degree: usize) -> Result<Vec<Jet>> {
    let shape = tape.value(s.value).shape().to_vec();
    let mut out = Vec::with_capacity(degree + 1);
    out.push(Jet::constant(tape.constant(Tensor::ones(&shape))));
    if degree == 0 {
        return Ok(out);
    }
    // J_1 = ((α+β+2) ξ + (α-β)) / 2, always from the closed form
    let ab2 = tape.add(alpha, beta)?;
    let ab2 = tape.shift(ab2, 2.0);
    let slope = tape.scale(ab2, 0.5);
    let amb = tape.sub(alpha, beta)?;
    let offset = tape.scale(amb, 0.5);
    let p1 = s.mul(tape, &Jet::constant(slope))?;
    let p1 = p1.add(tape, &Jet::constant(offset))?;
    out.push(p1);
    for n in 2..=degree {
        let (a, b, c) = recurrence_coeffs(tape, alpha, beta, n)?;
        let lin = s.mul(tape, &Jet::constant(a))?;
        let lin = lin.add(tape, &Jet::constant(b))?;
        let t1 = lin.mul(tape, &out[n - 1])?;
        let t2 = out[n - 2].mul(tape, &Jet::constant(c))?;
        out.push(t1.sub(tape, &t2)?);
    }
    Ok(out)
}

/// All degrees `0..=K` at every `ξ`, as a `[samples, K+1]` tensor.
pub fn jacobi_all_degrees(config: &JacobiBasisConfig, xi: &[f64]) -> Result<Tensor> {
    let mut tape = Tape::new();
    let a_raw = tape.constant(Tensor::scalar(config.alpha_raw));
    let b_raw = tape.constant(Tensor::scalar(config.beta_raw));
    let alpha = elu_on_tape(&mut tape, a_raw)?;
    let beta = elu_on_tape(&mut tape, b_raw)?;
    let s = Jet::constant(tape.constant(Tensor::column(xi)));
    let cols = basis_on_tape(&mut tape, alpha, beta, &s, config.degree)?;
    let vars: Vec<Var> = cols.iter().map(|j| j.value).collect();
    let m = tape.concat(&vars, 1)?;
    Ok(tape.value(m).clone())
}

/// `J_0 .. J_degree` at a single point with fixed effective `α`, `β`,
/// evaluated by the plain `f64` recurrence.
pub fn jacobi_values(degree: usize, alpha: f64, beta: f64, xi: f64) -> Result<Vec<f64>> {
    check_params(alpha, beta)?;
    let mut out = Vec::with_capacity(degree + 1);
    out.push(1.0);
    if degree >= 1 {
        out.push(0.5 * ((alpha + beta + 2.0) * xi + (alpha - beta)));
    }
    for n in 2..=degree {
        let nf = n as f64;
        let c = 2.0 * nf + alpha + beta;
        let a1 = 2.0 * nf * (nf + alpha + beta) * (c - 2.0);
        let a2 = (c - 1.0) * (alpha + beta) * (alpha - beta);
        let a3 = (c - 2.0) * (c - 1.0) * c;
        let a4 = 2.0 * (nf + alpha - 1.0) * (nf + beta - 1.0) * c;
        let v = ((a3 * xi + a2) * out[n - 1] - a4 * out[n - 2]) / a1;
        out.push(v);
    }
    Ok(out)
}

/// Unevaluated sum `hi + lo` with `|lo| ≤ ulp(hi)/2`.
#[derive(Clone, Copy, Debug)]
struct DoubleDouble {
    hi: f64,
    lo: f64,
}

impl From<f64> for DoubleDouble {
    fn from(x: f64) -> Self {
        Self { hi: x, lo: 0.0 }
    }
}

impl DoubleDouble {
    fn two_sum(a: f64, b: f64) -> Self {
        let s = a + b;
        let bb = s - a;
        let err = (a - (s - bb)) + (b - bb);
        Self { hi: s, lo: err }
    }

    fn two_prod(a: f64, b: f64) -> Self {
        let p = a * b;
        Self {
            hi: p,
            lo: libm::fma(a, b, -p),
        }
    }

    fn renorm(hi: f64, lo: f64) -> Self {
        let s = hi + lo;
        Self {
            hi: s,
            lo: lo - (s - hi),
        }
    }

    fn add(self, o: Self) -> Self {
        let s = Self::two_sum(self.hi, o.hi);
        Self::renorm(s.hi, s.lo + self.lo + o.lo)
    }

    fn sub(self, o: Self) -> Self {
        self.add(Self { hi: -o.hi, lo: -o.lo })
    }

    fn mul(self, o: Self) -> Self {
        let p = Self::two_prod(self.hi, o.hi);
        Self::renorm(p.hi, p.lo + self.hi * o.lo + self.lo * o.hi)
    }

    fn scale(self, c: f64) -> Self {
        self.mul(Self::from(c))
    }

    fn div_f64(self, d: f64) -> Self {
        let q1 = self.hi / d;
        let r = self.sub(Self::two_prod(q1, d));
        let q2 = r.hi / d;
        Self::renorm(q1, q2)
    }

    fn pochhammer(a: f64, m: usize) -> Self {
        (0..m).fold(Self::from(1.0), |acc, i| acc.mul(Self::two_sum(a, i as f64)))
    }
}
