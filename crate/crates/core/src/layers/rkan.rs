//! Edge-wise rational KAN layers.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::{check_finite, guarded_ratio, BoundBasis, NamedParams, Squash, PADE_EPSILON};
use crate::autodiff::{Jet, Tape, Var};
use crate::error::{invalid, Error, Result};
use crate::jacobi::{softplus_inverse, JacobiBasisConfig};
use crate::mapping::{MappingKind, MappingSpec};
use crate::tensor::Tensor;

/// Initial raw value giving `α = β = 1`.
pub(crate) const SHAPE_RAW_INIT: f64 = 1.0;

fn uniform(rng: &mut impl Rng, n: usize, bound: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-bound..bound)).collect()
}

fn check_width(tape: &Tape, x: &Jet, in_dim: usize) -> Result<usize> {
    match tape.value(x.value).dims2() {
        Some((n, w)) if w == in_dim => Ok(n),
        _ => Err(Error::ShapeMismatch {
            op: "layer input",
            lhs: tape.value(x.value).shape().to_vec(),
            rhs: vec![0, in_dim],
        }),
    }
}

/// Rational Jacobi layer: output `o` is
/// `Σ_q Σ_k c[o, q, k] J_k(φ(σ(ξ_q); ι)) + b[o]`.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobiRKanLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub degree: usize,
    pub mapping: MappingKind,
    pub squash: Squash,
    /// `[out, in, degree + 1]`
    pub edge_coeffs: Tensor,
    /// `[out]`
    pub bias: Tensor,
    pub alpha_raw: Tensor,
    pub beta_raw: Tensor,
    pub iota_raw: Tensor,
}

impl JacobiRKanLayer {
    pub fn init(
        in_dim: usize,
        out_dim: usize,
        degree: usize,
        mapping: MappingKind,
        squash: Squash,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(invalid("layer dimensions must be positive"));
        }
        if matches!(mapping, MappingKind::Fractional) {
            return Err(invalid("rational Jacobi layers use an ι-scaled mapping"));
        }
        let bound = 1.0 / libm::sqrt((in_dim * (degree + 1)) as f64);
        let n = out_dim * in_dim * (degree + 1);
        Ok(Self {
            in_dim,
            out_dim,
            degree,
            mapping,
            squash,
            edge_coeffs: Tensor::new(vec![out_dim, in_dim, degree + 1], uniform(rng, n, bound))?,
            bias: Tensor::zeros(&[out_dim]),
            alpha_raw: Tensor::scalar(SHAPE_RAW_INIT),
            beta_raw: Tensor::scalar(SHAPE_RAW_INIT),
            iota_raw: Tensor::scalar(softplus_inverse(1.0)),
        })
    }

    pub fn basis(&self) -> JacobiBasisConfig {
        JacobiBasisConfig::new(self.degree, self.alpha_raw.data()[0], self.beta_raw.data()[0])
    }

    pub fn mapping_spec(&self) -> MappingSpec {
        MappingSpec {
            iota_raw: self.iota_raw.data()[0],
            ..MappingSpec::new(self.mapping)
        }
    }

    pub fn params(&self) -> NamedParams<'_> {
        let mut p = vec![
            ("edge_coeffs", &self.edge_coeffs),
            ("bias", &self.bias),
            ("alpha_raw", &self.alpha_raw),
            ("beta_raw", &self.beta_raw),
        ];
        if self.mapping.uses_iota() {
            p.push(("iota_raw", &self.iota_raw));
        }
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p = vec![
            &mut self.edge_coeffs,
            &mut self.bias,
            &mut self.alpha_raw,
            &mut self.beta_raw,
        ];
        if self.mapping.uses_iota() {
            p.push(&mut self.iota_raw);
        }
        p
    }

    /// `params` are the bound leaves in [`Self::params`] order.
    pub fn forward(&self, tape: &mut Tape, params: &[Var], x: &Jet) -> Result<Jet> {
        let n = check_width(tape, x, self.in_dim)?;
        let (coeffs, bias) = (params[0], params[1]);
        let scale = self.mapping.uses_iota().then(|| params[4]);
        let basis = BoundBasis::bind(tape, params[2], params[3], scale)?;
        let cols = basis.expand(tape, x, self.squash, self.mapping, self.degree)?;
        // [n, (K+1)·ν], column k·ν + q holds J_k(ξ_q)
        let design = Jet::concat(tape, &cols, 1)?;
        let (nu, k1, out) = (self.in_dim, self.degree + 1, self.out_dim);
        let mut idx = Vec::with_capacity(k1 * nu * out);
        for k in 0..k1 {
            for q in 0..nu {
                for o in 0..out {
                    idx.push(o * nu * k1 + q * k1 + k);
                }
            }
        }
        let w = tape.gather(coeffs, idx, vec![k1 * nu, out])?;
        let y = design.matmul(tape, &Jet::constant(w))?;
        let b = tape.broadcast(bias, [n, out])?;
        let y = y.add(tape, &Jet::constant(b))?;
        check_finite(tape, &y, "jacobi-rkan")?;
        Ok(y)
    }
}

/// Padé layer: output `o` is
/// `Σ_q ψ[o, q] · R(N_{o,q}, D_q) + b[o]` with
/// `N_{o,q} = Σ_{i≤K} θᵉ[o, q, i] J_i(s_q)`, `D_q = Σ_{i≤p} θᵈ[q, i] J_i(s_q)`,
/// `s_q = φ(σ(ξ_q))` and `R` the guarded ratio.
#[derive(Debug, Clone, PartialEq)]
pub struct PadeRKanLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    /// Numerator degree `K`.
    pub degree: usize,
    /// Denominator degree `p`.
    pub den_degree: usize,
    pub squash: Squash,
    /// `Identity` for the plain layer, `Fractional` for the frKAN variant.
    pub mapping: MappingKind,
    /// `[out, in, K + 1]`
    pub num_coeffs: Tensor,
    /// `[in, p + 1]`, shared by every output edge of an input.
    pub den_coeffs: Tensor,
    /// `[out, in]`
    pub psi: Tensor,
    /// `[out]`
    pub bias: Tensor,
    pub alpha_raw: Tensor,
    pub beta_raw: Tensor,
    pub gamma_raw: Tensor,
    pub epsilon: f64,
}

impl PadeRKanLayer {
    #[allow(clippy::too_many_arguments)]
    pub fn init(
        in_dim: usize,
        out_dim: usize,
        degree: usize,
        den_degree: usize,
        mapping: MappingKind,
        squash: Squash,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(invalid("layer dimensions must be positive"));
        }
        let bound = 1.0 / libm::sqrt((in_dim * (degree + 1)) as f64);
        let n = out_dim * in_dim * (degree + 1);
        let mut den = vec![0.0; in_dim * (den_degree + 1)];
        for q in 0..in_dim {
            den[q * (den_degree + 1)] = 1.0;
        }
        Ok(Self {
            in_dim,
            out_dim,
            degree,
            den_degree,
            squash,
            mapping,
            num_coeffs: Tensor::new(vec![out_dim, in_dim, degree + 1], uniform(rng, n, bound))?,
            den_coeffs: Tensor::new(vec![in_dim, den_degree + 1], den)?,
            psi: Tensor::ones(&[out_dim, in_dim]),
            bias: Tensor::zeros(&[out_dim]),
            alpha_raw: Tensor::scalar(SHAPE_RAW_INIT),
            beta_raw: Tensor::scalar(SHAPE_RAW_INIT),
            gamma_raw: Tensor::scalar(softplus_inverse(1.0)),
            epsilon: PADE_EPSILON,
        })
    }

    fn scale_param(&self) -> bool {
        self.mapping.uses_iota() || self.mapping == MappingKind::Fractional
    }

    pub fn params(&self) -> NamedParams<'_> {
        let mut p = vec![
            ("num_coeffs", &self.num_coeffs),
            ("den_coeffs", &self.den_coeffs),
            ("psi", &self.psi),
            ("bias", &self.bias),
            ("alpha_raw", &self.alpha_raw),
            ("beta_raw", &self.beta_raw),
        ];
        if self.scale_param() {
            p.push((
                if self.mapping == MappingKind::Fractional {
                    "gamma_raw"
                } else {
                    "iota_raw"
                },
                &self.gamma_raw,
            ));
        }
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let scale = self.scale_param();
        let mut p = vec![
            &mut self.num_coeffs,
            &mut self.den_coeffs,
            &mut self.psi,
            &mut self.bias,
            &mut self.alpha_raw,
            &mut self.beta_raw,
        ];
        if scale {
            p.push(&mut self.gamma_raw);
        }
        p
    }

    pub fn forward(&self, tape: &mut Tape, params: &[Var], x: &Jet) -> Result<Jet> {
        let n = check_width(tape, x, self.in_dim)?;
        let (num, den, psi, bias) = (params[0], params[1], params[2], params[3]);
        let scale = self.scale_param().then(|| params[6]);
        let basis = BoundBasis::bind(tape, params[4], params[5], scale)?;
        let top = self.degree.max(self.den_degree);
        let cols = basis.expand(tape, x, self.squash, self.mapping, top)?;
        let (nu, k1, p1, out) = (self.in_dim, self.degree + 1, self.den_degree + 1, self.out_dim);

        let mut acc: Option<Jet> = None;
        for q in 0..nu {
            let per_degree: Vec<Jet> = cols.iter().map(|c| c.column(tape, q)).collect::<Result<_>>()?;
            // numerator: [n, K+1] · [K+1, out]
            let num_basis = Jet::concat(tape, &per_degree[..k1], 1)?;
            let idx = (0..k1)
                .flat_map(|k| (0..out).map(move |o| o * nu * k1 + q * k1 + k))
                .collect();
            let theta_e = tape.gather(num, idx, vec![k1, out])?;
            let numer = num_basis.matmul(tape, &Jet::constant(theta_e))?;
            // denominator: [n, p+1] · [p+1, 1]
            let den_basis = Jet::concat(tape, &per_degree[..p1], 1)?;
            let theta_d = tape.gather(den, (0..p1).map(|i| q * p1 + i).collect(), vec![p1, 1])?;
            let denom = den_basis.matmul(tape, &Jet::constant(theta_d))?;
            let ratio = if out == 1 {
                guarded_ratio(tape, &numer, &denom, self.epsilon)?
            } else {
                let denom = denom.broadcast(tape, [n, out])?;
                guarded_ratio(tape, &numer, &denom, self.epsilon)?
            };
            let psi_q = tape.gather(psi, (0..out).map(|o| o * nu + q).collect(), vec![1, out])?;
            let psi_q = tape.broadcast(psi_q, [n, out])?;
            let term = ratio.mul(tape, &Jet::constant(psi_q))?;
            acc = Some(match acc {
                Some(a) => a.add(tape, &term)?,
                None => term,
            });
        }
        let b = tape.broadcast(bias, [n, out])?;
        let y = acc.expect("in_dim > 0").add(tape, &Jet::constant(b))?;
        check_finite(tape, &y, "pade-rkan")?;
        Ok(y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jacobi::jacobi_values;
    use crate::layers::guarded_ratio_f64;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bind(tape: &mut Tape, params: &NamedParams<'_>) -> Vec<Var> {
        params.iter().map(|(_, t)| tape.param((*t).clone())).collect()
    }

    fn run_jacobi(layer: &JacobiRKanLayer, x: &Tensor) -> Tensor {
        let mut t = Tape::new();
        let p = bind(&mut t, &layer.params());
        let xj = Jet::constant(t.constant(x.clone()));
        let y = layer.forward(&mut t, &p, &xj).unwrap();
        t.value(y.value).clone()
    }

    fn run_pade(layer: &PadeRKanLayer, x: &Tensor) -> Tensor {
        let mut t = Tape::new();
        let p = bind(&mut t, &layer.params());
        let xj = Jet::constant(t.constant(x.clone()));
        let y = layer.forward(&mut t, &p, &xj).unwrap();
        t.value(y.value).clone()
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(5)
    }

    #[test]
    fn zero_coeffs_give_bias() {
        let mut l = JacobiRKanLayer::init(3, 2, 4, MappingKind::InfAlg, Squash::Identity, &mut rng()).unwrap();
        l.edge_coeffs = Tensor::zeros(l.edge_coeffs.shape());
        l.bias = Tensor::from_vec(vec![0.25, -1.5]);
        let x = Tensor::new(vec![2, 3], vec![0.1, -4.0, 2.0, 9.0, 0.0, -0.3]).unwrap();
        assert_eq!(run_jacobi(&l, &x).data(), &[0.25, -1.5, 0.25, -1.5]);
    }

    #[test]
    fn degree_zero_ignores_inputs() {
        let l = JacobiRKanLayer::init(2, 1, 0, MappingKind::InfLog, Squash::Identity, &mut rng()).unwrap();
        let a = run_jacobi(&l, &Tensor::new(vec![1, 2], vec![0.3, -7.0]).unwrap());
        let b = run_jacobi(&l, &Tensor::new(vec![1, 2], vec![5.0, 1.0]).unwrap());
        assert_eq!(a, b);
        assert!((a.data()[0] - l.edge_coeffs.sum()).abs() < 1e-15);
    }

    #[test]
    fn single_edge_degree_one_alg_mapping() {
        let mut l = JacobiRKanLayer::init(1, 1, 1, MappingKind::InfAlg, Squash::Identity, &mut rng()).unwrap();
        l.alpha_raw = Tensor::scalar(0.0);
        l.beta_raw = Tensor::scalar(0.0);
        l.edge_coeffs = Tensor::new(vec![1, 1, 2], vec![0.0, 1.0]).unwrap();
        let y = run_jacobi(&l, &Tensor::column(&[1.0]));
        assert!((y.data()[0] - core::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn width_mismatch_is_an_error() {
        let l = JacobiRKanLayer::init(2, 1, 2, MappingKind::InfAlg, Squash::Identity, &mut rng()).unwrap();
        let mut t = Tape::new();
        let p = bind(&mut t, &l.params());
        let x = Jet::constant(t.constant(Tensor::zeros(&[4, 3])));
        assert!(matches!(l.forward(&mut t, &p, &x), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn pade_with_unit_denominator_is_polynomial() {
        let l = PadeRKanLayer::init(2, 3, 4, 2, MappingKind::Identity, Squash::Tanh, &mut rng()).unwrap();
        let xs = [0.3, -1.1, 2.5, 0.0, -0.2, 0.7];
        let x = Tensor::new(vec![3, 2], xs.to_vec()).unwrap();
        let y = run_pade(&l, &x);
        for i in 0..3 {
            for o in 0..3 {
                let mut expect = 0.0;
                for q in 0..2 {
                    let j = jacobi_values(4, 1.0, 1.0, libm::tanh(xs[i * 2 + q])).unwrap();
                    let poly: f64 = (0..5).map(|k| l.num_coeffs.data()[o * 10 + q * 5 + k] * j[k]).sum();
                    expect += poly;
                }
                let got = y.data()[i * 3 + o];
                assert!(
                    (got - expect).abs() <= 1e-12 * expect.abs().max(1e-300),
                    "{got} vs {expect}"
                );
            }
        }
    }

    #[test]
    fn pade_zero_numerator_gives_bias() {
        let mut l = PadeRKanLayer::init(2, 2, 3, 3, MappingKind::Identity, Squash::Tanh, &mut rng()).unwrap();
        l.num_coeffs = Tensor::zeros(l.num_coeffs.shape());
        l.den_coeffs = Tensor::new(vec![2, 4], vec![0.3, -0.2, 0.5, 0.1, -0.4, 0.9, 0.2, 0.0]).unwrap();
        l.bias = Tensor::from_vec(vec![1.25, -0.5]);
        let y = run_pade(&l, &Tensor::new(vec![1, 2], vec![0.4, -0.9]).unwrap());
        assert_eq!(y.data(), &[1.25, -0.5]);
    }

    #[test]
    fn pade_degree_one_at_origin() {
        let mut l = PadeRKanLayer::init(1, 1, 1, 1, MappingKind::Identity, Squash::Tanh, &mut rng()).unwrap();
        l.alpha_raw = Tensor::scalar(0.0);
        l.beta_raw = Tensor::scalar(0.0);
        l.num_coeffs = Tensor::new(vec![1, 1, 2], vec![0.0, 1.0]).unwrap();
        let y = run_pade(&l, &Tensor::column(&[0.0]));
        assert_eq!(y.data()[0], 0.0);
    }

    #[test]
    fn pade_matches_scalar_guarded_ratio() {
        let mut l = PadeRKanLayer::init(1, 1, 2, 2, MappingKind::Identity, Squash::Tanh, &mut rng()).unwrap();
        l.den_coeffs = Tensor::new(vec![1, 3], vec![0.1, 0.8, -0.3]).unwrap();
        for &x in &[-2.0, -0.1, 0.6, 3.0] {
            let s = libm::tanh(x);
            let j = jacobi_values(2, 1.0, 1.0, s).unwrap();
            let n: f64 = (0..3).map(|k| l.num_coeffs.data()[k] * j[k]).sum();
            let d: f64 = (0..3).map(|k| l.den_coeffs.data()[k] * j[k]).sum();
            let y = run_pade(&l, &Tensor::column(&[x]));
            assert!((y.data()[0] - guarded_ratio_f64(n, d, l.epsilon)).abs() < 1e-12);
        }
    }

    #[test]
    fn fresh_pade_denominator_is_one() {
        let l = PadeRKanLayer::init(3, 2, 3, 4, MappingKind::Identity, Squash::Tanh, &mut rng()).unwrap();
        for q in 0..3 {
            for &s in &[-1.0, -0.3, 0.0, 0.8, 1.0] {
                let j = jacobi_values(4, 1.0, 1.0, s).unwrap();
                let d: f64 = (0..5).map(|i| l.den_coeffs.data()[q * 5 + i] * j[i]).sum();
                assert_eq!(d, 1.0);
            }
        }
    }

    #[test]
    fn init_is_deterministic() {
        let a = PadeRKanLayer::init(2, 3, 3, 2, MappingKind::Fractional, Squash::Sigmoid, &mut rng()).unwrap();
        let b = PadeRKanLayer::init(2, 3, 3, 2, MappingKind::Fractional, Squash::Sigmoid, &mut rng()).unwrap();
        assert_eq!(a, b);
        assert!(JacobiRKanLayer::init(0, 3, 3, MappingKind::InfAlg, Squash::Identity, &mut rng()).is_err());
    }
}
