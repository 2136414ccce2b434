//! Shared-coefficient rational activation, applied elementwise.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::rkan::SHAPE_RAW_INIT;
use super::{check_finite, guarded_ratio, BoundBasis, Family, NamedParams, Squash, PADE_EPSILON};
use crate::autodiff::{Jet, Tape, Var};
use crate::error::{invalid, Result};
use crate::jacobi::softplus_inverse;
use crate::mapping::MappingKind;
use crate::tensor::Tensor;

/// `f(x) = Σ_k c_k J_k(s(x))` (Jacobi family) or the guarded ratio of two
/// such sums (Padé family), with one coefficient vector shared by every
/// unit.
#[derive(Debug, Clone, PartialEq)]
pub struct RationalActivation {
    pub family: Family,
    pub degree: usize,
    pub squash: Squash,
    pub mapping: MappingKind,
    /// `[K + 1]`
    pub num: Tensor,
    /// `[p + 1]`, empty for the Jacobi family.
    pub den: Tensor,
    pub alpha_raw: Tensor,
    pub beta_raw: Tensor,
    /// `ι_raw` or `γ_raw`, depending on the mapping.
    pub scale_raw: Tensor,
    pub epsilon: f64,
}

impl RationalActivation {
    pub fn init(
        family: Family,
        degree: usize,
        mapping: MappingKind,
        squash: Squash,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let bound = 1.0 / libm::sqrt((degree + 1) as f64);
        let num = (0..=degree).map(|_| rng.random_range(-bound..bound)).collect();
        let den = match family {
            Family::Jacobi => {
                if mapping == MappingKind::Fractional {
                    return Err(invalid("rational Jacobi activations use an ι-scaled mapping"));
                }
                Vec::new()
            }
            Family::Pade { den_degree } => {
                let mut d = vec![0.0; den_degree + 1];
                d[0] = 1.0;
                d
            }
        };
        Ok(Self {
            family,
            degree,
            squash,
            mapping,
            num: Tensor::from_vec(num),
            den: Tensor::from_vec(den),
            alpha_raw: Tensor::scalar(SHAPE_RAW_INIT),
            beta_raw: Tensor::scalar(SHAPE_RAW_INIT),
            scale_raw: Tensor::scalar(softplus_inverse(1.0)),
            epsilon: PADE_EPSILON,
        })
    }

    fn has_scale(&self) -> bool {
        self.mapping.uses_iota() || self.mapping == MappingKind::Fractional
    }

    fn is_pade(&self) -> bool {
        matches!(self.family, Family::Pade { .. })
    }

    pub fn params(&self) -> NamedParams<'_> {
        let mut p = vec![("num", &self.num)];
        if self.is_pade() {
            p.push(("den", &self.den));
        }
        p.push(("alpha_raw", &self.alpha_raw));
        p.push(("beta_raw", &self.beta_raw));
        if self.has_scale() {
            p.push((
                if self.mapping == MappingKind::Fractional {
                    "gamma_raw"
                } else {
                    "iota_raw"
                },
                &self.scale_raw,
            ));
        }
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let (pade, scale) = (self.is_pade(), self.has_scale());
        let mut p = vec![&mut self.num];
        if pade {
            p.push(&mut self.den);
        }
        p.push(&mut self.alpha_raw);
        p.push(&mut self.beta_raw);
        if scale {
            p.push(&mut self.scale_raw);
        }
        p
    }

    pub fn forward(&self, tape: &mut Tape, params: &[Var], x: &Jet) -> Result<Jet> {
        let mut it = params.iter().copied();
        let num = it.next().expect("bound num");
        let den = if self.is_pade() { it.next() } else { None };
        let alpha = it.next().expect("bound alpha");
        let beta = it.next().expect("bound beta");
        let scale = if self.has_scale() { it.next() } else { None };

        let basis = BoundBasis::bind(tape, alpha, beta, scale)?;
        let top = match self.family {
            Family::Jacobi => self.degree,
            Family::Pade { den_degree } => self.degree.max(den_degree),
        };
        let cols = basis.expand(tape, x, self.squash, self.mapping, top)?;
        let numer = weighted_sum(tape, num, &cols[..=self.degree])?;
        let y = match (self.family, den) {
            (Family::Pade { den_degree }, Some(d)) => {
                let denom = weighted_sum(tape, d, &cols[..=den_degree])?;
                guarded_ratio(tape, &numer, &denom, self.epsilon)?
            }
            _ => numer,
        };
        check_finite(tape, &y, "rational-activation")?;
        Ok(y)
    }
}

fn weighted_sum(tape: &mut Tape, coeffs: Var, cols: &[Jet]) -> Result<Jet> {
    let mut acc: Option<Jet> = None;
    for (k, col) in cols.iter().enumerate() {
        let c = Jet::constant(tape.gather(coeffs, vec![k], Vec::new())?);
        let term = col.mul(tape, &c)?;
        acc = Some(match acc {
            Some(a) => a.add(tape, &term)?,
            None => term,
        });
    }
    Ok(acc.expect("degree + 1 ≥ 1 columns"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::JacobiRKanLayer;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn run(act: &RationalActivation, x: &Tensor) -> Tensor {
        let mut t = Tape::new();
        let p: Vec<Var> = act.params().iter().map(|(_, v)| t.param((*v).clone())).collect();
        let xj = Jet::constant(t.constant(x.clone()));
        let y = act.forward(&mut t, &p, &xj).unwrap();
        t.value(y.value).clone()
    }

    #[test]
    fn degree_zero_coefficient_shifts() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut a =
            RationalActivation::init(Family::Jacobi, 3, MappingKind::InfAlg, Squash::Identity, &mut rng).unwrap();
        a.num = Tensor::from_vec(vec![0.75, 0.0, 0.0, 0.0]);
        let y = run(&a, &Tensor::new(vec![2, 2], vec![-3.0, 0.1, 8.0, 2.0]).unwrap());
        assert_eq!(y.shape(), &[2, 2]);
        assert!(y.data().iter().all(|&v| v == 0.75));
    }

    #[test]
    fn single_unit_matches_edge_layer() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = RationalActivation::init(Family::Jacobi, 4, MappingKind::InfLog, Squash::Identity, &mut rng).unwrap();
        let mut e = JacobiRKanLayer::init(1, 1, 4, MappingKind::InfLog, Squash::Identity, &mut rng).unwrap();
        e.edge_coeffs = a.num.clone().reshape(vec![1, 1, 5]).unwrap();
        let x = Tensor::column(&[-2.0, -0.3, 0.0, 0.9, 5.0]);
        let mut t = Tape::new();
        let p: Vec<Var> = e.params().iter().map(|(_, v)| t.param((*v).clone())).collect();
        let xj = Jet::constant(t.constant(x.clone()));
        let ye = e.forward(&mut t, &p, &xj).unwrap();
        let ya = run(&a, &x);
        for (u, v) in ya.data().iter().zip(t.value(ye.value).data()) {
            assert!((u - v).abs() < 1e-14);
        }
    }

    #[test]
    fn pade_activation_keeps_shape_and_is_finite() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut a = RationalActivation::init(
            Family::Pade { den_degree: 2 },
            3,
            MappingKind::Identity,
            Squash::Tanh,
            &mut rng,
        )
        .unwrap();
        a.den = Tensor::from_vec(vec![0.0, 1.0, 0.0]);
        let y = run(&a, &Tensor::new(vec![1, 3], vec![0.0, 1.0, -1.0]).unwrap());
        assert_eq!(y.shape(), &[1, 3]);
        assert!(y.all_finite());
        // the denominator J_1(tanh 0) vanishes, so the guard returns 0
        assert_eq!(y.data()[0], 0.0);
    }
}
