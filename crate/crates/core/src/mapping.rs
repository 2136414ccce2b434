//! Maps from finite, semi-infinite and infinite domains onto the Jacobi
//! interval `[-1, 1]`.

use core::fmt;
use core::str::FromStr;

use crate::autodiff::{Jet, Tape, Var};
use crate::error::{invalid, Error, Result};
use crate::jacobi::softplus_constrain;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MappingKind {
    /// `(2ξ - d0 - d1) / (d1 - d0)`
    Finite,
    /// `2 tanh(ξ/ι) - 1`
    SemiLog,
    /// `(ξ - ι) / (ξ + ι)`
    SemiAlg,
    /// `1 - 2 exp(-ξ/ι)`
    SemiExp,
    /// `tanh(ξ/ι)`
    InfLog,
    /// `ξ / sqrt(ξ² + ι²)`
    InfAlg,
    /// `2 s^γ - 1` for `s` in `(0, 1)`
    Fractional,
    Identity,
}

impl MappingKind {
    pub const ALL: [MappingKind; 8] = [
        MappingKind::Finite,
        MappingKind::SemiLog,
        MappingKind::SemiAlg,
        MappingKind::SemiExp,
        MappingKind::InfLog,
        MappingKind::InfAlg,
        MappingKind::Fractional,
        MappingKind::Identity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MappingKind::Finite => "finite",
            MappingKind::SemiLog => "semi-log",
            MappingKind::SemiAlg => "semi-alg",
            MappingKind::SemiExp => "semi-exp",
            MappingKind::InfLog => "inf-log",
            MappingKind::InfAlg => "inf-alg",
            MappingKind::Fractional => "fractional",
            MappingKind::Identity => "identity",
        }
    }

    pub fn uses_iota(self) -> bool {
        matches!(
            self,
            MappingKind::SemiLog
                | MappingKind::SemiAlg
                | MappingKind::SemiExp
                | MappingKind::InfLog
                | MappingKind::InfAlg
        )
    }

    pub fn is_semi_infinite(self) -> bool {
        matches!(self, MappingKind::SemiLog | MappingKind::SemiAlg | MappingKind::SemiExp)
    }
}

impl fmt::Display for MappingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MappingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MappingKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| invalid(alloc::format!("unknown mapping kind `{s}`")))
    }
}

/// A mapping together with its raw trainable parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MappingSpec {
    pub kind: MappingKind,
    /// Unconstrained; the effective scale is `SoftPlus(iota_raw)`.
    pub iota_raw: f64,
    /// Unconstrained; the effective order is `SoftPlus(gamma_raw)`.
    pub gamma_raw: f64,
    pub d0: f64,
    pub d1: f64,
}

impl MappingSpec {
    /// `ι = 1`, `γ = 1`, `[d0, d1] = [-1, 1]`.
    pub fn new(kind: MappingKind) -> Self {
        let unit = crate::jacobi::softplus_inverse(1.0);
        Self {
            kind,
            iota_raw: unit,
            gamma_raw: unit,
            d0: -1.0,
            d1: 1.0,
        }
    }

    pub fn finite(d0: f64, d1: f64) -> Result<Self> {
        if !(d0 < d1) {
            return Err(invalid("finite mapping needs d0 < d1"));
        }
        Ok(Self {
            d0,
            d1,
            ..Self::new(MappingKind::Finite)
        })
    }

    pub fn iota(&self) -> f64 {
        softplus_constrain(self.iota_raw)
    }

    pub fn gamma(&self) -> f64 {
        softplus_constrain(self.gamma_raw)
    }

    /// Scalar evaluation with the effective parameters.
    pub fn apply(&self, xi: f64) -> Result<f64> {
        match self.kind {
            MappingKind::Finite => map_finite(xi, self.d0, self.d1),
            MappingKind::SemiLog | MappingKind::SemiAlg | MappingKind::SemiExp => map_semi(xi, self.kind, self.iota()),
            MappingKind::InfLog | MappingKind::InfAlg => map_infinite(xi, self.kind, self.iota()),
            MappingKind::Fractional => map_fractional(xi, self.gamma()),
            MappingKind::Identity => Ok(xi),
        }
    }
}

pub fn map_finite(xi: f64, d0: f64, d1: f64) -> Result<f64> {
    if !(d0 < d1) {
        return Err(invalid("finite mapping needs d0 < d1"));
    }
    Ok((2.0 * xi - d0 - d1) / (d1 - d0))
}

fn check_iota(iota: f64) -> Result<()> {
    if iota > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain {
            what: "mapping scale iota",
            value: iota,
        })
    }
}

pub fn map_semi(xi: f64, kind: MappingKind, iota: f64) -> Result<f64> {
    if !(xi >= 0.0) {
        return Err(Error::Domain {
            what: "semi-infinite mapping",
            value: xi,
        });
    }
    check_iota(iota)?;
    match kind {
        MappingKind::SemiLog => Ok(2.0 * libm::tanh(xi / iota) - 1.0),
        MappingKind::SemiAlg => Ok((xi - iota) / (xi + iota)),
        MappingKind::SemiExp => Ok(1.0 - 2.0 * libm::exp(-xi / iota)),
        _ => Err(invalid(alloc::format!("{kind} is not a semi-infinite mapping"))),
    }
}

pub fn map_infinite(xi: f64, kind: MappingKind, iota: f64) -> Result<f64> {
    check_iota(iota)?;
    match kind {
        MappingKind::InfLog => Ok(libm::tanh(xi / iota)),
        MappingKind::InfAlg => Ok(xi / libm::hypot(xi, iota)),
        _ => Err(invalid(alloc::format!("{kind} is not an infinite mapping"))),
    }
}

pub fn map_fractional(s: f64, gamma: f64) -> Result<f64> {
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::Domain {
            what: "fractional mapping",
            value: s,
        });
    }
    if !(gamma > 0.0) {
        return Err(Error::Domain {
            what: "fractional order gamma",
            value: gamma,
        });
    }
    Ok(2.0 * libm::pow(s, gamma) - 1.0)
}

/// Apply `kind` on the tape. `scale` is the effective `ι` (for the Semi*
/// and Inf* kinds) or `γ` (for `Fractional`) as a one-element node.
pub fn map_on_tape(
    tape: &mut Tape,
    kind: MappingKind,
    x: &Jet,
    scale: Option<Var>,
    (d0, d1): (f64, f64),
) -> Result<Jet> {
    let need = |s: Option<Var>| s.ok_or_else(|| invalid(alloc::format!("{kind} mapping needs a scale parameter")));
    match kind {
        MappingKind::Identity => Ok(x.clone()),
        MappingKind::Finite => {
            if !(d0 < d1) {
                return Err(invalid("finite mapping needs d0 < d1"));
            }
            x.scale(tape, 2.0 / (d1 - d0))?.shift(tape, -(d0 + d1) / (d1 - d0))
        }
        MappingKind::SemiLog | MappingKind::SemiExp | MappingKind::InfLog => {
            let iota = need(scale)?;
            if let Some(&v) = tape
                .value(x.value)
                .data()
                .iter()
                .find(|v| kind.is_semi_infinite() && !(**v >= 0.0))
            {
                return Err(Error::Domain {
                    what: "semi-infinite mapping",
                    value: v,
                });
            }
            let one = tape.scalar(1.0);
            let inv = tape.div(one, iota)?;
            let z = x.mul(tape, &Jet::constant(inv))?;
            match kind {
                MappingKind::SemiLog => z.tanh(tape)?.scale(tape, 2.0)?.shift(tape, -1.0),
                MappingKind::InfLog => z.tanh(tape),
                _ => z.neg(tape)?.exp(tape)?.scale(tape, -2.0)?.shift(tape, 1.0),
            }
        }
        MappingKind::SemiAlg => {
            let iota = Jet::constant(need(scale)?);
            if let Some(&v) = tape.value(x.value).data().iter().find(|v| !(**v >= 0.0)) {
                return Err(Error::Domain {
                    what: "semi-infinite mapping",
                    value: v,
                });
            }
            let num = x.sub(tape, &iota)?;
            let den = x.add(tape, &iota)?;
            num.div(tape, &den)
        }
        MappingKind::InfAlg => {
            let iota = need(scale)?;
            let iota2 = Jet::constant(tape.square(iota));
            let r = x.square(tape)?.add(tape, &iota2)?.powf(tape, -0.5)?;
            x.mul(tape, &r)
        }
        MappingKind::Fractional => {
            let gamma = Jet::constant(need(scale)?);
            if let Some(&v) = tape.value(x.value).data().iter().find(|v| !(**v > 0.0 && **v < 1.0)) {
                return Err(Error::Domain {
                    what: "fractional mapping",
                    value: v,
                });
            }
            // s^γ = exp(γ log s)
            let l = x.log(tape)?;
            l.mul(tape, &gamma)?.exp(tape)?.scale(tape, 2.0)?.shift(tape, -1.0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use alloc::vec::Vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const SEMI: [MappingKind; 3] = [MappingKind::SemiLog, MappingKind::SemiAlg, MappingKind::SemiExp];
    const INF: [MappingKind; 2] = [MappingKind::InfLog, MappingKind::InfAlg];

    #[test]
    fn finite_examples() {
        assert_eq!(map_finite(3.0, 3.0, 7.0).unwrap(), -1.0);
        assert_eq!(map_finite(7.0, 3.0, 7.0).unwrap(), 1.0);
        assert_eq!(map_finite(5.0, 3.0, 7.0).unwrap(), 0.0);
        assert!((map_finite(2.0, 0.0, 10.0).unwrap() + 0.6).abs() < 1e-15);
        assert!(map_finite(1.0, 2.0, 2.0).is_err());
        assert!(MappingSpec::finite(1.0, 0.0).is_err());
    }

    #[test]
    fn semi_examples() {
        let iota = 1.7;
        assert_eq!(map_semi(0.0, MappingKind::SemiExp, iota).unwrap(), -1.0);
        assert_eq!(map_semi(0.0, MappingKind::SemiLog, iota).unwrap(), -1.0);
        assert_eq!(map_semi(0.0, MappingKind::SemiAlg, iota).unwrap(), -1.0);
        assert_eq!(map_semi(iota, MappingKind::SemiAlg, iota).unwrap(), 0.0);
        let e = map_semi(iota, MappingKind::SemiExp, iota).unwrap();
        assert!((e - (1.0 - 2.0 * libm::exp(-1.0))).abs() < 1e-15);
        assert!((e - 0.264_241_117_657_115_4).abs() < 1e-12);
        assert!(map_semi(-0.1, MappingKind::SemiAlg, iota).is_err());
        assert!(map_semi(1.0, MappingKind::SemiAlg, 0.0).is_err());
        assert!(map_semi(1.0, MappingKind::InfAlg, 1.0).is_err());
    }

    #[test]
    fn infinite_examples() {
        let iota = 0.8;
        assert_eq!(map_infinite(0.0, MappingKind::InfAlg, iota).unwrap(), 0.0);
        let v = map_infinite(iota, MappingKind::InfAlg, iota).unwrap();
        assert!((v - core::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        for k in INF {
            let a = map_infinite(2.3, k, iota).unwrap();
            let b = map_infinite(-2.3, k, iota).unwrap();
            assert_eq!(a, -b);
        }
        assert!(map_infinite(1.0, MappingKind::InfLog, -1.0).is_err());
    }

    #[test]
    fn fractional_examples() {
        assert!((map_fractional(0.3, 1.0).unwrap() - (2.0 * 0.3 - 1.0)).abs() < 1e-15);
        assert_eq!(map_fractional(0.5, 1.0).unwrap(), 0.0);
        assert!(map_fractional(0.25, 0.5).unwrap().abs() < 1e-15);
        assert!(map_fractional(0.0, 0.5).is_err());
        assert!(map_fractional(1.0, 0.5).is_err());
        assert!(map_fractional(0.5, 0.0).is_err());
    }

    #[test]
    fn kind_names_round_trip() {
        for k in MappingKind::ALL {
            assert_eq!(k.name().parse::<MappingKind>().unwrap(), k);
        }
        assert!("semi_log".parse::<MappingKind>().is_err());
    }

    fn random_inputs(rng: &mut ChaCha8Rng, kind: MappingKind, n: usize) -> Vec<f64> {
        (0..n)
            .map(|_| match kind {
                k if k.is_semi_infinite() => libm::exp(rng.random_range(-12.0..12.0)),
                MappingKind::Fractional => rng.random_range(1e-9..1.0 - 1e-9),
                _ => {
                    let m = libm::exp(rng.random_range(-12.0..12.0));
                    if rng.random_bool(0.5) {
                        m
                    } else {
                        -m
                    }
                }
            })
            .collect()
    }

    #[test]
    fn outputs_stay_inside_the_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for kind in SEMI.into_iter().chain(INF).chain([MappingKind::Fractional]) {
            let mut spec = MappingSpec::new(kind);
            spec.iota_raw = rng.random_range(-2.0..2.0);
            spec.gamma_raw = rng.random_range(-2.0..2.0);
            for x in random_inputs(&mut rng, kind, 10_000) {
                let y = spec.apply(x).unwrap();
                if kind.is_semi_infinite() {
                    assert!((-1.0..=1.0).contains(&y), "{kind} {x} -> {y}");
                    assert!(y < 1.0 || x / spec.iota() > 15.0);
                } else {
                    assert!((-1.0..=1.0).contains(&y), "{kind} {x} -> {y}");
                    assert!(y.abs() < 1.0 || (x / spec.iota()).abs() > 15.0);
                }
            }
        }
    }

    #[test]
    fn outputs_are_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for kind in SEMI.into_iter().chain(INF).chain([MappingKind::Fractional]) {
            for _ in 0..5 {
                let mut spec = MappingSpec::new(kind);
                spec.iota_raw = rng.random_range(-2.0..2.0);
                spec.gamma_raw = rng.random_range(-2.0..2.0);
                // keep the inputs in the region where f64 resolves the slope
                let mut xs: Vec<f64> = (0..200)
                    .map(|_| match kind {
                        k if k.is_semi_infinite() => rng.random_range(0.0..5.0) * spec.iota(),
                        MappingKind::Fractional => rng.random_range(0.01..0.99),
                        _ => rng.random_range(-5.0..5.0) * spec.iota(),
                    })
                    .collect();
                xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
                xs.dedup();
                let ys: Vec<f64> = xs.iter().map(|&x| spec.apply(x).unwrap()).collect();
                assert!(ys.windows(2).all(|w| w[0] < w[1]), "{kind} not increasing");
            }
        }
    }

    #[test]
    fn semi_maps_agree_at_calibration_points() {
        for iota in [0.3, 1.0, 4.2] {
            for kind in SEMI {
                assert!((map_semi(0.0, kind, iota).unwrap() + 1.0).abs() < 1e-9);
            }
            // the algebraic map approaches 1 only like 2ι/ξ
            for kind in [MappingKind::SemiLog, MappingKind::SemiExp] {
                assert!((map_semi(1e6 * iota, kind, iota).unwrap() - 1.0).abs() < 1e-9);
            }
            let alg = map_semi(1e6 * iota, MappingKind::SemiAlg, iota).unwrap();
            assert!((alg - 1.0).abs() < 2.1e-6);
        }
    }

    fn tape_map(kind: MappingKind, xs: &[f64], raw: f64) -> (Vec<f64>, Vec<f64>, f64) {
        let mut t = Tape::new();
        let x = t.param(Tensor::column(xs));
        let r = t.param(Tensor::scalar(raw));
        let scale = crate::jacobi::softplus_on_tape(&mut t, r).unwrap();
        let y = map_on_tape(&mut t, kind, &Jet::constant(x), Some(scale), (-2.0, 3.0)).unwrap();
        let s = t.sum(y.value);
        let g = t.backward(s).unwrap();
        (
            t.value(y.value).data().to_vec(),
            g.wrt(x).into_data(),
            g.wrt(r).data()[0],
        )
    }

    #[test]
    fn tape_mappings_match_scalar_and_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for kind in MappingKind::ALL {
            let xs: Vec<f64> = (0..20)
                .map(|_| match kind {
                    k if k.is_semi_infinite() => rng.random_range(0.05..4.0),
                    MappingKind::Fractional => rng.random_range(0.05..0.95),
                    _ => rng.random_range(-3.0..3.0),
                })
                .collect();
            let raw = rng.random_range(-1.0..1.0);
            let mut spec = MappingSpec::new(kind);
            spec.iota_raw = raw;
            spec.gamma_raw = raw;
            spec.d0 = -2.0;
            spec.d1 = 3.0;
            let (ys, gx, graw) = tape_map(kind, &xs, raw);
            let h = 1e-6;
            for (i, &x) in xs.iter().enumerate() {
                assert!((ys[i] - spec.apply(x).unwrap()).abs() < 1e-14, "{kind}");
                let fd = (spec.apply(x + h).unwrap() - spec.apply(x - h).unwrap()) / (2.0 * h);
                assert!(
                    (gx[i] - fd).abs() <= 1e-5 * gx[i].abs().max(fd.abs()).max(1e-3),
                    "{kind} dx"
                );
            }
            let total = |r: f64| {
                let mut s = spec.clone();
                s.iota_raw = r;
                s.gamma_raw = r;
                xs.iter().map(|&x| s.apply(x).unwrap()).sum::<f64>()
            };
            let fd = (total(raw + h) - total(raw - h)) / (2.0 * h);
            assert!(
                (graw - fd).abs() <= 1e-5 * graw.abs().max(fd.abs()).max(1e-3),
                "{kind} draw {graw} {fd}"
            );
        }
    }
}
