//! Rational KAN layers and the networks built from them.
//!
//! Two families share the Jacobi basis machinery:
//!
//! * rational Jacobi layers evaluate `J_k(φ(σ(ξ)))` for a rational mapping
//!   `φ` with trainable scale `ι = SoftPlus(ι_raw)`;
//! * Padé layers evaluate a ratio of two Jacobi expansions of `σ(ξ)`, with
//!   the smooth pole guard `N·D / (D² + ε²)` in place of `N / D`.
//!
//! Each family comes in an edge-wise KAN form (one function per
//! input/output pair) and an activation form (one shared function applied
//! elementwise), plus a fractional variant that feeds `2 σ(ξ)^γ - 1` to the
//! basis.

mod activation;
mod dense;
mod network;
mod rkan;

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

pub use activation::RationalActivation;
pub use dense::{Dense, FixedActivation};
pub use network::{BoundNetwork, Layer, Network, NetworkConfig, NetworkMode};
pub use rkan::{JacobiRKanLayer, PadeRKanLayer};

use crate::autodiff::{Jet, Tape, Var};
use crate::error::{invalid, Error, Result};
use crate::jacobi::{basis_on_tape, elu_on_tape, softplus_on_tape};
use crate::mapping::{map_on_tape, MappingKind};
use crate::tensor::Tensor;

/// Default pole guard `ε` of the Padé ratio.
pub const PADE_EPSILON: f64 = 1e-8;

/// Sigmoid outputs are kept inside `[SIGMOID_MARGIN, 1 - SIGMOID_MARGIN]`
/// before the fractional power.
pub const SIGMOID_MARGIN: f64 = 1e-12;

/// Bounded squashing applied before the basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Squash {
    Identity,
    Tanh,
    Sigmoid,
}

impl Squash {
    pub fn name(self) -> &'static str {
        match self {
            Squash::Identity => "identity",
            Squash::Tanh => "tanh",
            Squash::Sigmoid => "sigmoid",
        }
    }

    fn apply(self, tape: &mut Tape, x: &Jet) -> Result<Jet> {
        match self {
            Squash::Identity => Ok(x.clone()),
            Squash::Tanh => x.tanh(tape),
            Squash::Sigmoid => x.sigmoid(tape),
        }
    }
}

impl fmt::Display for Squash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Squash {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Squash::Identity),
            "tanh" => Ok(Squash::Tanh),
            "sigmoid" => Ok(Squash::Sigmoid),
            _ => Err(invalid(alloc::format!("unknown squash `{s}`"))),
        }
    }
}

/// Layer kinds as named in experiment configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerKind {
    JacobiRKan,
    PadeRKan,
    FJacobiRKan,
    FPadeRKan,
    Dense,
    Tanh,
    Relu,
    Sigmoid,
}

impl LayerKind {
    pub const ALL: [LayerKind; 8] = [
        LayerKind::JacobiRKan,
        LayerKind::PadeRKan,
        LayerKind::FJacobiRKan,
        LayerKind::FPadeRKan,
        LayerKind::Dense,
        LayerKind::Tanh,
        LayerKind::Relu,
        LayerKind::Sigmoid,
    ];

    pub const RATIONAL: [LayerKind; 4] = [
        LayerKind::JacobiRKan,
        LayerKind::PadeRKan,
        LayerKind::FJacobiRKan,
        LayerKind::FPadeRKan,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LayerKind::JacobiRKan => "jacobi-rkan",
            LayerKind::PadeRKan => "pade-rkan",
            LayerKind::FJacobiRKan => "fjacobi-rkan",
            LayerKind::FPadeRKan => "fpade-rkan",
            LayerKind::Dense => "dense",
            LayerKind::Tanh => "tanh",
            LayerKind::Relu => "relu",
            LayerKind::Sigmoid => "sigmoid",
        }
    }

    pub fn is_rational(self) -> bool {
        LayerKind::RATIONAL.contains(&self)
    }

    pub fn is_pade(self) -> bool {
        matches!(self, LayerKind::PadeRKan | LayerKind::FPadeRKan)
    }

    pub fn is_fractional(self) -> bool {
        matches!(self, LayerKind::FJacobiRKan | LayerKind::FPadeRKan)
    }

    pub fn default_squash(self) -> Squash {
        match self {
            LayerKind::PadeRKan => Squash::Tanh,
            LayerKind::FJacobiRKan | LayerKind::FPadeRKan => Squash::Sigmoid,
            _ => Squash::Identity,
        }
    }

    /// Mapping applied after the squash (Padé layers feed the squashed
    /// value straight into the basis).
    pub fn default_mapping(self) -> MappingKind {
        match self {
            LayerKind::JacobiRKan => MappingKind::InfAlg,
            LayerKind::FJacobiRKan => MappingKind::SemiAlg,
            LayerKind::FPadeRKan => MappingKind::Fractional,
            _ => MappingKind::Identity,
        }
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LayerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LayerKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| invalid(alloc::format!("unknown layer kind `{s}`")))
    }
}

/// Which kind of denominator, if any, a rational layer carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Jacobi,
    Pade { den_degree: usize },
}

/// Trainable basis shape and mapping scalars of one rational layer, bound
/// to a tape.
pub(crate) struct BoundBasis {
    pub alpha: Var,
    pub beta: Var,
    pub scale: Option<Var>,
}

impl BoundBasis {
    pub fn bind(tape: &mut Tape, alpha_raw: Var, beta_raw: Var, scale_raw: Option<Var>) -> Result<Self> {
        let alpha = elu_on_tape(tape, alpha_raw)?;
        let beta = elu_on_tape(tape, beta_raw)?;
        let scale = match scale_raw {
            Some(r) => Some(softplus_on_tape(tape, r)?),
            None => None,
        };
        Ok(Self { alpha, beta, scale })
    }

    /// Squash, map and expand `x` into `J_0 .. J_degree`.
    pub fn expand(
        &self,
        tape: &mut Tape,
        x: &Jet,
        squash: Squash,
        mapping: MappingKind,
        degree: usize,
    ) -> Result<Vec<Jet>> {
        let mut s = squash.apply(tape, x)?;
        if mapping == MappingKind::Fractional {
            s = clamp_open_unit(tape, &s)?;
        }
        let phi = map_on_tape(tape, mapping, &s, self.scale, (-1.0, 1.0))?;
        basis_on_tape(tape, self.alpha, self.beta, &phi, degree)
    }
}

// Keeps sigmoid outputs off the closed endpoints where s^γ is singular.
fn clamp_open_unit(tape: &mut Tape, s: &Jet) -> Result<Jet> {
    let values = tape.value(s.value).data();
    let low: Vec<bool> = values.iter().map(|&v| v < SIGMOID_MARGIN).collect();
    let high: Vec<bool> = values.iter().map(|&v| v > 1.0 - SIGMOID_MARGIN).collect();
    if !low.iter().chain(&high).any(|&b| b) {
        return Ok(s.clone());
    }
    let shape = tape.value(s.value).shape().to_vec();
    let lo = Jet::constant(tape.constant(Tensor::full(&shape, SIGMOID_MARGIN)));
    let hi = Jet::constant(tape.constant(Tensor::full(&shape, 1.0 - SIGMOID_MARGIN)));
    let s = Jet::select(tape, &low, &lo, s)?;
    Jet::select(tape, &high, &hi, &s)
}

/// `N·D / (D² + ε²)`: equals `N / D` when `|D| ≫ ε`, and is finite and
/// smooth everywhere, vanishing at `D = 0`.
pub fn guarded_ratio(tape: &mut Tape, num: &Jet, den: &Jet, eps: f64) -> Result<Jet> {
    let d2 = den.square(tape)?.shift(tape, eps * eps)?;
    let g = den.div(tape, &d2)?;
    num.mul(tape, &g)
}

/// Scalar version of [`guarded_ratio`].
pub fn guarded_ratio_f64(num: f64, den: f64, eps: f64) -> f64 {
    num * den / (den * den + eps * eps)
}

pub(crate) fn check_finite(tape: &Tape, out: &Jet, layer: &'static str) -> Result<()> {
    let t = tape.value(out.value);
    let width = t.dims2().map(|(_, m)| m).unwrap_or(1).max(1);
    match t.data().iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::NonFinite {
            layer,
            sample: i / width,
        }),
        None => Ok(()),
    }
}

/// Named parameter tensors in traversal order.
pub type NamedParams<'a> = Vec<(&'static str, &'a Tensor)>;
