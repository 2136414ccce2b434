//! Layer stacks and their flat parameter view.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    Dense, Family, FixedActivation, JacobiRKanLayer, LayerKind, MappingKind, NamedParams, PadeRKanLayer,
    RationalActivation, Squash,
};
use crate::autodiff::{Gradients, Jet, JetFn, Tape, Var};
use crate::error::{invalid, Error, Result};
use crate::tensor::Tensor;

/// RNG stream used for parameter initialisation (data streams use others).
pub const INIT_STREAM: u64 = 7;

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Jacobi(JacobiRKanLayer),
    Pade(PadeRKanLayer),
    Activation(RationalActivation),
    Dense(Dense),
    Fixed(FixedActivation),
    /// Frozen elementwise `x ↦ scale·x + shift`, used to normalise inputs.
    Affine {
        scale: f64,
        shift: f64,
    },
}

impl Layer {
    /// `(in, out)` for layers that fix their widths, `None` for elementwise ones.
    pub fn dims(&self) -> Option<(usize, usize)> {
        match self {
            Layer::Jacobi(l) => Some((l.in_dim, l.out_dim)),
            Layer::Pade(l) => Some((l.in_dim, l.out_dim)),
            Layer::Dense(l) => Some((l.in_dim, l.out_dim)),
            Layer::Activation(_) | Layer::Fixed(_) | Layer::Affine { .. } => None,
        }
    }

    pub fn params(&self) -> NamedParams<'_> {
        match self {
            Layer::Jacobi(l) => l.params(),
            Layer::Pade(l) => l.params(),
            Layer::Activation(l) => l.params(),
            Layer::Dense(l) => l.params(),
            Layer::Fixed(_) | Layer::Affine { .. } => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Layer::Jacobi(l) => l.params_mut(),
            Layer::Pade(l) => l.params_mut(),
            Layer::Activation(l) => l.params_mut(),
            Layer::Dense(l) => l.params_mut(),
            Layer::Fixed(_) | Layer::Affine { .. } => Vec::new(),
        }
    }

    pub fn forward(&self, tape: &mut Tape, params: &[Var], x: &Jet) -> Result<Jet> {
        match self {
            Layer::Jacobi(l) => l.forward(tape, params, x),
            Layer::Pade(l) => l.forward(tape, params, x),
            Layer::Activation(l) => l.forward(tape, params, x),
            Layer::Dense(l) => l.forward(tape, params, x),
            Layer::Fixed(f) => f.forward(tape, x),
            Layer::Affine { scale, shift } => x.scale(tape, *scale)?.shift(tape, *shift),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NetworkMode {
    /// Stacked edge-wise rational layers.
    Kan,
    /// Dense layers with a shared rational (or fixed) activation between them.
    ActivationMlp,
}

impl NetworkMode {
    pub fn name(self) -> &'static str {
        match self {
            NetworkMode::Kan => "kan",
            NetworkMode::ActivationMlp => "activation",
        }
    }
}

impl fmt::Display for NetworkMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NetworkMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kan" => Ok(NetworkMode::Kan),
            "activation" => Ok(NetworkMode::ActivationMlp),
            _ => Err(invalid(alloc::format!("unknown network mode `{s}`"))),
        }
    }
}

/// Everything needed to build a network from a seed.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub architecture: Vec<usize>,
    pub layer: LayerKind,
    pub degree: usize,
    pub den_degree: usize,
    pub mapping: MappingKind,
    pub squash: Squash,
    pub mode: NetworkMode,
    /// Optional frozen `(scale, shift)` applied to the inputs first.
    pub input_affine: Option<(f64, f64)>,
}

impl NetworkConfig {
    /// Defaults for `layer`: squash and mapping per kind, activation mode.
    pub fn new(layer: LayerKind, degree: usize, architecture: Vec<usize>) -> Self {
        Self {
            architecture,
            layer,
            degree,
            den_degree: degree,
            mapping: layer.default_mapping(),
            squash: layer.default_squash(),
            mode: NetworkMode::ActivationMlp,
            input_affine: None,
        }
    }

    pub fn build(&self, seed: u64) -> Result<Network> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(INIT_STREAM);
        self.build_with(&mut rng)
    }

    pub fn build_with(&self, rng: &mut ChaCha8Rng) -> Result<Network> {
        let arch = &self.architecture;
        if arch.len() < 2 {
            return Err(invalid("architecture needs at least an input and an output width"));
        }
        let family = if self.layer.is_pade() {
            Family::Pade {
                den_degree: self.den_degree,
            }
        } else {
            Family::Jacobi
        };
        let mut layers = Vec::new();
        if let Some((scale, shift)) = self.input_affine {
            layers.push(Layer::Affine { scale, shift });
        }
        match self.mode {
            NetworkMode::Kan => {
                if !self.layer.is_rational() {
                    return Err(invalid(alloc::format!(
                        "KAN mode needs a rational layer, got `{}`",
                        self.layer
                    )));
                }
                for w in arch.windows(2) {
                    layers.push(match family {
                        Family::Jacobi => Layer::Jacobi(JacobiRKanLayer::init(
                            w[0],
                            w[1],
                            self.degree,
                            self.mapping,
                            self.squash,
                            rng,
                        )?),
                        Family::Pade { den_degree } => Layer::Pade(PadeRKanLayer::init(
                            w[0],
                            w[1],
                            self.degree,
                            den_degree,
                            self.mapping,
                            self.squash,
                            rng,
                        )?),
                    });
                }
            }
            NetworkMode::ActivationMlp => {
                let last = arch.len() - 2;
                for (i, w) in arch.windows(2).enumerate() {
                    layers.push(Layer::Dense(Dense::init(w[0], w[1], rng)?));
                    if i == last {
                        break;
                    }
                    match self.layer {
                        LayerKind::Dense => {}
                        LayerKind::Tanh => layers.push(Layer::Fixed(FixedActivation::Tanh)),
                        LayerKind::Relu => layers.push(Layer::Fixed(FixedActivation::Relu)),
                        LayerKind::Sigmoid => layers.push(Layer::Fixed(FixedActivation::Sigmoid)),
                        _ => layers.push(Layer::Activation(RationalActivation::init(
                            family,
                            self.degree,
                            self.mapping,
                            self.squash,
                            rng,
                        )?)),
                    }
                }
            }
        }
        Network::new(layers, self.mode)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
    mode: NetworkMode,
    in_dim: usize,
    out_dim: usize,
}

impl Network {
    /// Checks that fixed widths chain.
    pub fn new(layers: Vec<Layer>, mode: NetworkMode) -> Result<Self> {
        let mut width: Option<usize> = None;
        let mut first = None;
        for (i, l) in layers.iter().enumerate() {
            if let Some((a, b)) = l.dims() {
                if let Some(w) = width {
                    if w != a {
                        return Err(invalid(alloc::format!("layer {i} expects width {a} but receives {w}")));
                    }
                }
                first.get_or_insert(a);
                width = Some(b);
            }
        }
        let (Some(in_dim), Some(out_dim)) = (first, width) else {
            return Err(invalid("network needs at least one layer with fixed widths"));
        };
        Ok(Self {
            layers,
            mode,
            in_dim,
            out_dim,
        })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn mode(&self) -> NetworkMode {
        self.mode
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    /// `layer.name` for every parameter tensor, in flat order.
    pub fn param_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            for (name, _) in l.params() {
                out.push(alloc::format!("{i}.{name}"));
            }
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().flat_map(|l| l.params()).map(|(_, t)| t.len()).sum()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            for (_, t) in l.params() {
                out.extend_from_slice(t.data());
            }
        }
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(invalid(alloc::format!(
                "expected {} parameters, got {}",
                self.num_params(),
                flat.len()
            )));
        }
        let mut at = 0;
        for l in &mut self.layers {
            for t in l.params_mut() {
                let n = t.len();
                t.data_mut().copy_from_slice(&flat[at..at + n]);
                at += n;
            }
        }
        Ok(())
    }

    /// Put every parameter on `tape` as a trainable leaf.
    pub fn bind<'a>(&'a self, tape: &mut Tape) -> BoundNetwork<'a> {
        self.bind_as(tape, true)
    }

    /// Put every parameter on `tape` as a constant (inference only).
    pub fn bind_frozen<'a>(&'a self, tape: &mut Tape) -> BoundNetwork<'a> {
        self.bind_as(tape, false)
    }

    fn bind_as<'a>(&'a self, tape: &mut Tape, trainable: bool) -> BoundNetwork<'a> {
        let params = self
            .layers
            .iter()
            .map(|l| {
                l.params()
                    .into_iter()
                    .map(|(_, t)| {
                        if trainable {
                            tape.param(t.clone())
                        } else {
                            tape.constant(t.clone())
                        }
                    })
                    .collect()
            })
            .collect();
        BoundNetwork { net: self, params }
    }

    /// Plain forward pass on a `[n, in]` batch.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let bound = self.bind_frozen(&mut tape);
        let xj = Jet::constant(tape.constant(x.clone()));
        let y = bound.eval(&mut tape, &xj)?;
        Ok(tape.value(y.value).clone())
    }

    /// Evaluate `loss` (which must return a one-element node) and its
    /// gradient with respect to the flat parameter vector.
    pub fn loss_and_grad(
        &self,
        loss: impl FnOnce(&mut Tape, &BoundNetwork<'_>) -> Result<Var>,
    ) -> Result<(f64, Vec<f64>)> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape);
        let root = loss(&mut tape, &bound)?;
        let value = tape
            .value(root)
            .item()
            .ok_or_else(|| Error::NonScalarRoot(tape.value(root).shape().to_vec()))?;
        let grads = tape.backward(root)?;
        Ok((value, bound.flat_gradients(&grads)))
    }
}

/// Network whose parameters live on a particular tape.
pub struct BoundNetwork<'a> {
    net: &'a Network,
    params: Vec<Vec<Var>>,
}

impl BoundNetwork<'_> {
    pub fn network(&self) -> &Network {
        self.net
    }

    pub fn vars(&self) -> impl Iterator<Item = Var> + '_ {
        self.params.iter().flatten().copied()
    }

    pub fn flat_gradients(&self, grads: &Gradients) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.net.num_params());
        for v in self.vars() {
            out.extend_from_slice(grads.wrt(v).data());
        }
        out
    }
}

impl JetFn for BoundNetwork<'_> {
    fn eval(&self, tape: &mut Tape, x: &Jet) -> Result<Jet> {
        let mut h = x.clone();
        for (l, p) in self.net.layers.iter().zip(&self.params) {
            h = l.forward(tape, p, &h)?;
        }
        Ok(h)
    }
}

/// Binds fresh constants on every call; handy for input derivatives.
impl JetFn for Network {
    fn eval(&self, tape: &mut Tape, x: &Jet) -> Result<Jet> {
        self.bind_frozen(tape).eval(tape, x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn activation_network_layout() {
        let cfg = NetworkConfig::new(LayerKind::JacobiRKan, 2, vec![1, 10, 1]);
        let net = cfg.build(0).unwrap();
        assert_eq!(net.layers().len(), 3);
        assert!(matches!(net.layers()[1], Layer::Activation(_)));
        // 10 + 10 dense, 3 coeffs + α + β + ι, 10 + 1 dense
        assert_eq!(net.num_params(), 20 + 6 + 11);
    }

    #[test]
    fn zero_final_weights_give_zero_output() {
        let cfg = NetworkConfig::new(LayerKind::JacobiRKan, 3, vec![1, 10, 1]);
        let mut net = cfg.build(4).unwrap();
        if let Layer::Dense(d) = &mut net.layers_mut()[2] {
            d.weight = Tensor::zeros(&[10, 1]);
            d.bias = Tensor::zeros(&[1]);
        }
        let y = net.predict(&Tensor::column(&[-3.0, 0.0, 0.4, 7.0])).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn chain_mismatch_fails_at_construction() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = Layer::Dense(Dense::init(2, 3, &mut rng).unwrap());
        let b = Layer::Dense(Dense::init(4, 1, &mut rng).unwrap());
        assert!(Network::new(
            vec![a, Layer::Fixed(FixedActivation::Tanh), b],
            NetworkMode::ActivationMlp
        )
        .is_err());
    }

    #[test]
    fn single_identity_layer_is_identity() {
        let net = Network::new(vec![Layer::Dense(Dense::identity(2))], NetworkMode::ActivationMlp).unwrap();
        let x = Tensor::new(vec![2, 2], vec![1.0, 2.0, -3.0, 0.5]).unwrap();
        assert_eq!(net.predict(&x).unwrap(), x);
    }

    #[test]
    fn composition_matches_sequential_application() {
        let cfg = NetworkConfig {
            mode: NetworkMode::Kan,
            ..NetworkConfig::new(LayerKind::PadeRKan, 3, vec![2, 3, 1])
        };
        let net = cfg.build(9).unwrap();
        let x = Tensor::new(vec![3, 2], vec![0.1, -0.5, 2.0, 1.0, -1.5, 0.3]).unwrap();
        let mut h = x.clone();
        for l in net.layers() {
            let single = Network::new(vec![l.clone()], NetworkMode::Kan).unwrap();
            h = single.predict(&h).unwrap();
        }
        assert_eq!(net.predict(&x).unwrap(), h);
    }

    #[test]
    fn flat_params_round_trip() {
        let cfg = NetworkConfig::new(LayerKind::FPadeRKan, 2, vec![1, 4, 1]);
        let mut net = cfg.build(1).unwrap();
        let mut p = net.flat_params();
        p.iter_mut().for_each(|v| *v += 0.5);
        net.set_flat_params(&p).unwrap();
        assert_eq!(net.flat_params(), p);
        assert_eq!(
            net.param_names().len(),
            net.layers().iter().map(|l| l.params().len()).sum::<usize>()
        );
        assert!(net.set_flat_params(&p[1..]).is_err());
    }

    #[test]
    fn same_seed_same_network() {
        for kind in LayerKind::ALL {
            let cfg = NetworkConfig::new(kind, 3, vec![2, 5, 1]);
            assert_eq!(cfg.build(11).unwrap(), cfg.build(11).unwrap(), "{kind}");
        }
    }
}
