//! Desk-scale experiment harnesses: function regression, the Lane-Emden
//! equation and a Poisson problem on the unit square.

pub mod lane_emden;
pub mod pde;
pub mod regression;
pub mod roots;

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::autodiff::{Tape, Var};
use crate::error::{invalid, Error, Result};
use crate::gradcheck::{check_network, GradCheck, FD_STEP};
use crate::layers::{BoundNetwork, LayerKind, Network, NetworkConfig, NetworkMode};
use crate::optim::{adam_minimize, lbfgs_minimize, AdamConfig, LbfgsConfig, Outcome, Status};
use crate::tensor::Tensor;

pub use lane_emden::{lane_emden_loss, reference_root, solve_lane_emden, OdeTask};
pub use pde::{elliptic_pde_loss, exact_solution, solve_elliptic_pde, PdeTask};
pub use regression::{pole_stress, train_regression, Dataset, RegressionTask, Target};
pub use roots::find_first_root;

/// Outcome label written to result files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RunStatus {
    Ok,
    Diverged,
    NoRoot,
    Failed,
}

impl RunStatus {
    pub fn name(self) -> &'static str {
        match self {
            RunStatus::Ok => "ok",
            RunStatus::Diverged => "diverged",
            RunStatus::NoRoot => "no-root",
            RunStatus::Failed => "failed",
        }
    }

    /// A stalled line search still leaves a usable network; only a
    /// non-finite loss counts against the run.
    pub fn from_optimizer(s: Status) -> Self {
        match s {
            Status::Diverged => RunStatus::Diverged,
            _ => RunStatus::Ok,
        }
    }
}

impl fmt::Display for RunStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OptimizerKind {
    Lbfgs,
    Adam,
}

impl OptimizerKind {
    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Lbfgs => "lbfgs",
            OptimizerKind::Adam => "adam",
        }
    }
}

impl core::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lbfgs" => Ok(OptimizerKind::Lbfgs),
            "adam" => Ok(OptimizerKind::Adam),
            _ => Err(invalid(alloc::format!("unknown optimizer `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub epochs: usize,
    /// Adam step size (ignored by L-BFGS).
    pub lr: f64,
}

impl OptimizerConfig {
    pub fn lbfgs(epochs: usize) -> Self {
        Self {
            kind: OptimizerKind::Lbfgs,
            epochs,
            lr: AdamConfig::default().lr,
        }
    }

    pub fn adam(epochs: usize, lr: f64) -> Self {
        Self {
            kind: OptimizerKind::Adam,
            epochs,
            lr,
        }
    }
}

/// Metrics of one (experiment, seed) cell. Fields that do not apply to an
/// experiment stay `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub seed: u64,
    pub losses: Vec<f64>,
    pub train_mse: Option<f64>,
    pub test_mse: Option<f64>,
    pub root: Option<f64>,
    pub root_err: Option<f64>,
    pub max_abs_err: Option<f64>,
    pub status: RunStatus,
    /// Filled in by callers that own a clock.
    pub wall_s: f64,
}

impl TrainReport {
    pub fn new(seed: u64, status: RunStatus) -> Self {
        Self {
            seed,
            losses: Vec::new(),
            train_mse: None,
            test_mse: None,
            root: None,
            root_err: None,
            max_abs_err: None,
            status,
            wall_s: 0.0,
        }
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.losses.last().copied()
    }
}

pub fn mse(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "mse of unequal lengths");
    if a.is_empty() {
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

/// Scalar loss built on a tape from a bound network.
pub trait LossFn {
    fn loss(&self, tape: &mut Tape, net: &BoundNetwork<'_>) -> Result<Var>;
}

impl<F> LossFn for F
where
    F: Fn(&mut Tape, &BoundNetwork<'_>) -> Result<Var>,
{
    fn loss(&self, tape: &mut Tape, net: &BoundNetwork<'_>) -> Result<Var> {
        self(tape, net)
    }
}

/// Train `net` in place. Forward passes that blow up count as an infinite
/// loss so the line search can back away from them.
pub fn train(net: &mut Network, loss: &impl LossFn, opt: &OptimizerConfig) -> Result<Outcome> {
    let mut probe = net.clone();
    let n = net.num_params();
    let objective = |p: &[f64]| -> Result<(f64, Vec<f64>)> {
        probe.set_flat_params(p)?;
        match probe.loss_and_grad(|t, b| loss.loss(t, b)) {
            Err(Error::NonFinite { .. }) => Ok((f64::INFINITY, vec![0.0; n])),
            r => r,
        }
    };
    let x0 = net.flat_params();
    let out = match opt.kind {
        OptimizerKind::Lbfgs => lbfgs_minimize(
            objective,
            &x0,
            LbfgsConfig {
                max_epochs: opt.epochs,
                ..Default::default()
            },
        )?,
        OptimizerKind::Adam => adam_minimize(
            objective,
            &x0,
            opt.epochs,
            AdamConfig {
                lr: opt.lr,
                ..Default::default()
            },
        )?,
    };
    net.set_flat_params(&out.params)?;
    Ok(out)
}

/// Mean squared error of `net` on a `[n, 1]` target, as a tape node.
pub fn mse_loss(tape: &mut Tape, net: &BoundNetwork<'_>, x: &Tensor, y: &Tensor) -> Result<Var> {
    use crate::autodiff::{Jet, JetFn};
    let xj = Jet::constant(tape.constant(x.clone()));
    let out = net.eval(tape, &xj)?.value;
    let t = tape.constant(y.clone());
    let r = tape.sub(out, t)?;
    let r2 = tape.square(r);
    Ok(tape.mean(r2))
}

/// Gradient check of one small network per rational layer kind
/// (`ν = 2`, `K = 3`, `p = 2`, five samples) in both network modes.
pub fn gradient_suite(seed: u64) -> Result<Vec<(LayerKind, NetworkMode, GradCheck)>> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<f64> = (0..10).map(|_| rng.random_range(-2.0..2.0)).collect();
    let x = Tensor::new(vec![5, 2], data)?;
    let mut out = Vec::new();
    for kind in LayerKind::RATIONAL {
        for (mode, arch) in [
            (NetworkMode::Kan, vec![2, 2, 1]),
            (NetworkMode::ActivationMlp, vec![2, 3, 1]),
        ] {
            let cfg = NetworkConfig {
                den_degree: 2,
                mode,
                ..NetworkConfig::new(kind, 3, arch)
            };
            let mut net = cfg.build(seed)?;
            perturb_shape_params(&mut net, &mut rng);
            out.push((kind, mode, check_network(&net, &x, FD_STEP)?));
        }
    }
    Ok(out)
}

// Moves α, β, ι, γ and the denominators off their initial values so the check
// does not sit at a special point.
fn perturb_shape_params(net: &mut Network, rng: &mut impl rand::Rng) {
    let names = net.param_names();
    let mut p = net.flat_params();
    let mut at = 0;
    for (name, len) in names
        .iter()
        .zip(net.layers().iter().flat_map(|l| l.params()).map(|(_, t)| t.len()))
    {
        let scalar =
            name.ends_with("_raw") || name.ends_with("den") || name.ends_with("den_coeffs") || name.ends_with("psi");
        if scalar {
            for v in &mut p[at..at + len] {
                *v += rng.random_range(-0.3..0.3);
            }
        }
        at += len;
    }
    net.set_flat_params(&p).expect("same length");
}
