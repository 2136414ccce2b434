use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{mse, mse_loss, train, OptimizerConfig, RunStatus, TrainReport};
use crate::autodiff::Tape;
use crate::error::{invalid, Error, Result};
use crate::layers::{BoundNetwork, Network, NetworkConfig};
use crate::tensor::Tensor;

pub const TRAIN_STREAM: u64 = 0;
pub const TEST_STREAM: u64 = 1;

/// Functions with asymptotic behaviour on the real line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Target {
    /// `ξ / (1 + ξ²)`
    F1,
    /// `1 / (1 + ξ²)`
    F2,
    /// `exp(-ξ²)`
    F3,
    /// Identically zero; a sanity target.
    Zero,
}

impl Target {
    pub fn eval(self, x: f64) -> f64 {
        match self {
            Target::F1 => x / (1.0 + x * x),
            Target::F2 => 1.0 / (1.0 + x * x),
            Target::F3 => libm::exp(-x * x),
            Target::Zero => 0.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Target::F1 => "F1",
            Target::F2 => "F2",
            Target::F3 => "F3",
            Target::Zero => "zero",
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "F1" | "f1" => Ok(Target::F1),
            "F2" | "f2" => Ok(Target::F2),
            "F3" | "f3" => Ok(Target::F3),
            "zero" => Ok(Target::Zero),
            _ => Err(invalid(alloc::format!("unknown regression target `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionTask {
    pub target: Target,
    pub n_train: usize,
    pub n_test: usize,
    pub domain: (f64, f64),
    pub seed: u64,
}

impl RegressionTask {
    pub fn new(target: Target, seed: u64) -> Self {
        Self {
            target,
            n_train: 200,
            n_test: 100,
            domain: (-10.0, 10.0),
            seed,
        }
    }

    fn sample(&self, stream: u64, n: usize) -> (Tensor, Tensor) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        let (a, b) = self.domain;
        let xs: Vec<f64> = (0..n).map(|_| rng.random_range(a..b)).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| self.target.eval(x)).collect();
        (Tensor::column(&xs), Tensor::column(&ys))
    }

    pub fn generate(&self) -> Dataset {
        let (train_x, train_y) = self.sample(TRAIN_STREAM, self.n_train);
        let (test_x, test_y) = self.sample(TEST_STREAM, self.n_test);
        Dataset {
            train_x,
            train_y,
            test_x,
            test_y,
        }
    }
}

/// Inputs and targets as `[n, 1]` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train_x: Tensor,
    pub train_y: Tensor,
    pub test_x: Tensor,
    pub test_y: Tensor,
}

/// Fit `task.target` with a network built from `net` seeded by `task.seed`.
pub fn train_regression(task: &RegressionTask, net: &NetworkConfig, opt: &OptimizerConfig) -> Result<TrainReport> {
    if net.architecture.first() != Some(&1) || net.architecture.last() != Some(&1) {
        return Err(invalid("regression needs a scalar-in scalar-out network"));
    }
    fit(task, net.build(task.seed)?, opt)
}

/// Padé-rKAN fit of F1 where every denominator coefficient starts `delta`
/// away from its initial value, with a random sign per coefficient.
pub fn pole_stress(seed: u64, net: &NetworkConfig, opt: &OptimizerConfig, delta: f64) -> Result<TrainReport> {
    let mut model = net.build(seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(PERTURB_STREAM);
    let mut p = model.flat_params();
    let mut at = 0;
    for layer in model.layers() {
        for (name, t) in layer.params() {
            if name == "den" || name == "den_coeffs" {
                for v in &mut p[at..at + t.len()] {
                    *v += if rng.random::<bool>() { delta } else { -delta };
                }
            }
            at += t.len();
        }
    }
    model.set_flat_params(&p)?;
    fit(&RegressionTask::new(Target::F1, seed), model, opt)
}

const PERTURB_STREAM: u64 = 2;

fn fit(task: &RegressionTask, mut model: Network, opt: &OptimizerConfig) -> Result<TrainReport> {
    let data = task.generate();
    let outcome = train(
        &mut model,
        &|t: &mut Tape, b: &BoundNetwork<'_>| mse_loss(t, b, &data.train_x, &data.train_y),
        opt,
    )?;
    let mut report = TrainReport::new(task.seed, RunStatus::from_optimizer(outcome.status));
    report.losses = outcome.losses;
    let scores = model
        .predict(&data.train_x)
        .and_then(|p| Ok((p, model.predict(&data.test_x)?)));
    match scores {
        Ok((p_train, p_test)) => {
            report.train_mse = Some(mse(p_train.data(), data.train_y.data()));
            report.test_mse = Some(mse(p_test.data(), data.test_y.data()));
        }
        Err(Error::NonFinite { .. }) => report.status = RunStatus::Diverged,
        Err(e) => return Err(e),
    }
    if report.train_mse.is_some_and(|v| !v.is_finite()) || report.test_mse.is_some_and(|v| !v.is_finite()) {
        report.status = RunStatus::Diverged;
    }
    Ok(report)
}
