//! `F'' + (2/ξ) F' + F^w = 0`, `F(0) = 1`, `F'(0) = 0`.

use alloc::vec::Vec;

use super::{find_first_root, train, OptimizerConfig, RunStatus, TrainReport};
use crate::autodiff::{Jet, JetFn, Tape, Var};
use crate::error::{invalid, Error, Result};
use crate::layers::{BoundNetwork, NetworkConfig};
use crate::tensor::Tensor;

/// Grid used to scan the trained solution for its first root.
pub const ROOT_GRID: usize = 10_000;

/// First zeros of the Lane-Emden functions for `w = 0..=4`.
const ROOTS: [f64; 5] = [
    2.449_489_742_783_178,
    core::f64::consts::PI,
    3.653_753_74,
    6.896_848_62,
    14.971_546_35,
];

pub fn reference_root(w: u32) -> Option<f64> {
    ROOTS.get(w as usize).copied()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeTask {
    pub w: u32,
    pub n_collocation: usize,
    pub domain_end: f64,
}

impl OdeTask {
    pub fn new(w: u32) -> Self {
        Self {
            w,
            n_collocation: 1500,
            domain_end: 15.0,
        }
    }

    /// `ξ_i = i·L/n` for `i = 1..=n`; the singular point 0 is left out.
    pub fn collocation(&self) -> Tensor {
        let n = self.n_collocation;
        let h = self.domain_end / n as f64;
        Tensor::column(&(1..=n).map(|i| i as f64 * h).collect::<Vec<_>>())
    }
}

fn derivatives(tape: &mut Tape, out: &Jet) -> Result<(Var, Var)> {
    match out.partials.first() {
        Some(p) => Ok((p.first, p.second)),
        None => {
            let shape = tape.value(out.value).shape().to_vec();
            let z = tape.constant(Tensor::zeros(&shape));
            Ok((z, z))
        }
    }
}

/// `mean (ξF'' + 2F' + ξF^w)² + (F(0) - 1)² + F'(0)²`.
pub fn lane_emden_loss(tape: &mut Tape, f: &impl JetFn, w: u32, points: &Tensor) -> Result<Var> {
    if w > 4 {
        return Err(invalid("Lane-Emden index w must lie in 0..=4"));
    }
    let xi = Jet::seed(tape, points.clone(), &[0])?;
    let out = f.eval(tape, &xi)?;
    let (d1, d2) = derivatives(tape, &out)?;
    let x = xi.value;
    let power = if w == 0 {
        tape.constant(Tensor::ones(tape.value(out.value).shape()))
    } else {
        tape.pow(out.value, w as f64)
    };
    let a = tape.mul(x, d2)?;
    let b = tape.scale(d1, 2.0);
    let c = tape.mul(x, power)?;
    let r = tape.add(a, b)?;
    let r = tape.add(r, c)?;
    let r2 = tape.square(r);
    let residual = tape.mean(r2);

    let origin = Jet::seed(tape, Tensor::zeros(&[1, 1]), &[0])?;
    let at0 = f.eval(tape, &origin)?;
    let (d1_0, _) = derivatives(tape, &at0)?;
    let e0 = tape.shift(at0.value, -1.0);
    let e0 = tape.square(e0);
    let e1 = tape.square(d1_0);
    let ic = tape.add(e0, e1)?;
    let ic = tape.sum(ic);
    tape.add(residual, ic)
}

pub fn solve_lane_emden(task: &OdeTask, net: &NetworkConfig, opt: &OptimizerConfig, seed: u64) -> Result<TrainReport> {
    if net.architecture.first() != Some(&1) || net.architecture.last() != Some(&1) {
        return Err(invalid("Lane-Emden needs a scalar-in scalar-out network"));
    }
    let points = task.collocation();
    let mut model = net.build(seed)?;
    let w = task.w;
    let outcome = train(
        &mut model,
        &|t: &mut Tape, b: &BoundNetwork<'_>| lane_emden_loss(t, b, w, &points),
        opt,
    )?;
    let mut report = TrainReport::new(seed, RunStatus::from_optimizer(outcome.status));
    report.losses = outcome.losses;
    if report.status != RunStatus::Ok {
        return Ok(report);
    }
    let root = find_first_root(
        |xs| Ok(model.predict(&Tensor::column(xs))?.into_data()),
        (0.0, task.domain_end),
        ROOT_GRID,
    );
    match root {
        Ok(Some(r)) => {
            report.root = Some(r);
            report.root_err = reference_root(w).map(|z| (r - z).abs());
        }
        Ok(None) => report.status = RunStatus::NoRoot,
        Err(Error::NonFinite { .. }) => report.status = RunStatus::Diverged,
        Err(e) => return Err(e),
    }
    Ok(report)
}
