//! `Δu = sin(πx) sin(πy)` on the unit square with `u = 0` on the boundary.
//! The exact solution is `-sin(πx) sin(πy) / (2π²)`.

use alloc::vec::Vec;
use core::f64::consts::PI;

use super::{mse, train, OptimizerConfig, RunStatus, TrainReport};
use crate::autodiff::{Jet, JetFn, Tape, Var};
use crate::error::{invalid, Error, Result};
use crate::layers::{BoundNetwork, NetworkConfig};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdeTask {
    /// Training grid is `grid × grid`, boundary included.
    pub grid: usize,
    pub eval_grid: usize,
}

impl Default for PdeTask {
    fn default() -> Self {
        Self {
            grid: 50,
            eval_grid: 101,
        }
    }
}

fn linspace(n: usize) -> Vec<f64> {
    (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
}

fn rows(points: &[(f64, f64)]) -> Tensor {
    let data = points.iter().flat_map(|&(x, y)| [x, y]).collect();
    Tensor::new(alloc::vec![points.len(), 2], data).expect("two columns")
}

fn source(x: f64, y: f64) -> f64 {
    libm::sin(PI * x) * libm::sin(PI * y)
}

pub fn exact_value(x: f64, y: f64) -> f64 {
    -source(x, y) / (2.0 * PI * PI)
}

/// The exact solution as a batch function, for witness checks.
pub fn exact_solution(tape: &mut Tape, x: &Jet) -> Result<Jet> {
    let a = x.column(tape, 0)?.scale(tape, PI)?.sin(tape)?;
    let b = x.column(tape, 1)?.scale(tape, PI)?.sin(tape)?;
    a.mul(tape, &b)?.scale(tape, -1.0 / (2.0 * PI * PI))
}

impl PdeTask {
    /// `(interior, boundary)` points of the training grid as `[n, 2]` rows.
    pub fn training_points(&self) -> Result<(Tensor, Tensor)> {
        if self.grid < 3 {
            return Err(invalid("PDE grid needs at least 3 points per side"));
        }
        let g = linspace(self.grid);
        let last = self.grid - 1;
        let (mut inner, mut edge) = (Vec::new(), Vec::new());
        for (i, &x) in g.iter().enumerate() {
            for (j, &y) in g.iter().enumerate() {
                if i == 0 || j == 0 || i == last || j == last {
                    edge.push((x, y));
                } else {
                    inner.push((x, y));
                }
            }
        }
        Ok((rows(&inner), rows(&edge)))
    }

    pub fn evaluation_points(&self) -> Tensor {
        let g = linspace(self.eval_grid);
        let pts: Vec<(f64, f64)> = g.iter().flat_map(|&x| g.iter().map(move |&y| (x, y))).collect();
        rows(&pts)
    }
}

/// `mean (u_xx + u_yy - f)²` over the interior plus `mean u²` over the boundary.
pub fn elliptic_pde_loss(tape: &mut Tape, u: &impl JetFn, interior: &Tensor, boundary: &Tensor) -> Result<Var> {
    let xi = Jet::seed(tape, interior.clone(), &[0, 1])?;
    let out = u.eval(tape, &xi)?;
    let n = interior.dims2().map(|(n, _)| n).unwrap_or(0);
    let f: Vec<f64> = interior.data().chunks(2).map(|p| source(p[0], p[1])).collect();
    let f = tape.constant(Tensor::new(alloc::vec![n, 1], f)?);
    let lap = match out.partials.as_slice() {
        [px, py] => tape.add(px.second, py.second)?,
        _ => tape.constant(Tensor::zeros(tape.value(out.value).shape())),
    };
    let r = tape.sub(lap, f)?;
    let r2 = tape.square(r);
    let interior_term = tape.mean(r2);

    let b = Jet::constant(tape.constant(boundary.clone()));
    let ub = u.eval(tape, &b)?.value;
    let ub2 = tape.square(ub);
    let boundary_term = tape.mean(ub2);
    tape.add(interior_term, boundary_term)
}

pub fn solve_elliptic_pde(
    task: &PdeTask,
    net: &NetworkConfig,
    opt: &OptimizerConfig,
    seed: u64,
) -> Result<TrainReport> {
    if net.architecture.first() != Some(&2) || net.architecture.last() != Some(&1) {
        return Err(invalid("the PDE needs a two-input scalar-output network"));
    }
    let (interior, boundary) = task.training_points()?;
    let mut model = net.build(seed)?;
    let outcome = train(
        &mut model,
        &|t: &mut Tape, b: &BoundNetwork<'_>| elliptic_pde_loss(t, b, &interior, &boundary),
        opt,
    )?;
    let mut report = TrainReport::new(seed, RunStatus::from_optimizer(outcome.status));
    report.losses = outcome.losses;
    let eval = task.evaluation_points();
    let exact: Vec<f64> = eval.data().chunks(2).map(|p| exact_value(p[0], p[1])).collect();
    match model.predict(&eval) {
        Ok(pred) => {
            let max = pred
                .data()
                .iter()
                .zip(&exact)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            report.max_abs_err = Some(max);
            report.test_mse = Some(mse(pred.data(), &exact));
            if !max.is_finite() {
                report.status = RunStatus::Diverged;
            }
        }
        Err(Error::NonFinite { .. }) => report.status = RunStatus::Diverged,
        Err(e) => return Err(e),
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_split() {
        let (inner, edge) = PdeTask::default().training_points().unwrap();
        assert_eq!(inner.shape(), &[48 * 48, 2]);
        assert_eq!(edge.shape(), &[4 * 49, 2]);
        assert_eq!(PdeTask::default().evaluation_points().shape(), &[101 * 101, 2]);
    }

    #[test]
    fn exact_solution_is_a_witness() {
        let (inner, edge) = PdeTask::default().training_points().unwrap();
        let mut t = Tape::new();
        let l = elliptic_pde_loss(&mut t, &exact_solution, &inner, &edge).unwrap();
        assert!(t.value(l).data()[0] < 1e-12);
    }

    #[test]
    fn zero_net_sees_the_source() {
        let task = PdeTask {
            grid: 201,
            eval_grid: 3,
        };
        let (inner, edge) = task.training_points().unwrap();
        let zero = |t: &mut Tape, x: &Jet| {
            let n = t.value(x.value).shape()[0];
            Ok(Jet::constant(t.constant(Tensor::zeros(&[n, 1]))))
        };
        let mut t = Tape::new();
        let l = elliptic_pde_loss(&mut t, &zero, &inner, &edge).unwrap();
        assert!((t.value(l).data()[0] - 0.25).abs() < 5e-3);
    }

    #[test]
    fn boundary_term_vanishes_for_the_exact_solution() {
        let (_, edge) = PdeTask::default().training_points().unwrap();
        assert!(edge.data().chunks(2).all(|p| exact_value(p[0], p[1]).abs() < 1e-16));
    }
}
