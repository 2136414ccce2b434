//! Central finite-difference checks of reverse-mode gradients.

use alloc::string::String;
use alloc::vec::Vec;

use crate::autodiff::{Jet, JetFn, Tape};
use crate::error::{invalid, Result};
use crate::layers::Network;
use crate::tensor::Tensor;

/// Default central-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Gradients smaller than this are compared in absolute terms.
pub const GRAD_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_FLOOR)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_rel_err: f64,
    /// Flat index of the worst entry.
    pub worst: usize,
    pub checked: usize,
    /// Parameter tensors that the backward pass never reached.
    pub missing: Vec<String>,
}

impl GradCheck {
    pub fn passes(&self, tol: f64) -> bool {
        self.missing.is_empty() && self.max_rel_err < tol
    }
}

/// Compare `analytic` against central differences of `f` around `x0`.
pub fn check_flat(mut f: impl FnMut(&[f64]) -> Result<f64>, x0: &[f64], analytic: &[f64], h: f64) -> Result<GradCheck> {
    if x0.len() != analytic.len() {
        return Err(invalid("gradient length differs from parameter count"));
    }
    let mut x = x0.to_vec();
    let (mut max_rel_err, mut worst) = (0.0, 0);
    for i in 0..x.len() {
        x[i] = x0[i] + h;
        let up = f(&x)?;
        x[i] = x0[i] - h;
        let down = f(&x)?;
        x[i] = x0[i];
        let e = relative_error(analytic[i], (up - down) / (2.0 * h));
        if !(e <= max_rel_err) {
            max_rel_err = e;
            worst = i;
        }
    }
    Ok(GradCheck {
        max_rel_err,
        worst,
        checked: x.len(),
        missing: Vec::new(),
    })
}

// Loss with non-trivial gradients everywhere: mean((F(x) - t)²) for a fixed
// target t.
fn probe_loss(tape: &mut Tape, f: &impl JetFn, x: &Tensor) -> Result<crate::autodiff::Var> {
    let xj = Jet::constant(tape.constant(x.clone()));
    let y = f.eval(tape, &xj)?.value;
    let shape = tape.value(y).shape().to_vec();
    let n = tape.value(y).len();
    let target = (0..n).map(|i| libm::sin(1.0 + i as f64)).collect();
    let t = tape.constant(Tensor::new(shape, target)?);
    let r = tape.sub(y, t)?;
    let r2 = tape.square(r);
    Ok(tape.mean(r2))
}

/// Check every parameter of `net` on batch `x`.
pub fn check_network(net: &Network, x: &Tensor, h: f64) -> Result<GradCheck> {
    let mut tape = Tape::new();
    let bound = net.bind(&mut tape);
    let root = probe_loss(&mut tape, &bound, x)?;
    let grads = tape.backward(root)?;
    let names = net.param_names();
    let missing = bound
        .vars()
        .zip(&names)
        .filter(|(v, _)| grads.get(*v).is_none())
        .map(|(_, n)| n.clone())
        .collect();
    let analytic = bound.flat_gradients(&grads);

    let mut probe = net.clone();
    let mut report = check_flat(
        |p| {
            probe.set_flat_params(p)?;
            let mut t = Tape::new();
            let r = probe_loss(&mut t, &probe, x)?;
            Ok(t.value(r).data()[0])
        },
        &net.flat_params(),
        &analytic,
        h,
    )?;
    report.missing = missing;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::{LayerKind, NetworkConfig, NetworkMode};

    #[test]
    fn quadratic_flat_check() {
        let r = check_flat(|p| Ok(p[0] * p[0] + 3.0 * p[1]), &[2.0, -1.0], &[4.0, 3.0], FD_STEP).unwrap();
        assert!(r.max_rel_err < 1e-9);
        let bad = check_flat(|p| Ok(p[0] * p[0]), &[2.0], &[5.0], FD_STEP).unwrap();
        assert!(bad.max_rel_err > 0.1);
    }

    #[test]
    fn floor_treats_tiny_gradients_absolutely() {
        assert!(relative_error(0.0, 1e-12) < 1e-5);
        assert!((relative_error(1.0, 1.1) - 0.1 / 1.1).abs() < 1e-15);
    }

    #[test]
    fn small_kan_network_passes() {
        let cfg = NetworkConfig {
            mode: NetworkMode::Kan,
            ..NetworkConfig::new(LayerKind::JacobiRKan, 3, alloc::vec![2, 2, 1])
        };
        let net = cfg.build(3).unwrap();
        let x = Tensor::new(alloc::vec![3, 2], alloc::vec![0.2, -1.0, 1.5, 0.3, -0.7, 2.2]).unwrap();
        let r = check_network(&net, &x, FD_STEP).unwrap();
        assert!(r.passes(1e-5), "{r:?}");
    }
}
