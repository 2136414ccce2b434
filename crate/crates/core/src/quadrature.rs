//! Gauss-Legendre quadrature on `[-1, 1]`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::Result;
use crate::jacobi::jacobi_values;

/// Nodes and weights of the `n`-point rule, nodes ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n
        let mut x = libm::cos(core::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5));
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if libm::fabs(dx) < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// `∫ J_m J_n (1-ξ)^α (1+ξ)^β dξ` over `[-1, 1]` with an `nodes`-point
/// Gauss-Legendre rule.
pub fn jacobi_inner_product(m: usize, n: usize, alpha: f64, beta: f64, nodes: usize) -> Result<f64> {
    let (xs, ws) = gauss_legendre(nodes);
    let top = m.max(n);
    let mut total = 0.0;
    for (&x, &w) in xs.iter().zip(&ws) {
        let j = jacobi_values(top, alpha, beta, x)?;
        total += w * libm::pow(1.0 - x, alpha) * libm::pow(1.0 + x, beta) * j[m] * j[n];
    }
    Ok(total)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}
