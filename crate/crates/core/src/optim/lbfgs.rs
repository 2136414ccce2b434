//! Limited-memory BFGS with a strong-Wolfe line search.
//!
//! The line search follows the bracketing and zoom scheme with safeguarded
//! cubic interpolation popularised by minFunc and PyTorch. One epoch is one
//! accepted step.

use alloc::collections::VecDeque;
use alloc::vec::Vec;

use super::{check_gradient, dot, Objective};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsConfig {
    pub max_epochs: usize,
    pub history: usize,
    /// Sufficient-decrease constant.
    pub c1: f64,
    /// Curvature constant.
    pub c2: f64,
    /// Function evaluations allowed per line search.
    pub max_line_search: usize,
    /// Stop once `max |g|` drops below this.
    pub tolerance_grad: f64,
    /// Line-search brackets narrower than this (in parameter units) stop the zoom.
    pub tolerance_change: f64,
    /// Step taken along `-g` when the line search makes no progress.
    pub fallback_step: f64,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self {
            max_epochs: 50,
            history: 10,
            c1: 1e-4,
            c2: 0.9,
            max_line_search: 25,
            tolerance_grad: 1e-12,
            tolerance_change: 1e-16,
            fallback_step: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    /// Gradient below tolerance.
    Converged,
    /// Epoch budget used up.
    MaxEpochs,
    /// Neither the line search nor the fallback step lowered the loss.
    Stalled,
    /// Non-finite loss at the start point (or during Adam training).
    Diverged,
}

impl Status {
    pub fn name(self) -> &'static str {
        match self {
            Status::Converged | Status::MaxEpochs => "ok",
            Status::Stalled => "stalled",
            Status::Diverged => "diverged",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub params: Vec<f64>,
    /// Initial loss followed by the loss after every accepted step.
    pub losses: Vec<f64>,
    pub status: Status,
    pub evaluations: usize,
}

impl Outcome {
    pub fn final_loss(&self) -> f64 {
        *self.losses.last().expect("trace starts with the initial loss")
    }
}

/// Curvature pairs kept between steps.
#[derive(Debug, Clone, Default)]
pub struct LbfgsState {
    pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)>,
}

/// Pairs with `sᵀy` at or below this are skipped.
const CURVATURE_MIN: f64 = 1e-10;

impl LbfgsState {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    fn push(&mut self, s: Vec<f64>, y: Vec<f64>, history: usize) {
        let sy = dot(&s, &y);
        if sy <= CURVATURE_MIN || history == 0 {
            return;
        }
        if self.pairs.len() == history {
            self.pairs.pop_front();
        }
        self.pairs.push_back((s, y, 1.0 / sy));
    }

    /// `-H g` by the two-loop recursion.
    pub fn direction(&self, g: &[f64]) -> Vec<f64> {
        let mut q: Vec<f64> = g.iter().map(|v| -v).collect();
        let mut alphas = Vec::with_capacity(self.pairs.len());
        for (s, y, rho) in self.pairs.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        if let Some((s, y, _)) = self.pairs.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y, rho), a) in self.pairs.iter().zip(alphas.into_iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        q
    }
}

fn cubic_interpolate(p1: (f64, f64, f64), p2: (f64, f64, f64), bounds: Option<(f64, f64)>) -> f64 {
    let ((x1, f1, g1), (x2, f2, g2)) = (p1, p2);
    let (lo, hi) = bounds.unwrap_or(if x1 <= x2 { (x1, x2) } else { (x2, x1) });
    let d1 = g1 + g2 - 3.0 * (f1 - f2) / (x1 - x2);
    let d2_sq = d1 * d1 - g1 * g2;
    let t = if d2_sq >= 0.0 {
        let d2 = libm::sqrt(d2_sq);
        let m = if x1 <= x2 {
            x2 - (x2 - x1) * ((g2 + d2 - d1) / (g2 - g1 + 2.0 * d2))
        } else {
            x1 - (x1 - x2) * ((g1 + d2 - d1) / (g1 - g2 + 2.0 * d2))
        };
        m.max(lo).min(hi)
    } else {
        (lo + hi) / 2.0
    };
    if t.is_finite() {
        t
    } else {
        (lo + hi) / 2.0
    }
}

struct Probe {
    t: f64,
    f: f64,
    g: Vec<f64>,
    gtd: f64,
}

struct LineSearch<'a, O> {
    objective: &'a mut O,
    x: &'a [f64],
    d: &'a [f64],
    evaluations: usize,
}

impl<O: Objective> LineSearch<'_, O> {
    fn probe(&mut self, t: f64) -> Result<Probe> {
        let xt: Vec<f64> = self.x.iter().zip(self.d).map(|(x, d)| x + t * d).collect();
        let (f, g) = self.objective.eval(&xt)?;
        self.evaluations += 1;
        // a non-finite trial counts as an infinitely bad one
        if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
            return Ok(Probe {
                t,
                f: f64::INFINITY,
                g,
                gtd: f64::INFINITY,
            });
        }
        let gtd = dot(&g, self.d);
        Ok(Probe { t, f, g, gtd })
    }

    /// Returns the best probe found; its loss may fail to improve on `f0`.
    fn strong_wolfe(&mut self, t: f64, f0: f64, g0: &[f64], gtd0: f64, cfg: &LbfgsConfig) -> Result<Probe> {
        let d_norm = self.d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut new = self.probe(t)?;
        let mut prev = Probe {
            t: 0.0,
            f: f0,
            g: g0.to_vec(),
            gtd: gtd0,
        };
        let mut iter = 0;
        let mut bracket: [Probe; 2];
        loop {
            if new.f > f0 + cfg.c1 * new.t * gtd0 || (iter > 1 && new.f >= prev.f) || new.gtd >= 0.0 {
                bracket = [prev, new];
                break;
            }
            if new.gtd.abs() <= -cfg.c2 * gtd0 {
                return Ok(new);
            }
            iter += 1;
            if iter >= cfg.max_line_search {
                return Ok(new);
            }
            let min_step = new.t + 0.01 * (new.t - prev.t);
            let max_step = new.t * 10.0;
            let t_next = cubic_interpolate(
                (prev.t, prev.f, prev.gtd),
                (new.t, new.f, new.gtd),
                Some((min_step, max_step)),
            );
            prev = new;
            new = self.probe(t_next)?;
        }

        // zoom
        let mut insufficient = false;
        let (mut lo, mut hi) = if bracket[0].f <= bracket[1].f { (0, 1) } else { (1, 0) };
        while iter < cfg.max_line_search {
            let (a, b) = (&bracket[0], &bracket[1]);
            if (b.t - a.t).abs() * d_norm < cfg.tolerance_change {
                break;
            }
            let mut t = cubic_interpolate((a.t, a.f, a.gtd), (b.t, b.f, b.gtd), None);
            let (bmin, bmax) = (a.t.min(b.t), a.t.max(b.t));
            let eps = 0.1 * (bmax - bmin);
            if (bmax - t).min(t - bmin) < eps {
                if insufficient || t >= bmax || t <= bmin {
                    t = if (t - bmax).abs() < (t - bmin).abs() {
                        bmax - eps
                    } else {
                        bmin + eps
                    };
                    insufficient = false;
                } else {
                    insufficient = true;
                }
            } else {
                insufficient = false;
            }
            let p = self.probe(t)?;
            iter += 1;
            if p.f > f0 + cfg.c1 * t * gtd0 || p.f >= bracket[lo].f {
                bracket[hi] = p;
            } else {
                let done = p.gtd.abs() <= -cfg.c2 * gtd0;
                if !done && p.gtd * (bracket[hi].t - bracket[lo].t) >= 0.0 {
                    bracket.swap(lo, hi);
                }
                bracket[lo] = p;
                if done {
                    break;
                }
            }
            (lo, hi) = if bracket[0].f <= bracket[1].f { (0, 1) } else { (1, 0) };
        }
        let [b0, b1] = bracket;
        Ok(if lo == 0 { b0 } else { b1 })
    }
}

/// Minimise `objective` from `x0`.
pub fn lbfgs_minimize(mut objective: impl Objective, x0: &[f64], config: LbfgsConfig) -> Result<Outcome> {
    let mut x = x0.to_vec();
    let (mut f, mut g) = objective.eval(&x)?;
    let mut evaluations = 1;
    let mut losses = alloc::vec![f];
    if !f.is_finite() {
        return Ok(Outcome {
            params: x,
            losses,
            status: Status::Diverged,
            evaluations,
        });
    }
    check_gradient(&g)?;
    let mut state = LbfgsState::default();
    let mut status = Status::MaxEpochs;

    for epoch in 0..config.max_epochs {
        let g_max = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if g_max <= config.tolerance_grad {
            status = Status::Converged;
            break;
        }
        let mut d = state.direction(&g);
        let mut gtd = dot(&g, &d);
        if !(gtd < 0.0) {
            state = LbfgsState::default();
            d = g.iter().map(|v| -v).collect();
            gtd = dot(&g, &d);
        }
        let t0 = if state.is_empty() && epoch == 0 {
            (1.0 / g.iter().map(|v| v.abs()).sum::<f64>()).min(1.0)
        } else {
            1.0
        };

        let mut ls = LineSearch {
            objective: &mut objective,
            x: &x,
            d: &d,
            evaluations: 0,
        };
        let mut best = ls.strong_wolfe(t0, f, &g, gtd, &config)?;
        if !(best.f < f) {
            // one plain gradient step before giving up
            state = LbfgsState::default();
            let sd: Vec<f64> = g.iter().map(|v| -v).collect();
            let mut fb = LineSearch {
                objective: ls.objective,
                x: &x,
                d: &sd,
                evaluations: ls.evaluations,
            };
            best = fb.probe(config.fallback_step)?;
            evaluations += fb.evaluations;
            if !(best.f < f) {
                status = Status::Stalled;
                break;
            }
            d = sd;
        } else {
            evaluations += ls.evaluations;
        }
        check_gradient(&best.g)?;

        let s: Vec<f64> = d.iter().map(|v| best.t * v).collect();
        let y: Vec<f64> = best.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        x.iter_mut().zip(&s).for_each(|(xi, si)| *xi += si);
        state.push(s, y, config.history);
        f = best.f;
        g = best.g;
        losses.push(f);
    }
    Ok(Outcome {
        params: x,
        losses,
        status,
        evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn rosenbrock(x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (a, b) = (x[0], x[1]);
        let f = (1.0 - a) * (1.0 - a) + 100.0 * (b - a * a) * (b - a * a);
        let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
        Ok((f, g))
    }

    #[test]
    fn quadratic_in_five_epochs() {
        let cfg = LbfgsConfig {
            max_epochs: 5,
            ..Default::default()
        };
        let out = lbfgs_minimize(
            |x: &[f64]| Ok(((x[0] - 3.0).powi(2), vec![2.0 * (x[0] - 3.0)])),
            &[0.0],
            cfg,
        )
        .unwrap();
        assert!((out.params[0] - 3.0).abs() < 1e-8, "{out:?}");
    }

    #[test]
    fn rosenbrock_in_a_hundred_epochs() {
        let cfg = LbfgsConfig {
            max_epochs: 100,
            ..Default::default()
        };
        let out = lbfgs_minimize(rosenbrock, &[-1.2, 1.0], cfg).unwrap();
        assert!(out.final_loss() < 1e-6, "{:?}", out.losses);
        assert!(out.losses.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let out = lbfgs_minimize(
            |_: &[f64]| Ok((1.0, vec![0.0, 0.0])),
            &[0.5, -0.5],
            LbfgsConfig::default(),
        )
        .unwrap();
        assert_eq!(out.params, vec![0.5, -0.5]);
        assert_eq!(out.status, Status::Converged);
    }

    #[test]
    fn non_finite_start_is_reported() {
        let out = lbfgs_minimize(|_: &[f64]| Ok((f64::NAN, vec![0.0])), &[0.0], LbfgsConfig::default()).unwrap();
        assert_eq!(out.status, Status::Diverged);
    }

    #[test]
    fn survives_a_wall() {
        // loss explodes past x = 1; the line search has to back off
        let f = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
            if x[0] > 1.0 {
                Ok((f64::NAN, vec![f64::NAN]))
            } else {
                Ok(((x[0] - 0.9).powi(2), vec![2.0 * (x[0] - 0.9)]))
            }
        };
        let out = lbfgs_minimize(f, &[-50.0], LbfgsConfig::default()).unwrap();
        assert!((out.params[0] - 0.9).abs() < 1e-6, "{out:?}");
    }

    #[test]
    fn two_loop_with_one_pair_matches_secant() {
        let mut s = LbfgsState::default();
        s.push(vec![1.0, 0.0], vec![2.0, 0.0], 5);
        let d = s.direction(&[4.0, 0.0]);
        assert!((d[0] + 2.0).abs() < 1e-15);
    }
}
