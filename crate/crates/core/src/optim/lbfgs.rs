//! Limited-memory BFGS with an Armijo backtracking line search.

use std::collections::VecDeque;
use std::ops::ControlFlow;

use crate::error::{Error, Result};
use crate::tensor::dot;

#[derive(Debug, Clone, PartialEq)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iter: usize,
    /// Stop once the infinity norm of the gradient falls below this.
    pub tol: f64,
    pub c1: f64,
    pub backtrack: f64,
    pub max_trials: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        LbfgsOptions {
            memory: 10,
            max_iter: 100,
            tol: 1e-8,
            c1: 1e-4,
            backtrack: 0.5,
            max_trials: 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LbfgsStatus {
    Converged,
    MaxIterations,
    /// No step satisfied the Armijo condition within `max_trials` halvings.
    LineSearchFailed,
    /// The per-iteration callback asked to stop.
    Stopped,
}

#[derive(Debug, Clone, Copy)]
pub struct IterInfo<'a> {
    pub iteration: usize,
    pub x: &'a [f64],
    pub f: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone)]
pub struct LbfgsReport {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub status: LbfgsStatus,
    /// Objective value after each accepted step.
    pub trajectory: Vec<f64>,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn lbfgs_minimize<F>(objective: F, x0: Vec<f64>, opts: &LbfgsOptions) -> Result<LbfgsReport>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    lbfgs_minimize_with(objective, x0, opts, |_| ControlFlow::Continue(()))
}

/// As [`lbfgs_minimize`], calling `on_iter` after every accepted step.
pub fn lbfgs_minimize_with<F, C>(mut objective: F, x0: Vec<f64>, opts: &LbfgsOptions, mut on_iter: C) -> Result<LbfgsReport>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
    C: FnMut(&IterInfo) -> ControlFlow<()>,
{
    if opts.memory == 0 {
        return Err(Error::Param("L-BFGS memory must be >= 1".into()));
    }
    let mut x = x0;
    let (mut f, mut g) = objective(&x)?;
    if g.len() != x.len() {
        return Err(Error::shape("lbfgs objective", &[x.len()], &[g.len()]));
    }
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut trajectory = Vec::new();
    fn report(x: Vec<f64>, f: f64, g: &[f64], iterations: usize, status: LbfgsStatus, trajectory: Vec<f64>) -> LbfgsReport {
        LbfgsReport {
            x,
            f,
            grad_norm: inf_norm(g),
            iterations,
            status,
            trajectory,
        }
    }

    if inf_norm(&g) < opts.tol {
        return Ok(report(x, f, &g, 0, LbfgsStatus::Converged, trajectory));
    }

    for iter in 1..=opts.max_iter {
        let mut direction = two_loop(&g, &history);
        let mut slope = dot(&g, &direction);
        if slope >= 0.0 || !slope.is_finite() {
            history.clear();
            direction = g.iter().map(|v| -v).collect();
            slope = dot(&g, &direction);
        }
        // Without curvature information the raw gradient has no natural scale.
        let mut alpha = if history.is_empty() {
            (1.0 / dot(&g, &g).sqrt()).min(1.0)
        } else {
            1.0
        };

        let mut accepted = None;
        for _ in 0..opts.max_trials {
            let trial: Vec<f64> = x.iter().zip(&direction).map(|(xi, di)| xi + alpha * di).collect();
            let (ft, gt) = objective(&trial)?;
            if ft.is_finite() && ft <= f + opts.c1 * alpha * slope {
                accepted = Some((trial, ft, gt));
                break;
            }
            alpha *= opts.backtrack;
        }
        let Some((x_new, f_new, g_new)) = accepted else {
            return Ok(report(x, f, &g, iter - 1, LbfgsStatus::LineSearchFailed, trajectory));
        };

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 0.0 && sy.is_finite() {
            if history.len() == opts.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        x = x_new;
        f = f_new;
        g = g_new;
        trajectory.push(f);

        let grad_norm = inf_norm(&g);
        let info = IterInfo {
            iteration: iter,
            x: &x,
            f,
            grad_norm,
        };
        if on_iter(&info).is_break() {
            return Ok(report(x, f, &g, iter, LbfgsStatus::Stopped, trajectory));
        }
        if grad_norm < opts.tol {
            return Ok(report(x, f, &g, iter, LbfgsStatus::Converged, trajectory));
        }
    }
    let iters = opts.max_iter;
    Ok(report(x, f, &g, iters, LbfgsStatus::MaxIterations, trajectory))
}

/// Two-loop recursion: returns `-H g` for the implicit inverse Hessian `H`.
fn two_loop(g: &[f64], history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let a = rho * dot(s, &q);
        q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push(a);
    }
    if let Some((s, y, _)) = history.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        q.iter_mut().zip(s).for_each(|(qi, si)| *qi += si * (a - b));
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic(c: Vec<f64>) -> impl FnMut(&[f64]) -> Result<(f64, Vec<f64>)> {
        move |x| {
            let diff: Vec<f64> = x.iter().zip(&c).map(|(a, b)| a - b).collect();
            Ok((dot(&diff, &diff), diff.iter().map(|d| 2.0 * d).collect()))
        }
    }

    fn rosenbrock(x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (a, b) = (x[0], x[1]);
        let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
        Ok((f, g))
    }

    #[test]
    fn quadratic_converges_quickly() {
        let c = vec![1.0, -2.0, 3.5, 0.25];
        let r = lbfgs_minimize(quadratic(c.clone()), vec![10.0, 4.0, -7.0, 0.0], &LbfgsOptions::default()).unwrap();
        assert_eq!(r.status, LbfgsStatus::Converged);
        assert!(r.iterations <= 10, "{} iterations", r.iterations);
        for (a, b) in r.x.iter().zip(&c) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn start_at_minimizer() {
        let r = lbfgs_minimize(quadratic(vec![1.0, 2.0]), vec![1.0, 2.0], &LbfgsOptions::default()).unwrap();
        assert_eq!(r.iterations, 0);
        assert_eq!(r.status, LbfgsStatus::Converged);
    }

    /// Steepest descent with the same Armijo search, run long enough to locate
    /// the Rosenbrock minimum independently of the quasi-Newton machinery.
    fn gradient_descent_oracle(mut x: Vec<f64>, iters: usize) -> Vec<f64> {
        for _ in 0..iters {
            let (f, g) = rosenbrock(&x).unwrap();
            let gg = dot(&g, &g);
            if gg < 1e-24 {
                break;
            }
            let mut alpha = 1.0;
            loop {
                let t: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - alpha * b).collect();
                if rosenbrock(&t).unwrap().0 <= f - 1e-4 * alpha * gg || alpha < 1e-20 {
                    x = t;
                    break;
                }
                alpha *= 0.5;
            }
        }
        x
    }

    #[test]
    fn rosenbrock_benchmark() {
        let oracle = gradient_descent_oracle(vec![-1.2, 1.0], 200_000);
        assert!((oracle[0] - 1.0).abs() < 1e-3 && (oracle[1] - 1.0).abs() < 1e-3);

        let opts = LbfgsOptions {
            max_iter: 100,
            tol: 1e-10,
            ..LbfgsOptions::default()
        };
        let r = lbfgs_minimize(rosenbrock, vec![-1.2, 1.0], &opts).unwrap();
        assert!(r.f < 1e-6, "f = {} after {} iterations ({:?})", r.f, r.iterations, r.status);
        assert!((r.x[0] - oracle[0]).abs() < 1e-2 && (r.x[1] - oracle[1]).abs() < 1e-2);
        // Every accepted step decreases the objective.
        assert!(r.trajectory.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn line_search_failure_is_reported() {
        // The reported gradient points uphill, so no step can satisfy Armijo.
        let bogus = |x: &[f64]| Ok((x[0] * x[0], vec![-2.0 * x[0] - 1.0]));
        let r = lbfgs_minimize(bogus, vec![1.0], &LbfgsOptions::default()).unwrap();
        assert_eq!(r.status, LbfgsStatus::LineSearchFailed);
        assert_eq!(r.x, vec![1.0]);
    }

    #[test]
    fn callback_can_stop() {
        let mut seen = 0;
        let r = lbfgs_minimize_with(rosenbrock, vec![-1.2, 1.0], &LbfgsOptions::default(), |info| {
            seen = info.iteration;
            if info.iteration == 3 {
                ControlFlow::Break(())
            } else {
                ControlFlow::Continue(())
            }
        })
        .unwrap();
        assert_eq!(seen, 3);
        assert_eq!(r.status, LbfgsStatus::Stopped);
        assert_eq!(r.trajectory.len(), 3);
    }
}
