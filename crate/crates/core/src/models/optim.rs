//! Line-search minimizers over flat parameter vectors.

use std::collections::VecDeque;

use ndarray::Array1;

use crate::error::{Error, Result};

const ARMIJO_C1: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// Gradient norm fell below the tolerance.
    Converged,
    /// No step along the search direction decreased the objective.
    Stalled,
    /// An accepted step lowered the objective by less than the relative
    /// tolerance.
    SmallDecrease,
    MaxIterations,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Method {
    GradientDescent,
    Lbfgs { memory: usize },
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Options {
    pub method: Method,
    pub max_iters: usize,
    pub tolerance: f64,
    /// Stop once `(f_k − f_{k+1}) ≤ f_tolerance · max(|f_k|, |f_{k+1}|, 1)`.
    pub f_tolerance: f64,
    pub initial_step: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct Minimum {
    pub x: Array1<f64>,
    pub value: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub stop: StopReason,
    /// Objective after each accepted step, starting with the initial value.
    pub trace: Vec<f64>,
}

/// Minimizes `f`, which returns the value and gradient at a point. Every
/// accepted step satisfies the Armijo condition, so the trace never increases.
pub(crate) fn minimize<F>(mut f: F, x0: Array1<f64>, opts: Options) -> Result<Minimum>
where
    F: FnMut(&Array1<f64>) -> (f64, Array1<f64>),
{
    let mut x = x0;
    let (mut value, mut grad) = f(&x);
    if !value.is_finite() || !grad.iter().all(|g| g.is_finite()) {
        return Err(Error::Fit {
            iteration: 0,
            message: "objective or gradient is not finite at the starting point".into(),
        });
    }
    let mut trace = vec![value];
    let mut memory: VecDeque<(Array1<f64>, Array1<f64>, f64)> = VecDeque::new();
    let mut step = opts.initial_step;
    let mut stop = StopReason::MaxIterations;
    let mut iterations = 0;

    while iterations < opts.max_iters {
        if norm(&grad) < opts.tolerance {
            stop = StopReason::Converged;
            break;
        }
        let (mut direction, mut t) = match opts.method {
            Method::GradientDescent => (-&grad, 2.0 * step),
            Method::Lbfgs { .. } if memory.is_empty() => (-&grad, opts.initial_step),
            Method::Lbfgs { .. } => (two_loop(&grad, &memory), 1.0),
        };
        let mut slope = grad.dot(&direction);
        if !(slope < 0.0) {
            memory.clear();
            direction = -&grad;
            slope = -grad.dot(&grad);
            t = opts.initial_step;
        }

        let mut accepted = None;
        let mut saw_finite = false;
        for _ in 0..MAX_HALVINGS {
            let trial = &x + &(t * &direction);
            let (v, g) = f(&trial);
            if v.is_finite() && g.iter().all(|gi| gi.is_finite()) {
                saw_finite = true;
                if v <= value + ARMIJO_C1 * t * slope {
                    accepted = Some((trial, v, g));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((next, v, g)) = accepted else {
            if !saw_finite {
                return Err(Error::Fit {
                    iteration: iterations + 1,
                    message: "objective became non-finite along every trial step".into(),
                });
            }
            stop = StopReason::Stalled;
            break;
        };

        if let Method::Lbfgs { memory: cap } = opts.method {
            let s = &next - &x;
            let y = &g - &grad;
            let sy = s.dot(&y);
            if sy > 1e-12 * norm(&s) * norm(&y) {
                if memory.len() == cap {
                    memory.pop_front();
                }
                memory.push_back((s, y, 1.0 / sy));
            }
        }
        let decrease = value - v;
        let scale = value.abs().max(v.abs()).max(1.0);
        x = next;
        value = v;
        grad = g;
        step = t;
        iterations += 1;
        trace.push(value);
        if decrease <= opts.f_tolerance * scale {
            stop = StopReason::SmallDecrease;
            break;
        }
    }
    if stop == StopReason::MaxIterations && norm(&grad) < opts.tolerance {
        stop = StopReason::Converged;
    }

    Ok(Minimum {
        gradient_norm: norm(&grad),
        x,
        value,
        iterations,
        stop,
        trace,
    })
}

fn norm(v: &Array1<f64>) -> f64 {
    v.dot(v).sqrt()
}

/// L-BFGS two-loop recursion; returns the search direction `−H·g`.
fn two_loop(grad: &Array1<f64>, memory: &VecDeque<(Array1<f64>, Array1<f64>, f64)>) -> Array1<f64> {
    let mut q = grad.clone();
    let mut alphas = Vec::with_capacity(memory.len());
    for (s, y, rho) in memory.iter().rev() {
        let a = rho * s.dot(&q);
        q.scaled_add(-a, y);
        alphas.push(a);
    }
    let (s, y, _) = memory.back().expect("memory is nonempty");
    let gamma = s.dot(y) / y.dot(y);
    q *= gamma;
    for ((s, y, rho), a) in memory.iter().zip(alphas.into_iter().rev()) {
        let b = rho * y.dot(&q);
        q.scaled_add(a - b, s);
    }
    -q
}
