//! Limited-memory BFGS with a backtracking Armijo line search.

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LbfgsConfig {
    pub memory: usize,
    pub max_iter: usize,
    /// Stop when `‖∇f‖∞` drops below this.
    pub grad_tol: f64,
    pub armijo: f64,
    pub max_backtracks: usize,
    /// First trial step on the very first iteration, relative to `1/‖∇f‖`.
    pub initial_step: f64,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self {
            memory: 10,
            max_iter: 100,
            grad_tol: 1e-8,
            armijo: 1e-4,
            max_backtracks: 30,
            initial_step: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub loss: f64,
    pub iterations: usize,
    /// Loss after each accepted step, starting with the initial loss.
    pub history: Vec<f64>,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `f`, which returns `(loss, gradient)`.
///
/// A non-finite loss, or an evaluation that errors, at a trial point is
/// treated as a rejected step. Errors at the starting point propagate.
pub fn lbfgs<F>(mut f: F, x0: &[f64], cfg: &LbfgsConfig) -> Result<LbfgsResult>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let mut x = x0.to_vec();
    let (mut loss, mut g) = f(&x)?;
    if !loss.is_finite() {
        return Err(crate::Error::NonFinite(0));
    }
    let mut history = vec![loss];
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut iterations = 0;
    let mut converged = false;

    while iterations < cfg.max_iter {
        let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if gmax <= cfg.grad_tol {
            converged = true;
            break;
        }
        // two-loop recursion
        let mut q = g.clone();
        let k = s_hist.len();
        let mut alpha = vec![0.0; k];
        for i in (0..k).rev() {
            let rho = 1.0 / dot(&y_hist[i], &s_hist[i]);
            alpha[i] = rho * dot(&s_hist[i], &q);
            q.iter_mut().zip(&y_hist[i]).for_each(|(qj, yj)| *qj -= alpha[i] * yj);
        }
        let gamma = if k > 0 {
            dot(&s_hist[k - 1], &y_hist[k - 1]) / dot(&y_hist[k - 1], &y_hist[k - 1])
        } else {
            cfg.initial_step / dot(&g, &g).sqrt().max(1e-300)
        };
        q.iter_mut().for_each(|v| *v *= gamma);
        for i in 0..k {
            let rho = 1.0 / dot(&y_hist[i], &s_hist[i]);
            let beta = rho * dot(&y_hist[i], &q);
            q.iter_mut().zip(&s_hist[i]).for_each(|(qj, sj)| *qj += (alpha[i] - beta) * sj);
        }
        let mut d: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&g, &d);
        if slope >= 0.0 {
            // curvature history went bad; fall back to steepest descent
            s_hist.clear();
            y_hist.clear();
            let scale = cfg.initial_step / dot(&g, &g).sqrt().max(1e-300);
            d = g.iter().map(|v| -v * scale).collect();
            slope = dot(&g, &d);
        }

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=cfg.max_backtracks {
            let xt: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
            if let Ok((lt, gt)) = f(&xt) {
                if lt.is_finite() && lt <= loss + cfg.armijo * t * slope {
                    accepted = Some((xt, lt, gt));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((xn, ln, gn)) = accepted else {
            break;
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        if dot(&s, &y) > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            s_hist.push(s);
            y_hist.push(y);
            if s_hist.len() > cfg.memory {
                s_hist.remove(0);
                y_hist.remove(0);
            }
        }
        x = xn;
        loss = ln;
        g = gn;
        iterations += 1;
        history.push(loss);
    }
    Ok(LbfgsResult {
        x,
        loss,
        iterations,
        history,
        converged,
    })
}
