//! Numerical harness for a convex function of two variables that nonnegative
//! combinations of ReLU ridge functions cannot approximate, while a two-layer
//! ReLU network represents it exactly.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::pwl::relu;
use crate::optim::adamw::{AdamW, AdamWConfig};
use crate::optim::lbfgs::{lbfgs, LbfgsConfig};
use crate::rng::seeded;

/// `h(x, y) = max(max(x + y, 0), max(x - y, 0)) = max(x + |y|, 0)`.
pub fn target(x: f64, y: f64) -> f64 {
    (x + y).max(0.0).max((x - y).max(0.0))
}

/// `ReLU(x + ReLU(y) + ReLU(-y))`.
pub fn depth2_exact(x: f64, y: f64) -> f64 {
    relu(x + relu(y) + relu(-y))
}

/// Uniform `n × n` grid on `[-k, k]²`, endpoints included.
pub fn grid(k: f64, n: usize) -> Vec<[f64; 2]> {
    let t = |i: usize| -k + 2.0 * k * i as f64 / (n - 1) as f64;
    (0..n).flat_map(|j| (0..n).map(move |i| [t(i), t(j)])).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleConfig {
    pub k: f64,
    /// Grid points per axis.
    pub grid: usize,
    /// Units of the shallow net; the depth-2 net gets a comparable count.
    pub n_units: usize,
    pub restarts: usize,
    /// Full-batch optimizer iterations per restart.
    pub budget: usize,
    pub lr: f64,
    /// L-BFGS iterations that follow the Adam phase.
    pub polish: usize,
    pub seed: u64,
}

impl Default for CounterexampleConfig {
    fn default() -> Self {
        Self {
            k: 1.0,
            grid: 100,
            n_units: 16,
            restarts: 10,
            budget: 1500,
            lr: 1e-2,
            polish: 300,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub shallow_sup_errors: Vec<f64>,
    pub depth2_sup_errors: Vec<f64>,
    pub best_shallow: f64,
    pub best_depth2: f64,
    /// `(α, |h - shallow|, |h - depth2|)` along `(α, 0)` for the best fits.
    pub profile: Vec<(f64, f64, f64)>,
}

trait Model {
    fn n_params(&self) -> usize;
    fn eval(&self, theta: &[f64], p: [f64; 2]) -> f64;
    /// Adds `scale · ∂f/∂θ` at `p` into `grad`.
    fn backprop(&self, theta: &[f64], p: [f64; 2], scale: f64, grad: &mut [f64]);
}

/// `c + Σ ReLU(w_i·x + b_i)`, parameters `[w_i1, w_i2, b_i]*, c`.
struct Shallow(usize);

impl Model for Shallow {
    fn n_params(&self) -> usize {
        3 * self.0 + 1
    }

    fn eval(&self, th: &[f64], p: [f64; 2]) -> f64 {
        let mut s = th[3 * self.0];
        for i in 0..self.0 {
            s += relu(th[3 * i] * p[0] + th[3 * i + 1] * p[1] + th[3 * i + 2]);
        }
        s
    }

    fn backprop(&self, th: &[f64], p: [f64; 2], scale: f64, g: &mut [f64]) {
        g[3 * self.0] += scale;
        for i in 0..self.0 {
            if th[3 * i] * p[0] + th[3 * i + 1] * p[1] + th[3 * i + 2] > 0.0 {
                g[3 * i] += scale * p[0];
                g[3 * i + 1] += scale * p[1];
                g[3 * i + 2] += scale;
            }
        }
    }
}

/// `c + Σ_j a_j ReLU(Σ_i V_ji ReLU(W_i·x + b_i) + d_j)` with signed weights.
struct Depth2 {
    n1: usize,
    n2: usize,
}

impl Depth2 {
    fn offsets(&self) -> [usize; 6] {
        let w = 0;
        let b = w + 2 * self.n1;
        let v = b + self.n1;
        let d = v + self.n1 * self.n2;
        let a = d + self.n2;
        let c = a + self.n2;
        [w, b, v, d, a, c]
    }

    fn hidden(&self, th: &[f64], p: [f64; 2]) -> (Vec<f64>, Vec<f64>) {
        let [w, b, v, d, _, _] = self.offsets();
        let z1: Vec<f64> = (0..self.n1)
            .map(|i| th[w + 2 * i] * p[0] + th[w + 2 * i + 1] * p[1] + th[b + i])
            .collect();
        let h1: Vec<f64> = z1.iter().map(|&z| relu(z)).collect();
        let z2: Vec<f64> = (0..self.n2)
            .map(|j| th[d + j] + (0..self.n1).map(|i| th[v + j * self.n1 + i] * h1[i]).sum::<f64>())
            .collect();
        (z1, z2)
    }
}

impl Model for Depth2 {
    fn n_params(&self) -> usize {
        self.offsets()[5] + 1
    }

    fn eval(&self, th: &[f64], p: [f64; 2]) -> f64 {
        let [_, _, _, _, a, c] = self.offsets();
        let (_, z2) = self.hidden(th, p);
        th[c] + (0..self.n2).map(|j| th[a + j] * relu(z2[j])).sum::<f64>()
    }

    fn backprop(&self, th: &[f64], p: [f64; 2], scale: f64, g: &mut [f64]) {
        let [w, b, v, d, a, c] = self.offsets();
        let (z1, z2) = self.hidden(th, p);
        g[c] += scale;
        let mut h1bar = vec![0.0; self.n1];
        for j in 0..self.n2 {
            g[a + j] += scale * relu(z2[j]);
            if z2[j] > 0.0 {
                let zbar = scale * th[a + j];
                g[d + j] += zbar;
                for i in 0..self.n1 {
                    g[v + j * self.n1 + i] += zbar * relu(z1[i]);
                    h1bar[i] += zbar * th[v + j * self.n1 + i];
                }
            }
        }
        for i in 0..self.n1 {
            if z1[i] > 0.0 {
                g[w + 2 * i] += h1bar[i] * p[0];
                g[w + 2 * i + 1] += h1bar[i] * p[1];
                g[b + i] += h1bar[i];
            }
        }
    }
}

fn fit(model: &dyn Model, pts: &[[f64; 2]], vals: &[f64], cfg: &CounterexampleConfig, rng: &mut impl Rng) -> (Vec<f64>, f64) {
    let n = model.n_params();
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut theta: Vec<f64> = (0..n).map(|_| normal.sample(rng) * 0.7).collect();
    let mut opt = AdamW::new(
        n,
        AdamWConfig {
            lr: cfg.lr * cfg.k.max(1e-12),
            weight_decay: 0.0,
            ..AdamWConfig::default()
        },
    );
    let inv = 1.0 / pts.len() as f64;
    let mut grad = vec![0.0; n];
    for it in 0..cfg.budget {
        // cosine decay keeps the last iterations fine-grained
        let lr = cfg.lr * cfg.k.max(1e-12) * 0.5 * (1.0 + (std::f64::consts::PI * it as f64 / cfg.budget as f64).cos());
        opt.set_lr(lr.max(1e-6 * cfg.lr));
        grad.iter_mut().for_each(|g| *g = 0.0);
        for (p, &y) in pts.iter().zip(vals) {
            let r = model.eval(&theta, *p) - y;
            model.backprop(&theta, *p, 2.0 * r * inv, &mut grad);
        }
        opt.step(&mut theta, &grad);
    }
    if cfg.polish > 0 {
        let loss = |th: &[f64]| -> crate::Result<(f64, Vec<f64>)> {
            let mut g = vec![0.0; th.len()];
            let mut l = 0.0;
            for (p, &y) in pts.iter().zip(vals) {
                let r = model.eval(th, *p) - y;
                l += r * r * inv;
                model.backprop(th, *p, 2.0 * r * inv, &mut g);
            }
            Ok((l, g))
        };
        let lcfg = LbfgsConfig { max_iter: cfg.polish, grad_tol: 1e-14, memory: 20, ..LbfgsConfig::default() };
        if let Ok(r) = lbfgs(loss, &theta, &lcfg) {
            theta = r.x;
        }
    }
    let sup = pts
        .iter()
        .zip(vals)
        .map(|(p, &y)| (model.eval(&theta, *p) - y).abs())
        .fold(0.0, f64::max);
    (theta, sup)
}

/// Fits both model classes to `h` on the grid and reports sup-norm errors.
pub fn counterexample_fit(cfg: &CounterexampleConfig) -> FitReport {
    let pts = grid(cfg.k, cfg.grid);
    let vals: Vec<f64> = pts.iter().map(|p| target(p[0], p[1])).collect();
    let shallow = Shallow(cfg.n_units);
    let n1 = (cfg.n_units / 2).max(2);
    let deep = Depth2 { n1, n2: n1 };
    let mut rng = seeded(cfg.seed);
    let mut best_s = (Vec::new(), f64::INFINITY);
    let mut best_d = (Vec::new(), f64::INFINITY);
    let mut s_err = Vec::with_capacity(cfg.restarts);
    let mut d_err = Vec::with_capacity(cfg.restarts);
    for _ in 0..cfg.restarts {
        let (th, e) = fit(&shallow, &pts, &vals, cfg, &mut rng);
        s_err.push(e);
        if e < best_s.1 {
            best_s = (th, e);
        }
        let (th, e) = fit(&deep, &pts, &vals, cfg, &mut rng);
        d_err.push(e);
        if e < best_d.1 {
            best_d = (th, e);
        }
    }
    let profile = (1..=20)
        .map(|i| {
            let a = cfg.k * i as f64 / 20.0;
            let h = target(a, 0.0);
            (
                a,
                (shallow.eval(&best_s.0, [a, 0.0]) - h).abs(),
                (deep.eval(&best_d.0, [a, 0.0]) - h).abs(),
            )
        })
        .collect();
    FitReport {
        shallow_sup_errors: s_err,
        depth2_sup_errors: d_err,
        best_shallow: best_s.1,
        best_depth2: best_d.1,
        profile,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn target_values() {
        for a in [0.1, 0.5, 1.0] {
            assert_eq!(target(a, 0.0), a);
            assert_eq!(target(-a, 0.0), 0.0);
            assert_eq!(target(a, a), 2.0 * a);
        }
    }

    #[test]
    fn depth2_construction_is_exact() {
        for p in grid(1.0, 100) {
            assert!((depth2_exact(p[0], p[1]) - target(p[0], p[1])).abs() <= 1e-12);
        }
    }

    #[test]
    fn model_gradients_match_finite_differences() {
        let mut rng = seeded(1);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let models: Vec<Box<dyn Model>> = vec![Box::new(Shallow(4)), Box::new(Depth2 { n1: 3, n2: 2 })];
        for m in models {
            let th: Vec<f64> = (0..m.n_params()).map(|_| normal.sample(&mut rng)).collect();
            let p = [0.31, -0.47];
            let mut g = vec![0.0; th.len()];
            m.backprop(&th, p, 1.0, &mut g);
            for k in 0..th.len() {
                let h = 1e-7;
                let mut a = th.clone();
                let mut b = th.clone();
                a[k] += h;
                b[k] -= h;
                let fd = (m.eval(&a, p) - m.eval(&b, p)) / (2.0 * h);
                assert!((fd - g[k]).abs() < 1e-6);
            }
        }
    }
}
