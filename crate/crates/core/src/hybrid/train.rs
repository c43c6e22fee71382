//! Supervised fitting of the network parameters: minimize the mean squared
//! `H¹` distance between hybrid extensions and target extensions.

use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::hybrid_extend_nonlinear_from;
use crate::error::{Error, Result};
use crate::ext::BoundaryDisplacement;
use crate::fem::assembly::{assemble_nonlinear_diffusion, n_nodes};
use crate::fem::element::{vector_gradient, AffineMap, Tabulation};
use crate::fem::quadrature::dunavant;
use crate::fem::{assemble_laplacian, assemble_mass, CsrMatrix, Element, LdlFactor, Ordering};
use crate::field::{p2_boundary_nodes, p2_cell_nodes, Field, Space};
use crate::icnn::IcnnParams;
use crate::mesh::TriMesh;
use crate::optim::{lbfgs, LbfgsConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum GradientMethod {
    /// Discrete adjoint of the Newton system at the converged state.
    Adjoint,
    /// Central differences in every raw parameter.
    FiniteDifference { step: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HybridTrainConfig {
    /// Number of snapshots kept after subsampling.
    pub n_subsample: usize,
    /// Weight of `‖θ‖²` in the loss.
    pub lambda: f64,
    pub max_iter: usize,
    pub gradient: GradientMethod,
    /// L-BFGS memory.
    pub history: usize,
    pub grad_tol: f64,
}

impl Default for HybridTrainConfig {
    fn default() -> Self {
        Self {
            n_subsample: 20,
            lambda: 0.0,
            max_iter: 100,
            gradient: GradientMethod::FiniteDifference { step: 1e-6 },
            history: 10,
            grad_tol: 1e-10,
        }
    }
}

impl HybridTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_subsample == 0 || self.max_iter == 0 || self.history == 0 {
            return Err(Error::invalid("subsample count, iterations and history must be positive"));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::invalid("lambda must be nonnegative"));
        }
        if let GradientMethod::FiniteDifference { step } = self.gradient {
            if !(step > 0.0) {
                return Err(Error::invalid("finite-difference step must be positive"));
            }
        }
        Ok(())
    }
}

/// Boundary data and the extension the operator should reproduce.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridSample {
    pub g: BoundaryDisplacement<f64>,
    pub target: Field<f64>,
}

/// Every `⌊n_d / n⌋`-th index, at most `n` of them.
pub fn subsample_indices(n_d: usize, n: usize) -> Vec<usize> {
    if n_d == 0 || n == 0 {
        return Vec::new();
    }
    let step = (n_d / n).max(1);
    (0..n).map(|i| i * step).take_while(|&i| i < n_d).collect()
}

/// Loss evaluation with warm-started inner solves.
pub struct HybridTrainer<'a> {
    mesh: &'a TriMesh<f64>,
    samples: Vec<HybridSample>,
    /// `M + K` for P2 vector fields.
    norm: CsrMatrix<f64>,
    fixed: Vec<bool>,
    template: IcnnParams<f64>,
    cache: Mutex<Vec<Option<Field<f64>>>>,
}

struct SnapshotEval {
    loss: f64,
    u: Field<f64>,
    grad: Option<Vec<f64>>,
}

impl<'a> HybridTrainer<'a> {
    pub fn new(mesh: &'a TriMesh<f64>, samples: Vec<HybridSample>, template: IcnnParams<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("no training samples"));
        }
        template.validate()?;
        for s in &samples {
            s.target.check(mesh)?;
            if s.target.space != Space::P2 || s.target.value_dim != 2 {
                return Err(Error::invalid("targets must be P2 vector fields"));
            }
            s.g.validate(mesh)?;
        }
        let norm = assemble_mass(mesh, Element::P2, 2).axpy(1.0, &assemble_laplacian(mesh, Element::P2, 2));
        let mut fixed = vec![false; 2 * n_nodes(mesh, Element::P2)];
        for n in p2_boundary_nodes(mesh) {
            fixed[2 * n] = true;
            fixed[2 * n + 1] = true;
        }
        let n = samples.len();
        Ok(Self {
            mesh,
            samples,
            norm,
            fixed,
            template,
            cache: Mutex::new(vec![None; n]),
        })
    }

    pub fn n_samples(&self) -> usize {
        self.samples.len()
    }

    pub fn params(&self, theta: &[f64]) -> IcnnParams<f64> {
        self.template.with_flat(theta)
    }

    fn eval_one(&self, i: usize, params: &IcnnParams<f64>, warm: Option<&Field<f64>>, adjoint: bool) -> Result<SnapshotEval> {
        let s = &self.samples[i];
        let u = hybrid_extend_nonlinear_from(self.mesh, &s.g, params, warm)?;
        let e: Vec<f64> = u.coefficients.iter().zip(&s.target.coefficients).map(|(a, b)| a - b).collect();
        let ae = self.norm.matvec(&e);
        let loss: f64 = e.iter().zip(&ae).map(|(a, b)| a * b).sum();
        let grad = if adjoint {
            let coef = |s: f64| params.alpha_with_slope(s);
            let (_, j) = assemble_nonlinear_diffusion(self.mesh, &u.coefficients, coef, true)?;
            let mut j = j.expect("Jacobian requested");
            j.apply_dirichlet(&self.fixed, &mut [], &[]);
            let mut b: Vec<f64> = ae.iter().map(|v| 2.0 * v).collect();
            for (bi, &f) in b.iter_mut().zip(&self.fixed) {
                if f {
                    *bi = 0.0;
                }
            }
            let lam = LdlFactor::new(&j, &Ordering::BlockAmd(2))?.solve(&b);
            let sens = param_sensitivity(self.mesh, params, &u.coefficients, &lam);
            Some(sens.into_iter().map(|v| -v).collect())
        } else {
            None
        };
        Ok(SnapshotEval { loss, u, grad })
    }

    /// Per-snapshot evaluations in parallel; `None` where the inner solve failed.
    ///
    /// With `warm`, inner solves start from the last cached solutions and the
    /// cache is refreshed. Without it they start from the harmonic extension,
    /// which makes the loss a deterministic function of `theta` as finite
    /// differences require.
    fn eval_all(&self, theta: &[f64], adjoint: bool, warm: bool) -> Vec<Option<SnapshotEval>> {
        let params = self.params(theta);
        let start: Vec<Option<Field<f64>>> = if warm {
            self.cache.lock().unwrap().clone()
        } else {
            vec![None; self.samples.len()]
        };
        let out: Vec<Option<SnapshotEval>> = (0..self.samples.len())
            .into_par_iter()
            .map(|i| self.eval_one(i, &params, start[i].as_ref(), adjoint).ok())
            .collect();
        if warm {
            let mut cache = self.cache.lock().unwrap();
            for (c, r) in cache.iter_mut().zip(&out) {
                if let Some(r) = r {
                    *c = Some(r.u.clone());
                }
            }
        }
        out
    }

    fn regularization(&self, theta: &[f64], lambda: f64) -> f64 {
        lambda * theta.iter().map(|t| t * t).sum::<f64>()
    }

    /// Loss at `theta` with cold-started inner solves; infinite if any of
    /// them fails.
    pub fn loss(&self, theta: &[f64], lambda: f64) -> f64 {
        self.loss_inner(theta, lambda, false)
    }

    fn loss_inner(&self, theta: &[f64], lambda: f64, warm: bool) -> f64 {
        let evals = self.eval_all(theta, false, warm);
        let mut sum = 0.0;
        for e in &evals {
            match e {
                Some(e) => sum += e.loss,
                None => return f64::INFINITY,
            }
        }
        sum / self.samples.len() as f64 + self.regularization(theta, lambda)
    }

    /// Loss and gradient. A failed inner solve gives an infinite loss and a
    /// zero gradient.
    pub fn loss_and_grad(&self, theta: &[f64], lambda: f64, method: GradientMethod) -> (f64, Vec<f64>) {
        let n = self.samples.len() as f64;
        let np = theta.len();
        match method {
            GradientMethod::Adjoint => {
                let evals = self.eval_all(theta, true, true);
                let mut loss = 0.0;
                let mut grad = vec![0.0; np];
                for e in evals {
                    let Some(e) = e else {
                        return (f64::INFINITY, vec![0.0; np]);
                    };
                    loss += e.loss;
                    for (g, v) in grad.iter_mut().zip(e.grad.unwrap()) {
                        *g += v;
                    }
                }
                let grad = grad.iter().zip(theta).map(|(g, t)| g / n + 2.0 * lambda * t).collect();
                (loss / n + self.regularization(theta, lambda), grad)
            }
            GradientMethod::FiniteDifference { step } => {
                let loss = self.loss_inner(theta, lambda, true);
                if !loss.is_finite() {
                    return (loss, vec![0.0; np]);
                }
                let grad = self.fd_gradient(theta, lambda, step);
                (loss, grad)
            }
        }
    }

    /// Central-difference gradient of [`Self::loss`].
    pub fn fd_gradient(&self, theta: &[f64], lambda: f64, step: f64) -> Vec<f64> {
        let mut t = theta.to_vec();
        (0..theta.len())
            .map(|k| {
                t[k] = theta[k] + step;
                let lp = self.loss(&t, lambda);
                t[k] = theta[k] - step;
                let lm = self.loss(&t, lambda);
                t[k] = theta[k];
                (lp - lm) / (2.0 * step)
            })
            .collect()
    }
}

/// `∫ ∂α/∂θ(‖∇u‖²) ∇u:∇λ` for P2 vector fields `u` and `λ`.
fn param_sensitivity(mesh: &TriMesh<f64>, params: &IcnnParams<f64>, u: &[f64], lam: &[f64]) -> Vec<f64> {
    let rule = dunavant(4);
    let tab = Tabulation::<f64>::new(Element::P2, &rule);
    let np = params.n_params();
    let chunk = 256;
    let n_chunks = mesh.n_cells().div_ceil(chunk);
    let parts: Vec<Vec<f64>> = (0..n_chunks)
        .into_par_iter()
        .map(|k| {
            let mut acc = vec![0.0; np];
            let mut g = [[0.0; 2]; 6];
            for c in k * chunk..((k + 1) * chunk).min(mesh.n_cells()) {
                let map = AffineMap::new(mesh.cell_coords(c));
                let nodes = p2_cell_nodes(mesh, c);
                let lu: Vec<[f64; 2]> = nodes.iter().map(|&n| [u[2 * n], u[2 * n + 1]]).collect();
                let ll: Vec<[f64; 2]> = nodes.iter().map(|&n| [lam[2 * n], lam[2 * n + 1]]).collect();
                for q in 0..tab.n_points() {
                    tab.grads(q, &map, &mut g);
                    let gu = vector_gradient(&lu, &g);
                    let gl = vector_gradient(&ll, &g);
                    let s = gu[0][0] * gu[0][0] + gu[0][1] * gu[0][1] + gu[1][0] * gu[1][0] + gu[1][1] * gu[1][1];
                    let inner = gu[0][0] * gl[0][0] + gu[0][1] * gl[0][1] + gu[1][0] * gl[1][0] + gu[1][1] * gl[1][1];
                    let w = tab.weights[q] * map.det * inner;
                    if w == 0.0 {
                        continue;
                    }
                    for (a, d) in acc.iter_mut().zip(params.alpha_param_grad(s)) {
                        *a += w * d;
                    }
                }
            }
            acc
        })
        .collect();
    let mut out = vec![0.0; np];
    for p in parts {
        for (o, v) in out.iter_mut().zip(p) {
            *o += v;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridTrainResult {
    pub params: IcnnParams<f64>,
    /// Loss after each accepted L-BFGS step, starting with the initial loss.
    pub history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Positions of the used samples in the input list.
    pub indices: Vec<usize>,
}

/// L-BFGS fit of the network parameters on a subsample of `samples`.
pub fn train_hybrid(
    mesh: &TriMesh<f64>,
    samples: &[HybridSample],
    params0: &IcnnParams<f64>,
    cfg: &HybridTrainConfig,
) -> Result<HybridTrainResult> {
    cfg.validate()?;
    let indices = subsample_indices(samples.len(), cfg.n_subsample);
    let picked = indices.iter().map(|&i| samples[i].clone()).collect();
    let trainer = HybridTrainer::new(mesh, picked, params0.clone())?;
    let lcfg = LbfgsConfig {
        memory: cfg.history,
        max_iter: cfg.max_iter,
        grad_tol: cfg.grad_tol,
        ..LbfgsConfig::default()
    };
    let result = lbfgs(
        |theta| Ok(trainer.loss_and_grad(theta, cfg.lambda, cfg.gradient)),
        &params0.flat(),
        &lcfg,
    )?;
    log::info!(
        "hybrid training: {} iterations, loss {:.3e} -> {:.3e}",
        result.iterations,
        result.history[0],
        result.loss
    );
    Ok(HybridTrainResult {
        params: trainer.params(&result.x),
        history: result.history,
        iterations: result.iterations,
        converged: result.converged,
        indices,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ext::{biharmonic_extend, harmonic_extend};
    use crate::icnn::DEFAULT_HIDDEN;
    use crate::mesh::rectangle_mesh;
    use crate::rng::seeded;

    fn toy() -> (TriMesh<f64>, Vec<HybridSample>) {
        let m = rectangle_mesh([0.0, 0.0], [1.0, 1.0], 5, 5);
        let samples = [0.25f64, 0.4]
            .iter()
            .map(|&a| {
                let g = BoundaryDisplacement::from_fn(&m, move |x: [f64; 2]| [0.0, a * (std::f64::consts::PI * x[0]).sin() * x[1]]);
                let target = biharmonic_extend(&m, &g).unwrap();
                HybridSample { g, target }
            })
            .collect();
        (m, samples)
    }

    fn params() -> IcnnParams<f64> {
        IcnnParams::random(&DEFAULT_HIDDEN, &mut seeded(11))
    }

    #[test]
    fn subsampling() {
        assert_eq!(subsample_indices(606, 20).len(), 20);
        assert_eq!(subsample_indices(606, 20)[1], 30);
        assert_eq!(subsample_indices(5, 20), vec![0, 1, 2, 3, 4]);
        assert!(subsample_indices(0, 3).is_empty());
    }

    #[test]
    fn adjoint_matches_finite_differences() {
        let (m, samples) = toy();
        let p = params();
        let tr = HybridTrainer::new(&m, samples, p.clone()).unwrap();
        let theta = p.flat();
        let (_, adj) = tr.loss_and_grad(&theta, 0.0, GradientMethod::Adjoint);
        let fd = tr.fd_gradient(&theta, 0.0, 1e-6);
        let scale = adj.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!(scale > 0.0);
        for (a, f) in adj.iter().zip(&fd) {
            assert!((a - f).abs() <= 1e-4 * scale, "{a} vs {f}");
        }
    }

    #[test]
    fn harmonic_targets_are_fit_by_a_near_zero_network() {
        let m = rectangle_mesh([0.0, 0.0], [1.0, 1.0], 4, 4);
        let g = BoundaryDisplacement::from_fn(&m, |x| [0.0, 0.2 * x[0] * x[1]]);
        let target = harmonic_extend(&m, &g).unwrap();
        let tr = HybridTrainer::new(&m, vec![HybridSample { g, target }], IcnnParams::zeros(&DEFAULT_HIDDEN)).unwrap();
        let theta = IcnnParams::<f64>::zeros(&DEFAULT_HIDDEN).flat();
        let (l, grad) = tr.loss_and_grad(&theta, 0.0, GradientMethod::Adjoint);
        assert!(l <= 1e-8);
        assert!(grad.iter().all(|g| g.abs() < 1e-12));
    }

    #[test]
    fn training_decreases_the_loss() {
        let (m, samples) = toy();
        let cfg = HybridTrainConfig {
            max_iter: 5,
            gradient: GradientMethod::Adjoint,
            ..Default::default()
        };
        let r = train_hybrid(&m, &samples, &params(), &cfg).unwrap();
        assert_eq!(r.indices, vec![0, 1]);
        assert!(r.history.last().unwrap() <= &r.history[0]);
        assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
        assert!(r.history[0] > *r.history.last().unwrap());
    }
}
