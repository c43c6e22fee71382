//! Hybrid PDE-NN extension: `-div(α(θ, ‖∇u‖²) ∇u) = 0` with `u = g`, where α
//! comes from an input-convex network.

pub mod train;

use serde::{Deserialize, Serialize};

pub use train::{subsample_indices, train_hybrid, GradientMethod, HybridSample, HybridTrainConfig, HybridTrainResult, HybridTrainer};

use crate::error::{Error, Result};
use crate::ext::{extension_newton, solve_nonlinear_diffusion, BoundaryDisplacement, ExtensionOperator, Stepper};
use crate::fem::element::{vector_gradient, AffineMap, Tabulation};
use crate::fem::{assemble_weighted_laplacian, DirichletSolver, Element, LinearSolver, Ordering};
use crate::field::{p2_boundary_nodes, p2_cell_nodes, Field, Space};
use crate::icnn::IcnnParams;
use crate::mesh::TriMesh;
use crate::quality::deform;
use crate::real::Real;

/// Strategy 1: full Newton solve of the nonlinear problem, started from the
/// harmonic extension.
pub fn hybrid_extend_nonlinear<T: Real>(
    mesh: &TriMesh<T>,
    g: &BoundaryDisplacement<T>,
    params: &IcnnParams<T>,
) -> Result<Field<T>> {
    hybrid_extend_nonlinear_from(mesh, g, params, None)
}

/// Strategy 1 with an explicit initial guess.
pub fn hybrid_extend_nonlinear_from<T: Real>(
    mesh: &TriMesh<T>,
    g: &BoundaryDisplacement<T>,
    params: &IcnnParams<T>,
    x0: Option<&Field<T>>,
) -> Result<Field<T>> {
    params.validate()?;
    let (u, _) = solve_nonlinear_diffusion(mesh, g, |s| params.alpha_with_slope(s), x0, &extension_newton())?;
    Ok(u)
}

/// `‖∇u‖²` at each cell centroid, gradients taken on `mesh`.
pub fn centroid_gradient_sq<T: Real>(mesh: &TriMesh<T>, u: &Field<T>) -> Result<Vec<T>> {
    u.check(mesh)?;
    if u.value_dim != 2 || u.space == Space::DG0 {
        return Err(Error::invalid("expected a P1 or P2 vector field"));
    }
    let u = u.to_p2(mesh);
    let third = 1.0 / 3.0;
    let tab = Tabulation::<T>::at_points(Element::P2, &[[third, third]], &[0.5]);
    Ok((0..mesh.n_cells())
        .map(|c| {
            let map = AffineMap::new(mesh.cell_coords(c));
            let mut g = [[T::zero(); 2]; 6];
            tab.grads(0, &map, &mut g);
            let loc: Vec<[T; 2]> = p2_cell_nodes(mesh, c).iter().map(|&n| [u.coefficients[2 * n], u.coefficients[2 * n + 1]]).collect();
            let gu = vector_gradient(&loc, &g);
            gu[0][0] * gu[0][0] + gu[0][1] * gu[0][1] + gu[1][0] * gu[1][0] + gu[1][1] * gu[1][1]
        })
        .collect())
}

/// Strategy 2 ("lagging nonlinearity"): one linear solve on the mesh moved by
/// `u_old`, with α frozen cellwise from `u_old` and data `g - g_old`.
pub fn hybrid_extend_incremental<T: Real>(
    mesh: &TriMesh<T>,
    u_old: &Field<T>,
    g: &BoundaryDisplacement<T>,
    g_old: &BoundaryDisplacement<T>,
    params: &IcnnParams<T>,
) -> Result<Field<T>> {
    params.validate()?;
    let moved = deform(mesh, u_old)?;
    let alpha: Vec<T> = centroid_gradient_sq(mesh, u_old)?.into_iter().map(|s| params.alpha(s)).collect();
    let weight = Field::new(mesh, Space::DG0, 1, alpha)?;
    let k = assemble_weighted_laplacian(&moved, &weight, Element::P2, 1)?;
    let mut fixed = vec![false; k.n_rows()];
    for n in p2_boundary_nodes(mesh) {
        fixed[n] = true;
    }
    let solver = DirichletSolver::new(k, fixed, LinearSolver::Direct, &Ordering::Amd)?;
    let dg = g.to_p2(mesh)?.axpy(-T::one(), &g_old.to_p2(mesh)?);
    let (_, vals) = dg.dirichlet_data(mesh)?;
    let dx = solver.solve(None, &vals[0])?;
    let dy = solver.solve(None, &vals[1])?;
    let mut u = u_old.to_p2(mesh);
    for i in 0..dx.len() {
        u.coefficients[2 * i] += dx[i];
        u.coefficients[2 * i + 1] += dy[i];
    }
    Ok(u)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Nonlinear,
    Incremental,
    Auto,
}

/// Scalar that decides the branch of the auto strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Probe {
    /// Largest `|g|` on the boundary tagged `moving`, or on the whole boundary
    /// if the mesh has no such tag.
    MovingBoundary,
    /// `|g|` at the boundary node closest to `at`; only `component` if set.
    Point { at: [f64; 2], component: Option<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StrategyConfig {
    pub strategy: Strategy,
    pub threshold: f64,
    pub probe: Probe,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Auto,
            threshold: 0.005,
            probe: Probe::MovingBoundary,
        }
    }
}

impl StrategyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0) {
            return Err(Error::invalid("threshold must be positive"));
        }
        if let Probe::Point { component: Some(c), .. } = self.probe {
            if c > 1 {
                return Err(Error::invalid("probe component must be 0 or 1"));
            }
        }
        Ok(())
    }

    pub fn probe_value<T: Real>(&self, mesh: &TriMesh<T>, g: &BoundaryDisplacement<T>) -> f64 {
        match &self.probe {
            Probe::MovingBoundary => match g.max_norm_on(mesh, "moving") {
                Ok(v) => v.as_f64(),
                Err(_) => g
                    .values
                    .values()
                    .map(|v| (v[0] * v[0] + v[1] * v[1]).sqrt().as_f64())
                    .fold(0.0, f64::max),
            },
            Probe::Point { at, component } => {
                let v = g.value_near(mesh, [T::lit(at[0]), T::lit(at[1])]);
                match component {
                    Some(c) => v[*c].abs().as_f64(),
                    None => (v[0] * v[0] + v[1] * v[1]).sqrt().as_f64(),
                }
            }
        }
    }
}

/// Reference state of the incremental strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridState<T> {
    pub u_old: Field<T>,
    pub g_old: BoundaryDisplacement<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Nonlinear,
    Incremental,
}

/// Strategy 3: nonlinear solve while the probe is below the threshold,
/// incremental steps above it. A missing state counts as the undeformed one.
///
/// If the chosen branch fails the other one is tried; when both fail the
/// nonlinear error is returned.
pub fn hybrid_extend_auto<T: Real>(
    mesh: &TriMesh<T>,
    state: Option<&HybridState<T>>,
    g: &BoundaryDisplacement<T>,
    params: &IcnnParams<T>,
    cfg: &StrategyConfig,
) -> Result<(Field<T>, HybridState<T>, Branch)> {
    cfg.validate()?;
    let zero_state;
    let state = match state {
        Some(s) => s,
        None => {
            zero_state = HybridState {
                u_old: Field::zeros(mesh, Space::P2, 2),
                g_old: BoundaryDisplacement::zeros(mesh),
            };
            &zero_state
        }
    };
    let nonlinear = || hybrid_extend_nonlinear_from(mesh, g, params, None);
    let incremental = || hybrid_extend_incremental(mesh, &state.u_old, g, &state.g_old, params);
    let small = cfg.probe_value(mesh, g) < cfg.threshold;
    let (u, branch) = if small {
        match nonlinear() {
            Ok(u) => (u, Branch::Nonlinear),
            Err(e) => (incremental().map_err(|_| e)?, Branch::Incremental),
        }
    } else {
        match incremental() {
            Ok(u) => (u, Branch::Incremental),
            Err(_) => (nonlinear()?, Branch::Nonlinear),
        }
    };
    let next = HybridState {
        u_old: u.clone(),
        g_old: g.to_p2(mesh)?,
    };
    Ok((u, next, branch))
}

/// The nonlinear hybrid operator as a stateless extension.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridOperator<T> {
    pub params: IcnnParams<T>,
}

impl<T: Real> ExtensionOperator<T> for HybridOperator<T> {
    fn extend(&self, mesh: &TriMesh<T>, g: &BoundaryDisplacement<T>) -> Result<Field<T>> {
        hybrid_extend_nonlinear(mesh, g, &self.params)
    }
}

/// Any hybrid strategy applied along a sequence, recording the branch taken
/// at each step.
#[derive(Debug, Clone)]
pub struct HybridStepper<T> {
    pub params: IcnnParams<T>,
    pub cfg: StrategyConfig,
    state: Option<HybridState<T>>,
    pub trace: Vec<Branch>,
}

impl<T: Real> HybridStepper<T> {
    pub fn new(params: IcnnParams<T>, cfg: StrategyConfig) -> Self {
        Self {
            params,
            cfg,
            state: None,
            trace: Vec::new(),
        }
    }

    pub fn state(&self) -> Option<&HybridState<T>> {
        self.state.as_ref()
    }
}

impl<T: Real> Stepper<T> for HybridStepper<T> {
    fn step(&mut self, mesh: &TriMesh<T>, g: &BoundaryDisplacement<T>) -> Result<Field<T>> {
        let (u, branch) = match self.cfg.strategy {
            Strategy::Nonlinear => (hybrid_extend_nonlinear(mesh, g, &self.params)?, Branch::Nonlinear),
            Strategy::Incremental => {
                let u = match &self.state {
                    None => hybrid_extend_incremental(
                        mesh,
                        &Field::zeros(mesh, Space::P2, 2),
                        g,
                        &BoundaryDisplacement::zeros(mesh),
                        &self.params,
                    )?,
                    Some(s) => hybrid_extend_incremental(mesh, &s.u_old, g, &s.g_old, &self.params)?,
                };
                (u, Branch::Incremental)
            }
            Strategy::Auto => {
                let (u, next, b) = hybrid_extend_auto(mesh, self.state.as_ref(), g, &self.params, &self.cfg)?;
                self.state = Some(next);
                self.trace.push(b);
                return Ok(u);
            }
        };
        self.state = Some(HybridState {
            u_old: u.clone(),
            g_old: g.to_p2(mesh)?,
        });
        self.trace.push(branch);
        Ok(u)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ext::harmonic_extend;
    use crate::icnn::DEFAULT_HIDDEN;
    use crate::mesh::rectangle_mesh;
    use crate::rng::seeded;

    fn unit_square(n: usize) -> TriMesh<f64> {
        rectangle_mesh([0.0, 0.0], [1.0, 1.0], n, n)
    }

    fn strong_params() -> IcnnParams<f64> {
        let mut p = IcnnParams::random(&DEFAULT_HIDDEN, &mut seeded(3));
        // make the coefficient visibly non-constant
        for w in p.layers.last_mut().unwrap().weights.iter_mut() {
            *w *= 4.0;
        }
        p
    }

    fn bend(a: f64) -> impl Fn([f64; 2]) -> [f64; 2] {
        move |x| [0.0, a * (std::f64::consts::PI * x[0]).sin() * x[1]]
    }

    #[test]
    fn zero_data_gives_zero() {
        let m = unit_square(4);
        let u = hybrid_extend_nonlinear(&m, &BoundaryDisplacement::zeros(&m), &strong_params()).unwrap();
        assert!(u.coefficients.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_network_is_harmonic() {
        let m = unit_square(6);
        let g = BoundaryDisplacement::from_fn(&m, bend(0.3));
        let u = hybrid_extend_nonlinear(&m, &g, &IcnnParams::zeros(&DEFAULT_HIDDEN)).unwrap();
        let h = harmonic_extend(&m, &g).unwrap();
        assert!(u.max_abs_diff(&h) < 1e-6);
    }

    #[test]
    fn small_affine_data_is_harmonic() {
        let m = unit_square(5);
        let g = BoundaryDisplacement::from_fn(&m, |x| [0.01 * x[0] + 0.02 * x[1], -0.01 * x[1]]);
        let p = strong_params();
        let u = hybrid_extend_nonlinear(&m, &g, &p).unwrap();
        let s = centroid_gradient_sq(&m, &u).unwrap();
        assert!(s.iter().all(|&v| v < p.eta1));
        assert!(u.max_abs_diff(&harmonic_extend(&m, &g).unwrap()) < 1e-6);
    }

    #[test]
    fn nonlinear_differs_from_harmonic_for_large_data() {
        let m = unit_square(6);
        let g = BoundaryDisplacement::from_fn(&m, bend(0.4));
        let u = hybrid_extend_nonlinear(&m, &g, &strong_params()).unwrap();
        assert!(u.max_abs_diff(&harmonic_extend(&m, &g).unwrap()) > 1e-4);
        for (n, v) in g.to_p2(&m).unwrap().values {
            assert!((u.node(n)[0] - v[0]).abs() <= 1e-12 && (u.node(n)[1] - v[1]).abs() <= 1e-12);
        }
    }

    #[test]
    fn incremental_identity_and_small_step() {
        let m = unit_square(6);
        let p = strong_params();
        let g_old = BoundaryDisplacement::from_fn(&m, bend(0.2));
        let u_old = hybrid_extend_nonlinear(&m, &g_old, &p).unwrap();
        let same = hybrid_extend_incremental(&m, &u_old, &g_old, &g_old, &p).unwrap();
        assert!(same.max_abs_diff(&u_old) == 0.0);

        let zero = Field::zeros(&m, Space::P2, 2);
        let g = BoundaryDisplacement::from_fn(&m, bend(1e-3));
        let inc = hybrid_extend_incremental(&m, &zero, &g, &BoundaryDisplacement::zeros(&m), &p).unwrap();
        let nl = hybrid_extend_nonlinear(&m, &g, &p).unwrap();
        assert!(inc.max_abs_diff(&nl) <= 1e-4);
        for (n, v) in g.to_p2(&m).unwrap().values {
            assert!((inc.node(n)[1] - v[1]).abs() <= 1e-12);
        }
    }

    #[test]
    fn auto_switches_on_threshold() {
        let m = unit_square(5);
        let p = strong_params();
        let cfg = StrategyConfig::default();
        let small = BoundaryDisplacement::from_fn(&m, |_| [0.0, 0.004]);
        let (_, _, b) = hybrid_extend_auto(&m, None, &small, &p, &cfg).unwrap();
        assert_eq!(b, Branch::Nonlinear);
        let large = BoundaryDisplacement::from_fn(&m, |_| [0.0, 0.1]);
        let (_, _, b) = hybrid_extend_auto(&m, None, &large, &p, &cfg).unwrap();
        assert_eq!(b, Branch::Incremental);
    }

    #[test]
    fn auto_state_resets_at_small_steps() {
        let m = unit_square(5);
        let p = strong_params();
        let mut stepper = HybridStepper::new(p.clone(), StrategyConfig::default());
        let amps = [0.05, 0.001, 0.08, 0.002, 0.1];
        for a in amps {
            let g = BoundaryDisplacement::from_fn(&m, bend(a));
            let u = stepper.step(&m, &g).unwrap();
            if a < 0.005 {
                // the nonlinear branch does not depend on the previous state
                assert!(u.max_abs_diff(&hybrid_extend_nonlinear(&m, &g, &p).unwrap()) == 0.0);
            }
            assert_eq!(stepper.state().unwrap().u_old, u);
        }
        use Branch::*;
        assert_eq!(stepper.trace, vec![Incremental, Nonlinear, Incremental, Nonlinear, Incremental]);
    }

    #[test]
    fn point_probe_reads_one_component() {
        let m = unit_square(4);
        let g = BoundaryDisplacement::from_fn(&m, |x| [0.3 * x[0], -0.002]);
        let cfg = StrategyConfig {
            probe: Probe::Point {
                at: [1.0, 0.5],
                component: Some(1),
            },
            ..Default::default()
        };
        assert!((cfg.probe_value(&m, &g) - 0.002).abs() < 1e-15);
    }
}
