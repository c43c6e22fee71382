//! Harmonic, biharmonic (mixed), p-Laplace and linear-elastic extensions.

use serde::{Deserialize, Serialize};

use super::boundary::BoundaryDisplacement;
use crate::error::{Error, Result};
use crate::fem::assembly::{assemble_cells, pattern};
use crate::fem::element::{AffineMap, Tabulation};
use crate::fem::quadrature::dunavant;
use crate::fem::{
    assemble_elastic, assemble_laplacian, assemble_nonlinear_diffusion, newton_solve, CsrMatrix, DirichletSolver,
    Element, LinearSolver, NewtonConfig, NewtonReport, Ordering, SparseSystem,
};
use crate::field::{Field, Space};
use crate::mesh::TriMesh;
use crate::profile::{timed, Phase};
use crate::real::Real;

fn interleave<T: Real>(x: &[T], y: &[T]) -> Vec<T> {
    x.iter().zip(y).flat_map(|(&a, &b)| [a, b]).collect()
}

fn p2_field<T: Real>(coefficients: Vec<T>) -> Field<T> {
    Field {
        space: Space::P2,
        value_dim: 2,
        coefficients,
    }
}

/// Factorized P2 Laplacian with Dirichlet conditions on the whole boundary.
/// Reusable for any boundary data on the same mesh.
#[derive(Debug, Clone)]
pub struct HarmonicSolver<T> {
    solver: DirichletSolver<T>,
}

impl<T: Real> HarmonicSolver<T> {
    pub fn new(mesh: &TriMesh<T>, linear: LinearSolver) -> Result<Self> {
        let k = assemble_laplacian(mesh, Element::P2, 1);
        let mut fixed = vec![false; k.n_rows()];
        for n in crate::field::p2_boundary_nodes(mesh) {
            fixed[n] = true;
        }
        Ok(Self {
            solver: DirichletSolver::new(k, fixed, linear, &Ordering::Amd)?,
        })
    }

    pub fn solve(&self, mesh: &TriMesh<T>, g: &BoundaryDisplacement<T>) -> Result<Field<T>> {
        let (_, vals) = g.dirichlet_data(mesh)?;
        let x = self.solver.solve(None, &vals[0])?;
        let y = self.solver.solve(None, &vals[1])?;
        Ok(p2_field(interleave(&x, &y)))
    }
}

/// The assembled and constrained vector Laplace system, block diagonal in the
/// two components.
pub fn harmonic_system<T: Real>(mesh: &TriMesh<T>, g: &BoundaryDisplacement<T>) -> Result<SparseSystem<T>> {
    let (fixed, vals) = g.dirichlet_data(mesh)?;
    let k = assemble_laplacian(mesh, Element::P2, 2);
    let mut sys = SparseSystem::new(k, vec![T::zero(); 2 * fixed.len()]);
    let cons: Vec<(usize, T)> = (0..fixed.len())
        .filter(|&i| fixed[i])
        .flat_map(|i| [(2 * i, vals[0][i]), (2 * i + 1, vals[1][i])])
        .collect();
    sys.constrain(&cons);
    Ok(sys)
}

/// Solves `-Δu = 0`, `u = g` on the boundary, componentwise in P2.
pub fn harmonic_extend<T: Real>(mesh: &TriMesh<T>, g: &BoundaryDisplacement<T>) -> Result<Field<T>> {
    HarmonicSolver::new(mesh, LinearSolver::Direct)?.solve(mesh, g)
}

/// Mixed matrix `[[M, -K], [-K, 0]]` with unknowns interleaved as `(z_i, u_i)`.
fn mixed_biharmonic_matrix<T: Real>(mesh: &TriMesh<T>) -> CsrMatrix<T> {
    timed(Phase::Assembly, || {
        let rule = dunavant(4);
        let tab = Tabulation::<T>::new(Element::P2, &rule);
        let mut a = pattern(mesh, Element::P2, 2);
        assemble_cells(mesh, Element::P2, 2, Some(&mut a), None, |c, m, _| {
            let map = AffineMap::new(mesh.cell_coords(c));
            let mut g = [[T::zero(); 2]; 6];
            for q in 0..tab.n_points() {
                let jw = tab.weights[q] * map.det;
                let phi = tab.values(q);
                tab.grads(q, &map, &mut g);
                for i in 0..6 {
                    for j in 0..6 {
                        let mass = jw * phi[i] * phi[j];
                        let stiff = jw * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
                        m[(2 * i) * 12 + 2 * j] += mass;
                        m[(2 * i) * 12 + 2 * j + 1] -= stiff;
                        m[(2 * i + 1) * 12 + 2 * j] -= stiff;
                    }
                }
            }
            Ok(())
        })
        .expect("biharmonic assembly cannot fail");
        a
    })
}

/// Factorized mixed biharmonic system; `u` is fixed on the boundary, `z` free.
#[derive(Debug, Clone)]
pub struct BiharmonicSolver<T> {
    solver: DirichletSolver<T>,
}

impl<T: Real> BiharmonicSolver<T> {
    pub fn new(mesh: &TriMesh<T>) -> Result<Self> {
        let a = mixed_biharmonic_matrix(mesh);
        let n = Space::P2.n_nodes(mesh);
        let mut fixed = vec![false; 2 * n];
        for b in crate::field::p2_boundary_nodes(mesh) {
            fixed[2 * b + 1] = true;
        }
        // (z_i, u_i) blocks keep a nonzero leading pivot at every step
        Ok(Self {
            solver: DirichletSolver::new(a, fixed, LinearSolver::Direct, &Ordering::BlockAmd(2))?,
        })
    }

    /// Returns `(u, z)` with `z ≈ -Δu`.
    pub fn solve_mixed(&self, mesh: &TriMesh<T>, g: &BoundaryDisplacement<T>) -> Result<(Field<T>, Field<T>)> {
        let (_, vals) = g.dirichlet_data(mesh)?;
        let n = vals[0].len();
        let mut u = [vec![T::zero(); n], vec![T::zero(); n]];
        let mut z = [vec![T::zero(); n], vec![T::zero(); n]];
        for c in 0..2 {
            let mut full = vec![T::zero(); 2 * n];
            for i in 0..n {
                full[2 * i + 1] = vals[c][i];
            }
            let x = self.solver.solve(None, &full)?;
            for i in 0..n {
                z[c][i] = x[2 * i];
                u[c][i] = x[2 * i + 1];
            }
        }
        Ok((p2_field(interleave(&u[0], &u[1])), p2_field(interleave(&z[0], &z[1]))))
    }

    pub fn solve(&self, mesh: &TriMesh<T>, g: &BoundaryDisplacement<T>) -> Result<Field<T>> {
        Ok(self.solve_mixed(mesh, g)?.0)
    }
}

/// The constrained mixed system of one displacement component, unknowns
/// interleaved as `(z_i, u_i)` per P2 node.
pub fn biharmonic_system<T: Real>(
    mesh: &TriMesh<T>,
    g: &BoundaryDisplacement<T>,
    component: usize,
) -> Result<SparseSystem<T>> {
    let (fixed, vals) = g.dirichlet_data(mesh)?;
    let a = mixed_biharmonic_matrix(mesh);
    let mut sys = SparseSystem::new(a, vec![T::zero(); 2 * fixed.len()]);
    let cons: Vec<(usize, T)> = (0..fixed.len())
        .filter(|&i| fixed[i])
        .map(|i| (2 * i + 1, vals[component][i]))
        .collect();
    sys.constrain(&cons);
    Ok(sys)
}

/// Mixed P2 discretization of `Δ²u = 0` with `u = g` and a weakly imposed
/// zero normal derivative.
pub fn biharmonic_extend<T: Real>(mesh: &TriMesh<T>, g: &BoundaryDisplacement<T>) -> Result<Field<T>> {
    BiharmonicSolver::new(mesh)?.solve(mesh, g)
}

/// Newton solve of `-div(a(‖∇u‖²) ∇u) = 0` with `u = g`, starting from `x0`
/// (harmonic extension when `None`). `coef(s)` returns `(a(s), a'(s))`.
pub fn solve_nonlinear_diffusion<T, C>(
    mesh: &TriMesh<T>,
    g: &BoundaryDisplacement<T>,
    coef: C,
    x0: Option<&Field<T>>,
    cfg: &NewtonConfig,
) -> Result<(Field<T>, NewtonReport)>
where
    T: Real,
    C: Fn(T) -> (T, T) + Sync,
{
    let (fixed_nodes, vals) = g.dirichlet_data(mesh)?;
    let n = fixed_nodes.len();
    let fixed: Vec<bool> = fixed_nodes.iter().flat_map(|&f| [f, f]).collect();
    let mut x = match x0 {
        Some(f) => {
            f.check(mesh)?;
            if f.space != Space::P2 || f.value_dim != 2 {
                return Err(Error::invalid("initial guess must be a P2 vector field"));
            }
            f.coefficients.clone()
        }
        None => harmonic_extend(mesh, g)?.coefficients,
    };
    for i in 0..n {
        if fixed_nodes[i] {
            x[2 * i] = vals[0][i];
            x[2 * i + 1] = vals[1][i];
        }
    }
    let zeros = vec![T::zero(); 2 * n];
    let mut residual = |u: &[T], want_jac: bool| -> Result<(Vec<T>, Option<CsrMatrix<T>>)> {
        let (mut r, mut j) = assemble_nonlinear_diffusion(mesh, u, &coef, want_jac)?;
        for (ri, &f) in r.iter_mut().zip(&fixed) {
            if f {
                *ri = T::zero();
            }
        }
        if let Some(j) = j.as_mut() {
            let mut scratch = vec![T::zero(); 2 * n];
            j.apply_dirichlet(&fixed, &mut [&mut scratch[..]], &[&zeros[..]]);
        }
        Ok((r, j))
    };
    let (u, report) = newton_solve(&mut residual, x, cfg, &Ordering::BlockAmd(2))?;
    Ok((p2_field(u), report))
}

/// Newton settings used by the nonlinear extension operators.
pub fn extension_newton() -> NewtonConfig {
    NewtonConfig {
        atol: 1e-11,
        rtol: 1e-11,
        max_iter: 60,
        ..NewtonConfig::default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PLaplaceConfig {
    pub p: f64,
    /// Regularization `δ` in `(δ + ‖∇u‖²)^{(p-2)/2}`.
    pub delta: f64,
}

impl Default for PLaplaceConfig {
    fn default() -> Self {
        Self { p: 4.0, delta: 1e-10 }
    }
}

fn p_coef<T: Real>(p: f64, delta: f64) -> impl Fn(T) -> (T, T) + Sync {
    let e = T::lit((p - 2.0) / 2.0);
    let d = T::lit(delta);
    move |s: T| {
        let b = d + s;
        if e == T::zero() {
            (T::one(), T::zero())
        } else {
            (b.powf(e), e * b.powf(e - T::one()))
        }
    }
}

/// Residual of the p-Laplace weak form with boundary rows removed.
pub fn p_laplace_residual<T: Real>(mesh: &TriMesh<T>, u: &Field<T>, p: f64, delta: f64) -> Result<Vec<T>> {
    let (mut r, _) = assemble_nonlinear_diffusion(mesh, &u.coefficients, p_coef::<T>(p, delta), false)?;
    for b in crate::field::p2_boundary_nodes(mesh) {
        r[2 * b] = T::zero();
        r[2 * b + 1] = T::zero();
    }
    Ok(r)
}

/// Regularized p-Laplace extension. Starts from the harmonic solution and,
/// if Newton fails for `p > 3`, continues through intermediate exponents.
pub fn p_laplace_extend<T: Real>(mesh: &TriMesh<T>, g: &BoundaryDisplacement<T>, p: f64, delta: f64) -> Result<Field<T>> {
    if !(p >= 2.0) || !(delta >= 0.0) {
        return Err(Error::invalid(format!("p-Laplace needs p >= 2 and delta >= 0, got p = {p}, delta = {delta}")));
    }
    let cfg = extension_newton();
    let start = harmonic_extend(mesh, g)?;
    match solve_nonlinear_diffusion(mesh, g, p_coef::<T>(p, delta), Some(&start), &cfg) {
        Ok((u, _)) => Ok(u),
        Err(Error::NonConvergence { .. }) if p > 3.0 => {
            let steps = 4;
            let mut u = start;
            for k in 1..=steps {
                let pk = 2.0 + (p - 2.0) * k as f64 / steps as f64;
                u = solve_nonlinear_diffusion(mesh, g, p_coef::<T>(pk, delta), Some(&u), &cfg)?.0;
            }
            Ok(u)
        }
        Err(e) => Err(e),
    }
}

/// Stiffness field settings of the linear-elastic extension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ElasticStiffnessConfig {
    pub mu_max: f64,
    pub mu_min: f64,
    /// Boundary tag on which `μ = μ_max`.
    pub gamma_tag: String,
}

impl Default for ElasticStiffnessConfig {
    fn default() -> Self {
        Self {
            mu_max: 100.0,
            mu_min: 1.0,
            gamma_tag: "moving".into(),
        }
    }
}

impl ElasticStiffnessConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu_min > 0.0 && self.mu_max >= self.mu_min) {
            return Err(Error::invalid("need mu_max >= mu_min > 0"));
        }
        Ok(())
    }
}

/// P1 harmonic `μ` with `μ_max` on the Γ tag and `μ_min` on the rest of the
/// boundary. Vertices touching Γ take `μ_max`.
pub fn stiffness_field<T: Real>(mesh: &TriMesh<T>, cfg: &ElasticStiffnessConfig) -> Result<Field<T>> {
    cfg.validate()?;
    let gamma = mesh.tagged_vertices(&cfg.gamma_tag)?;
    let nv = mesh.n_vertices();
    let mut fixed = vec![false; nv];
    let mut vals = vec![T::zero(); nv];
    for v in 0..nv {
        if mesh.is_boundary_vertex(v) {
            fixed[v] = true;
            vals[v] = T::lit(cfg.mu_min);
        }
    }
    for v in gamma {
        vals[v] = T::lit(cfg.mu_max);
    }
    let k = assemble_laplacian(mesh, Element::P1, 1);
    let mu = DirichletSolver::new(k, fixed, LinearSolver::Direct, &Ordering::Amd)?.solve(None, &vals)?;
    Field::new(mesh, Space::P1, 1, mu)
}

/// Solves `-div(2μ ε(u)) = 0`, `u = g` with the stiffness field from [`stiffness_field`].
pub fn elastic_extend<T: Real>(
    mesh: &TriMesh<T>,
    g: &BoundaryDisplacement<T>,
    cfg: &ElasticStiffnessConfig,
) -> Result<Field<T>> {
    let mu = stiffness_field(mesh, cfg)?;
    let (fixed_nodes, vals) = g.dirichlet_data(mesh)?;
    let k = assemble_elastic(mesh, &mu)?;
    let fixed: Vec<bool> = fixed_nodes.iter().flat_map(|&f| [f, f]).collect();
    let values = interleave(&vals[0], &vals[1]);
    let u = DirichletSolver::new(k, fixed, LinearSolver::Direct, &Ordering::BlockAmd(2))?.solve(None, &values)?;
    Ok(p2_field(u))
}
