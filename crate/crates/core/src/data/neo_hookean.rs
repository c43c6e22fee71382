//! Stationary compressible neo-Hookean solid under dead tractions.
//!
//! Stored energy `W(F) = μ/2 (tr FᵀF - 2) - μ ln J + λ/2 (ln J)²` with first
//! Piola stress `P = μ(F - F⁻ᵀ) + λ ln J F⁻ᵀ`.

use serde::{Deserialize, Serialize};

use super::LoadConfig;
use crate::error::{Error, Result};
use crate::ext::BoundaryDisplacement;
use crate::fem::assembly::{assemble_cells, pattern};
use crate::fem::element::vector_gradient;
use crate::fem::quadrature::{dunavant, gauss_legendre};
use crate::fem::{AffineMap, CsrMatrix, Element, LdlFactor, NewtonConfig, Ordering, Tabulation};
use crate::field::{p2_cell_nodes, Field, Space};
use crate::mesh::{SolidMesh, TriMesh};
use crate::profile::{timed, Phase};
use crate::real::{norm2, Real};

/// Lamé parameters of the solid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Material {
    pub mu_s: f64,
    pub lambda_s: f64,
}

impl Material {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu_s > 0.0 && self.lambda_s >= 0.0 && self.lambda_s.is_finite() && self.mu_s.is_finite()) {
            return Err(Error::invalid(format!("need mu_s > 0 and lambda_s >= 0, got {self:?}")));
        }
        Ok(())
    }
}

/// Load-step schedules tried in turn: full load, then ramps of 2, 4 and 8.
pub const CONTINUATION_STEPS: [usize; 4] = [1, 2, 4, 8];

/// Newton settings of the solid solve. The residual is measured in the
/// unscaled force norm.
pub fn solid_newton() -> NewtonConfig {
    NewtonConfig {
        atol: 1e-9,
        rtol: 1e-30,
        max_iter: 40,
        ..NewtonConfig::default()
    }
}

struct Kinematics<T> {
    f: [[T; 2]; 2],
    /// `F⁻ᵀ`
    g: [[T; 2]; 2],
    ln_j: T,
}

fn kinematics<T: Real>(grad_u: [[T; 2]; 2]) -> Option<Kinematics<T>> {
    let f = [
        [T::one() + grad_u[0][0], grad_u[0][1]],
        [grad_u[1][0], T::one() + grad_u[1][1]],
    ];
    let j = f[0][0] * f[1][1] - f[0][1] * f[1][0];
    if !(j > T::zero()) {
        return None;
    }
    let g = [[f[1][1] / j, -f[1][0] / j], [-f[0][1] / j, f[0][0] / j]];
    Some(Kinematics { f, g, ln_j: j.ln() })
}

fn inverted(cell: usize, j: f64) -> Error {
    Error::DegenerateCell { cell, area: j }
}

/// Internal force vector `∫ P:∇φ` and optionally its symmetric tangent, for
/// a P2 displacement `u` on `mesh`. Fails if `det F ≤ 0` at a quadrature point.
pub fn internal_forces<T: Real>(
    mesh: &TriMesh<T>,
    u: &[T],
    material: &Material,
    with_jacobian: bool,
) -> Result<(Vec<T>, Option<CsrMatrix<T>>)> {
    let (mu, lambda) = (T::lit(material.mu_s), T::lit(material.lambda_s));
    timed(Phase::Assembly, || {
        let tab = Tabulation::<T>::new(Element::P2, &dunavant(4));
        let mut r = vec![T::zero(); u.len()];
        let mut jac = with_jacobian.then(|| pattern(mesh, Element::P2, 2));
        assemble_cells(mesh, Element::P2, 2, jac.as_mut(), Some(&mut r), |c, m, v| {
            let map = AffineMap::new(mesh.cell_coords(c));
            let loc: Vec<[T; 2]> = p2_cell_nodes(mesh, c).iter().map(|&n| [u[2 * n], u[2 * n + 1]]).collect();
            let mut gr = [[T::zero(); 2]; 6];
            for q in 0..tab.n_points() {
                tab.grads(q, &map, &mut gr);
                let k = kinematics(vector_gradient(&loc, &gr)).ok_or_else(|| inverted(c, 0.0))?;
                let jw = tab.weights[q] * map.det;
                let mut p = [[T::zero(); 2]; 2];
                for a in 0..2 {
                    for b in 0..2 {
                        p[a][b] = mu * (k.f[a][b] - k.g[a][b]) + lambda * k.ln_j * k.g[a][b];
                    }
                }
                for i in 0..6 {
                    for a in 0..2 {
                        v[2 * i + a] += jw * (p[a][0] * gr[i][0] + p[a][1] * gr[i][1]);
                    }
                }
                if m.is_empty() {
                    continue;
                }
                // F⁻ᵀ ∇φ_i
                let mut gg = [[T::zero(); 2]; 6];
                for i in 0..6 {
                    for a in 0..2 {
                        gg[i][a] = k.g[a][0] * gr[i][0] + k.g[a][1] * gr[i][1];
                    }
                }
                let geo = mu - lambda * k.ln_j;
                for i in 0..6 {
                    for j in 0..6 {
                        let dot = gr[i][0] * gr[j][0] + gr[i][1] * gr[j][1];
                        for a in 0..2 {
                            for cc in 0..2 {
                                let mut kk = geo * gg[j][a] * gg[i][cc] + lambda * gg[i][a] * gg[j][cc];
                                if a == cc {
                                    kk += mu * dot;
                                }
                                m[(2 * i + a) * 12 + 2 * j + cc] += jw * kk;
                            }
                        }
                    }
                }
            }
            Ok(())
        })?;
        Ok((r, jac))
    })
}

/// Stored energy `∫ W(I + ∇u)`; infinite if some quadrature point is inverted.
pub fn strain_energy<T: Real>(mesh: &TriMesh<T>, u: &[T], material: &Material) -> T {
    let (mu, lambda) = (T::lit(material.mu_s), T::lit(material.lambda_s));
    let tab = Tabulation::<T>::new(Element::P2, &dunavant(4));
    let half = T::lit(0.5);
    let mut e = T::zero();
    let mut gr = [[T::zero(); 2]; 6];
    for c in 0..mesh.n_cells() {
        let map = AffineMap::new(mesh.cell_coords(c));
        let loc: Vec<[T; 2]> = p2_cell_nodes(mesh, c).iter().map(|&n| [u[2 * n], u[2 * n + 1]]).collect();
        for q in 0..tab.n_points() {
            tab.grads(q, &map, &mut gr);
            let Some(k) = kinematics(vector_gradient(&loc, &gr)) else {
                return T::infinity();
            };
            let tr = k.f[0][0] * k.f[0][0] + k.f[0][1] * k.f[0][1] + k.f[1][0] * k.f[1][0] + k.f[1][1] * k.f[1][1];
            let w = half * mu * (tr - T::lit(2.0)) - mu * k.ln_j + half * lambda * k.ln_j * k.ln_j;
            e += tab.weights[q] * map.det * w;
        }
    }
    e
}

/// Consistent nodal forces of the tractions of `load` at amplitude `theta`,
/// integrated on the reference boundary of a solid mesh tagged `tip`, `top`
/// and `bottom`. The side window `|x - c| < d` is integrated exactly.
pub fn traction_forces<T: Real>(mesh: &TriMesh<T>, load: &LoadConfig, theta: f64) -> Result<Vec<T>> {
    let nv = mesh.n_vertices();
    let mut f = vec![T::zero(); 2 * (nv + mesh.n_edges())];
    let tip = mesh.tag_id("tip").ok_or_else(|| Error::UnknownTag("tip".into()))?;
    let side: Vec<usize> = ["top", "bottom"]
        .iter()
        .map(|t| mesh.tag_id(t).ok_or_else(|| Error::UnknownTag(t.to_string())))
        .collect::<Result<_>>()?;
    let t_tip = load.f_tip * theta.cos();
    let t_side = load.f_side * (theta - load.phi).cos();
    let (gx, gw) = gauss_legendre(3);
    for be in mesh.boundary_edges() {
        let [a, b] = be.edge;
        let (pa, pb) = (mesh.vertices()[a], mesh.vertices()[b]);
        let (xa, ya, xb, yb) = (pa[0].as_f64(), pa[1].as_f64(), pb[0].as_f64(), pb[1].as_f64());
        let (traction, s0, s1) = if be.tag == tip {
            (t_tip, 0.0, 1.0)
        } else if side.contains(&be.tag) {
            // parameter range of the edge inside the load window
            let (lo, hi) = (load.c - load.d, load.c + load.d);
            let (s_lo, s_hi) = if (xb - xa).abs() > 0.0 {
                let (u, w) = ((lo - xa) / (xb - xa), (hi - xa) / (xb - xa));
                (u.min(w).max(0.0), u.max(w).min(1.0))
            } else if xa > lo && xa < hi {
                (0.0, 1.0)
            } else {
                (0.0, 0.0)
            };
            (t_side, s_lo, s_hi)
        } else {
            continue;
        };
        if traction == 0.0 || s1 <= s0 {
            continue;
        }
        let len = ((xb - xa).powi(2) + (yb - ya).powi(2)).sqrt() * (s1 - s0);
        let e = mesh.edge_id(a, b).expect("boundary edge exists");
        let m = nv + e;
        for (x, w) in gx.iter().zip(&gw) {
            let s = s0 + (s1 - s0) * x;
            let phi = [(1.0 - s) * (1.0 - 2.0 * s), s * (2.0 * s - 1.0), 4.0 * s * (1.0 - s)];
            for (node, ph) in [a, b, m].into_iter().zip(phi) {
                f[2 * node + 1] += T::lit(w * len * ph * traction);
            }
        }
    }
    Ok(f)
}

/// P2 nodes on edges tagged `tag`.
fn tagged_p2_nodes<T: Real>(mesh: &TriMesh<T>, tag: &str) -> Result<Vec<usize>> {
    let id = mesh.tag_id(tag).ok_or_else(|| Error::UnknownTag(tag.into()))?;
    let nv = mesh.n_vertices();
    let mut nodes = Vec::new();
    for be in mesh.boundary_edges().iter().filter(|be| be.tag == id) {
        let [a, b] = be.edge;
        nodes.extend([a, b, nv + mesh.edge_id(a, b).expect("boundary edge exists")]);
    }
    nodes.sort_unstable();
    nodes.dedup();
    Ok(nodes)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolidSolution<T> {
    /// P2 displacement of the solid.
    pub u: Field<T>,
    /// Number of load steps of the successful schedule.
    pub load_steps: usize,
    /// Final unconstrained force residual norm.
    pub residual: f64,
}

/// Newton solve of the clamped solid under `load` at amplitude `theta`,
/// ramping the load in up to 8 steps if the full load fails.
pub fn neo_hookean_solve<T: Real>(
    solid: &SolidMesh<T>,
    load: &LoadConfig,
    theta: f64,
    material: &Material,
) -> Result<SolidSolution<T>> {
    material.validate()?;
    load.validate(&solid.geometry)?;
    let mesh = &solid.mesh;
    let n = 2 * Space::P2.n_nodes(mesh);
    let mut fixed = vec![false; n];
    for node in tagged_p2_nodes(mesh, "attach")? {
        fixed[2 * node] = true;
        fixed[2 * node + 1] = true;
    }
    let f_ext = traction_forces(mesh, load, theta)?;
    let cfg = solid_newton();
    let mut last_err = None;
    for steps in CONTINUATION_STEPS {
        let mut u = vec![T::zero(); n];
        let mut ok = true;
        for k in 1..=steps {
            let scale = T::from_count(k) / T::from_count(steps);
            match solve_at(mesh, &fixed, &f_ext, scale, material, u.clone(), &cfg) {
                Ok(next) => u = next,
                Err(e) => {
                    log::debug!("load step {k}/{steps} failed: {e}");
                    last_err = Some(e);
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            let residual = free_residual(mesh, &fixed, &f_ext, T::one(), material, &u)?;
            return Ok(SolidSolution {
                u: Field::new(mesh, Space::P2, 2, u)?,
                load_steps: steps,
                residual,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: CONTINUATION_STEPS[CONTINUATION_STEPS.len() - 1],
        residual: f64::NAN,
        reason: format!(
            "neo-Hookean solve failed for load {load:?} at amplitude {theta} ({})",
            last_err.map(|e| e.to_string()).unwrap_or_default()
        ),
    })
}

fn free_residual<T: Real>(
    mesh: &TriMesh<T>,
    fixed: &[bool],
    f_ext: &[T],
    scale: T,
    material: &Material,
    u: &[T],
) -> Result<f64> {
    let (mut r, _) = internal_forces(mesh, u, material, false)?;
    for i in 0..r.len() {
        r[i] = if fixed[i] { T::zero() } else { r[i] - scale * f_ext[i] };
    }
    Ok(norm2(&r).as_f64())
}

/// Newton iteration on the total energy `W(u) - scale·f·u` with an Armijo
/// backtracking line search. Near the solution, where energy differences
/// drown in roundoff, a step is also accepted if it reduces the residual norm.
fn solve_at<T: Real>(
    mesh: &TriMesh<T>,
    fixed: &[bool],
    f_ext: &[T],
    scale: T,
    material: &Material,
    mut u: Vec<T>,
    cfg: &NewtonConfig,
) -> Result<Vec<T>> {
    let n = fixed.len();
    let zeros = vec![T::zero(); n];
    let residual = |u: &[T], want_jac: bool| -> Result<(Vec<T>, Option<CsrMatrix<T>>)> {
        let (mut r, mut j) = internal_forces(mesh, u, material, want_jac)?;
        for i in 0..n {
            r[i] = if fixed[i] { T::zero() } else { r[i] - scale * f_ext[i] };
        }
        if let Some(j) = j.as_mut() {
            let mut scratch = vec![T::zero(); n];
            j.apply_dirichlet(fixed, &mut [&mut scratch[..]], &[&zeros[..]]);
        }
        Ok((r, j))
    };
    let energy = |u: &[T]| -> f64 {
        let work: T = (0..n).filter(|&i| !fixed[i]).map(|i| f_ext[i] * u[i]).sum();
        (strain_energy(mesh, u, material) - scale * work).as_f64()
    };
    let mut factor: Option<LdlFactor<T>> = None;
    let mut rnorm = f64::NAN;
    for it in 0..cfg.max_iter {
        let (r, jac) = residual(&u, true)?;
        rnorm = norm2(&r).as_f64();
        if rnorm <= cfg.atol {
            return Ok(u);
        }
        let jac = jac.expect("Jacobian requested");
        let step = timed(Phase::LinearSolve, || -> Result<Vec<T>> {
            match factor.as_mut() {
                Some(f) => f.refactor(&jac)?,
                None => factor = Some(LdlFactor::new(&jac, &Ordering::BlockAmd(2))?),
            }
            Ok(factor.as_ref().unwrap().solve(&r))
        })?;
        let slope: f64 = r.iter().zip(&step).map(|(a, b)| (*a * *b).as_f64()).sum();
        if !(slope > 0.0) {
            return Err(Error::NonConvergence {
                iterations: it,
                residual: rnorm,
                reason: "tangent is not positive definite along the Newton step".into(),
            });
        }
        let e0 = energy(&u);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..=cfg.max_backtracks {
            let trial: Vec<T> = u.iter().zip(&step).map(|(&x, &s)| x - T::lit(t) * s).collect();
            let e = energy(&trial);
            let ok = e <= e0 - 1e-4 * t * slope
                || (e.is_finite() && matches!(residual(&trial, false), Ok((rt, _)) if norm2(&rt).as_f64() < rnorm));
            if ok {
                u = trial;
                accepted = true;
                break;
            }
            t *= cfg.backtrack;
        }
        if !accepted {
            return Err(Error::NonConvergence {
                iterations: it + 1,
                residual: rnorm,
                reason: "line search found no decrease".into(),
            });
        }
    }
    let (r, _) = residual(&u, false)?;
    let last = norm2(&r).as_f64();
    if last <= cfg.atol {
        return Ok(u);
    }
    Err(Error::NonConvergence {
        iterations: cfg.max_iter,
        residual: last.min(rnorm),
        reason: "iteration limit reached".into(),
    })
}

/// Boundary data on the fluid mesh: the solid trace on the `moving`
/// interface, zero on every other boundary node. Interface vertices are
/// matched to solid vertices by coordinates.
pub fn solid_trace_to_fluid<T: Real>(fluid: &TriMesh<T>, solid: &TriMesh<T>, u: &Field<T>) -> Result<BoundaryDisplacement<T>> {
    u.check(solid)?;
    if u.space != Space::P2 || u.value_dim != 2 {
        return Err(Error::invalid("solid displacement must be a P2 vector field"));
    }
    let moving = fluid.tag_id("moving").ok_or_else(|| Error::UnknownTag("moving".into()))?;
    let scale = solid.max_edge_length().as_f64();
    let solid_boundary: Vec<usize> = (0..solid.n_vertices()).filter(|&v| solid.is_boundary_vertex(v)).collect();
    let matching = |v: usize| -> Result<usize> {
        let p = fluid.vertices()[v];
        solid_boundary
            .iter()
            .copied()
            .find(|&s| {
                let q = solid.vertices()[s];
                (p[0] - q[0]).abs().as_f64() <= 1e-9 * scale && (p[1] - q[1]).abs().as_f64() <= 1e-9 * scale
            })
            .ok_or_else(|| Error::invalid(format!("interface vertex {v} has no solid counterpart")))
    };
    let mut g = BoundaryDisplacement::zeros(fluid);
    let (nv_f, nv_s) = (fluid.n_vertices(), solid.n_vertices());
    let value = |node: usize| [u.coefficients[2 * node], u.coefficients[2 * node + 1]];
    for be in fluid.boundary_edges().iter().filter(|be| be.tag == moving) {
        let [a, b] = be.edge;
        let (sa, sb) = (matching(a)?, matching(b)?);
        let se = solid
            .edge_id(sa, sb)
            .ok_or_else(|| Error::invalid(format!("interface edge ({a}, {b}) is not a solid edge")))?;
        let fe = fluid.edge_id(a, b).expect("boundary edge exists");
        g.values.insert(a, value(sa));
        g.values.insert(b, value(sb));
        g.values.insert(nv_f + fe, value(nv_s + se));
    }
    Ok(g)
}

/// Solid solve followed by the transfer to the fluid boundary.
pub fn neo_hookean_boundary<T: Real>(
    fluid: &TriMesh<T>,
    solid: &SolidMesh<T>,
    load: &LoadConfig,
    theta: f64,
    material: &Material,
) -> Result<BoundaryDisplacement<T>> {
    let sol = neo_hookean_solve(solid, load, theta, material)?;
    solid_trace_to_fluid(fluid, &solid.mesh, &sol.u)
}
