//! Global matrix and vector assembly over triangle cells.
//!
//! Local matrices are computed in parallel in fixed-size chunks and scattered
//! sequentially in cell order, so results do not depend on the thread count.

use rayon::prelude::*;

use super::element::{AffineMap, Element, Tabulation};
use super::quadrature::dunavant;
use super::sparse::CsrMatrix;
use crate::error::{Error, Result};
use crate::field::{p2_cell_nodes, Field, Space};
use crate::mesh::TriMesh;
use crate::profile::{timed, Phase};
use crate::real::Real;

const CHUNK: usize = 2048;

/// Global node ids of a cell for the given element.
#[inline]
pub fn cell_nodes<T: Real>(mesh: &TriMesh<T>, element: Element, cell: usize) -> ([usize; 6], usize) {
    match element {
        Element::P1 => {
            let c = mesh.cells()[cell];
            ([c[0], c[1], c[2], 0, 0, 0], 3)
        }
        Element::P2 => (p2_cell_nodes(mesh, cell), 6),
    }
}

pub fn n_nodes<T: Real>(mesh: &TriMesh<T>, element: Element) -> usize {
    match element {
        Element::P1 => mesh.n_vertices(),
        Element::P2 => mesh.n_vertices() + mesh.n_edges(),
    }
}

pub fn space_of(element: Element) -> Space {
    match element {
        Element::P1 => Space::P1,
        Element::P2 => Space::P2,
    }
}

/// Zero matrix with the sparsity of `element` with `value_dim` coupled components.
pub fn pattern<T: Real>(mesh: &TriMesh<T>, element: Element, value_dim: usize) -> CsrMatrix<T> {
    let nodes: Vec<([usize; 6], usize)> = (0..mesh.n_cells()).map(|c| cell_nodes(mesh, element, c)).collect();
    CsrMatrix::from_element_nodes(n_nodes(mesh, element), value_dim, nodes.iter().map(|(n, k)| &n[..*k]))
}

/// Default quadrature degree for stiffness-type forms of each element.
pub fn stiffness_degree(element: Element) -> usize {
    match element {
        Element::P1 => 2,
        Element::P2 => 4,
    }
}

/// Core loop: `local(cell, mat, vec)` fills a dense local matrix and vector in
/// local dof order (`node * value_dim + component`).
pub(crate) fn assemble_cells<T, F>(
    mesh: &TriMesh<T>,
    element: Element,
    value_dim: usize,
    mut matrix: Option<&mut CsrMatrix<T>>,
    mut vector: Option<&mut [T]>,
    local: F,
) -> Result<()>
where
    T: Real,
    F: Fn(usize, &mut [T], &mut [T]) -> Result<()> + Sync,
{
    let nl = element.n_basis() * value_dim;
    let want_mat = matrix.is_some();
    let n_cells = mesh.n_cells();
    let mut start = 0;
    while start < n_cells {
        let end = (start + CHUNK).min(n_cells);
        let blocks: Vec<(Vec<T>, Vec<T>)> = (start..end)
            .into_par_iter()
            .map(|c| {
                let mut m = vec![T::zero(); if want_mat { nl * nl } else { 0 }];
                let mut v = vec![T::zero(); nl];
                local(c, &mut m, &mut v).map(|_| (m, v))
            })
            .collect::<Result<_>>()?;
        for (c, (m, v)) in (start..end).zip(blocks) {
            let (nodes, nb) = cell_nodes(mesh, element, c);
            let mut dofs = [0usize; 12];
            for i in 0..nb {
                for k in 0..value_dim {
                    dofs[i * value_dim + k] = nodes[i] * value_dim + k;
                }
            }
            if let Some(a) = matrix.as_deref_mut() {
                a.add_local(&dofs[..nl], &m);
            }
            if let Some(b) = vector.as_deref_mut() {
                for (i, &d) in dofs[..nl].iter().enumerate() {
                    b[d] += v[i];
                }
            }
        }
        start = end;
    }
    Ok(())
}

/// Scalar weight at the quadrature points of a cell.
fn weight_at<T: Real>(mesh: &TriMesh<T>, weight: &Field<T>, cell: usize, p1: &Tabulation<T>, q: usize) -> T {
    match weight.space {
        Space::DG0 => weight.coefficients[cell],
        Space::P1 | Space::P2 => {
            let c = mesh.cells()[cell];
            let phi = p1.values(q);
            (0..3).map(|i| phi[i] * weight.coefficients[c[i]]).sum()
        }
    }
}

fn check_scalar_weight<T: Real>(mesh: &TriMesh<T>, weight: &Field<T>) -> Result<()> {
    if weight.value_dim != 1 || weight.space == Space::P2 {
        return Err(Error::invalid("weight must be a scalar DG0 or P1 field"));
    }
    weight.check(mesh)
}

/// `A[i][j] = ∫ w ∇φ_i·∇φ_j`, block diagonal over `value_dim` components.
pub fn assemble_weighted_laplacian<T: Real>(
    mesh: &TriMesh<T>,
    weight: &Field<T>,
    element: Element,
    value_dim: usize,
) -> Result<CsrMatrix<T>> {
    check_scalar_weight(mesh, weight)?;
    timed(Phase::Assembly, || {
        let rule = dunavant(stiffness_degree(element));
        let tab = Tabulation::<T>::new(element, &rule);
        let p1 = Tabulation::<T>::new(Element::P1, &rule);
        let nb = element.n_basis();
        let nl = nb * value_dim;
        let mut a = pattern(mesh, element, value_dim);
        assemble_cells(mesh, element, value_dim, Some(&mut a), None, |c, m, _| {
            let map = AffineMap::new(mesh.cell_coords(c));
            let mut g = [[T::zero(); 2]; 6];
            for q in 0..tab.n_points() {
                let w = weight_at(mesh, weight, c, &p1, q);
                if !(w > T::zero()) {
                    return Err(Error::NonPositiveWeight {
                        cell: c,
                        value: w.as_f64(),
                    });
                }
                let jw = tab.weights[q] * map.det * w;
                tab.grads(q, &map, &mut g[..nb]);
                for i in 0..nb {
                    for j in 0..nb {
                        let k = jw * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
                        for d in 0..value_dim {
                            m[(i * value_dim + d) * nl + j * value_dim + d] += k;
                        }
                    }
                }
            }
            Ok(())
        })?;
        Ok(a)
    })
}

/// Unweighted stiffness matrix.
pub fn assemble_laplacian<T: Real>(mesh: &TriMesh<T>, element: Element, value_dim: usize) -> CsrMatrix<T> {
    let one = Field {
        space: Space::DG0,
        value_dim: 1,
        coefficients: vec![T::one(); mesh.n_cells()],
    };
    assemble_weighted_laplacian(mesh, &one, element, value_dim).expect("unit weight is positive")
}

/// `M[i][j] = ∫ φ_i φ_j`, block diagonal over `value_dim` components.
pub fn assemble_mass<T: Real>(mesh: &TriMesh<T>, element: Element, value_dim: usize) -> CsrMatrix<T> {
    timed(Phase::Assembly, || {
        let rule = dunavant(2 * element.degree());
        let tab = Tabulation::<T>::new(element, &rule);
        let nb = element.n_basis();
        let nl = nb * value_dim;
        let mut a = pattern(mesh, element, value_dim);
        assemble_cells(mesh, element, value_dim, Some(&mut a), None, |c, m, _| {
            let det = mesh.cell_area(c) * T::lit(2.0);
            for q in 0..tab.n_points() {
                let jw = tab.weights[q] * det;
                let phi = tab.values(q);
                for i in 0..nb {
                    for j in 0..nb {
                        let k = jw * phi[i] * phi[j];
                        for d in 0..value_dim {
                            m[(i * value_dim + d) * nl + j * value_dim + d] += k;
                        }
                    }
                }
            }
            Ok(())
        })
        .expect("mass assembly cannot fail");
        a
    })
}

/// Scalar load vector `b_i = ∫ f φ_i` with a degree-5 rule.
pub fn assemble_load<T: Real>(mesh: &TriMesh<T>, element: Element, f: impl Fn([T; 2]) -> T + Sync) -> Vec<T> {
    timed(Phase::Assembly, || {
        let rule = dunavant(5);
        let tab = Tabulation::<T>::new(element, &rule);
        let nb = element.n_basis();
        let mut b = vec![T::zero(); n_nodes(mesh, element)];
        assemble_cells(mesh, element, 1, None, Some(&mut b), |c, _, v| {
            let map = AffineMap::new(mesh.cell_coords(c));
            for q in 0..tab.n_points() {
                let fx = f(map.map(tab.points[q]));
                let jw = tab.weights[q] * map.det * fx;
                let phi = tab.values(q);
                for i in 0..nb {
                    v[i] += jw * phi[i];
                }
            }
            Ok(())
        })
        .expect("load assembly cannot fail");
        b
    })
}

/// P2 vector stiffness of `∫ 2μ ε(u):ε(v)` with μ a P1 or DG0 scalar field.
pub fn assemble_elastic<T: Real>(mesh: &TriMesh<T>, mu: &Field<T>) -> Result<CsrMatrix<T>> {
    check_scalar_weight(mesh, mu)?;
    timed(Phase::Assembly, || {
        let rule = dunavant(4);
        let tab = Tabulation::<T>::new(Element::P2, &rule);
        let p1 = Tabulation::<T>::new(Element::P1, &rule);
        let mut a = pattern(mesh, Element::P2, 2);
        assemble_cells(mesh, Element::P2, 2, Some(&mut a), None, |c, m, _| {
            let map = AffineMap::new(mesh.cell_coords(c));
            let mut g = [[T::zero(); 2]; 6];
            for q in 0..tab.n_points() {
                let w = weight_at(mesh, mu, c, &p1, q);
                if !(w > T::zero()) {
                    return Err(Error::NonPositiveWeight {
                        cell: c,
                        value: w.as_f64(),
                    });
                }
                let jw = tab.weights[q] * map.det * w;
                tab.grads(q, &map, &mut g);
                for i in 0..6 {
                    for j in 0..6 {
                        let gij = g[i][0] * g[j][0] + g[i][1] * g[j][1];
                        for ci in 0..2 {
                            for cj in 0..2 {
                                // μ (δ ∇φ_i·∇φ_j + ∂_{cj}φ_i ∂_{ci}φ_j)
                                let mut k = g[i][cj] * g[j][ci];
                                if ci == cj {
                                    k += gij;
                                }
                                m[(2 * i + ci) * 12 + 2 * j + cj] += jw * k;
                            }
                        }
                    }
                }
            }
            Ok(())
        })?;
        Ok(a)
    })
}

/// Residual and Jacobian of `∫ a(‖∇u‖²) ∇u:∇v` for a P2 vector field `u`,
/// where `coef(s)` returns `(a(s), a'(s))`.
///
/// The Jacobian `a ∇δu:∇v + 2a'(∇u:∇δu)(∇u:∇v)` is symmetric.
pub fn assemble_nonlinear_diffusion<T, C>(
    mesh: &TriMesh<T>,
    u: &[T],
    coef: C,
    with_jacobian: bool,
) -> Result<(Vec<T>, Option<CsrMatrix<T>>)>
where
    T: Real,
    C: Fn(T) -> (T, T) + Sync,
{
    timed(Phase::Assembly, || {
        let rule = dunavant(4);
        let tab = Tabulation::<T>::new(Element::P2, &rule);
        let mut r = vec![T::zero(); u.len()];
        let mut jac = with_jacobian.then(|| pattern(mesh, Element::P2, 2));
        let two = T::lit(2.0);
        assemble_cells(mesh, Element::P2, 2, jac.as_mut(), Some(&mut r), |c, m, v| {
            let map = AffineMap::new(mesh.cell_coords(c));
            let nodes = p2_cell_nodes(mesh, c);
            let loc: Vec<[T; 2]> = nodes.iter().map(|&n| [u[2 * n], u[2 * n + 1]]).collect();
            let mut g = [[T::zero(); 2]; 6];
            for q in 0..tab.n_points() {
                tab.grads(q, &map, &mut g);
                let gu = super::element::vector_gradient(&loc, &g);
                let s = gu[0][0] * gu[0][0] + gu[0][1] * gu[0][1] + gu[1][0] * gu[1][0] + gu[1][1] * gu[1][1];
                let (a, da) = coef(s);
                let jw = tab.weights[q] * map.det;
                // ∇u_c · ∇φ_i
                let mut h = [[T::zero(); 2]; 6];
                for i in 0..6 {
                    for cc in 0..2 {
                        h[i][cc] = gu[cc][0] * g[i][0] + gu[cc][1] * g[i][1];
                    }
                }
                for i in 0..6 {
                    for cc in 0..2 {
                        v[2 * i + cc] += jw * a * h[i][cc];
                    }
                }
                if !m.is_empty() {
                    for i in 0..6 {
                        for j in 0..6 {
                            let gij = g[i][0] * g[j][0] + g[i][1] * g[j][1];
                            for ci in 0..2 {
                                for cj in 0..2 {
                                    let mut k = two * da * h[i][ci] * h[j][cj];
                                    if ci == cj {
                                        k += a * gij;
                                    }
                                    m[(2 * i + ci) * 12 + 2 * j + cj] += jw * k;
                                }
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
