//! Mask function `ℓ`: P1 solution of `-Δℓ = f`, `ℓ = 0` on the boundary.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{assemble_laplacian, assemble_load, assemble_mass, DirichletSolver, Element, LinearSolver, Ordering};
use crate::field::{Field, Space};
use crate::mesh::TriMesh;
use crate::real::Real;

/// Right-hand side choices for the mask problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum MaskRhs {
    ConstantOne,
    /// [`hand_tuned_rhs`], scaled so that its integral equals the domain area.
    HandTuned,
    /// Nodal values of a nonnegative P1 function.
    Custom { values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaskConfig {
    pub rhs: MaskRhs,
    /// Scale the solution so that its largest nodal value is 1.
    pub normalize: bool,
}

impl Default for MaskConfig {
    fn default() -> Self {
        Self {
            rhs: MaskRhs::ConstantOne,
            normalize: true,
        }
    }
}

/// `2(x + 1)(1 - x) exp(-3.5 x⁷) + 0.1`: large near the flap, small
/// downstream.
pub fn hand_tuned_rhs(x: f64, _y: f64) -> f64 {
    2.0 * (x + 1.0) * (1.0 - x) * (-3.5 * x.powi(7)).exp() + 0.1
}

/// Solves the mask problem and checks strict interior positivity, which the
/// discrete maximum principle guarantees on Delaunay meshes.
pub fn compute_mask<T: Real>(mesh: &TriMesh<T>, cfg: &MaskConfig) -> Result<Field<T>> {
    let nv = mesh.n_vertices();
    let load: Vec<T> = match &cfg.rhs {
        MaskRhs::ConstantOne => assemble_load(mesh, Element::P1, |_| T::one()),
        MaskRhs::HandTuned => {
            let b = assemble_load(mesh, Element::P1, |p| T::lit(hand_tuned_rhs(p[0].as_f64(), p[1].as_f64())));
            // P1 basis functions sum to one, so the entries sum to ∫f
            let integral: T = b.iter().copied().sum();
            let scale = mesh.total_area() / integral;
            b.into_iter().map(|v| v * scale).collect()
        }
        MaskRhs::Custom { values } => {
            if values.len() != nv {
                return Err(Error::FieldLength {
                    expected: nv,
                    actual: values.len(),
                });
            }
            if values.iter().any(|&v| !(v >= 0.0)) || values.iter().all(|&v| v == 0.0) {
                return Err(Error::invalid("mask right-hand side must be nonnegative and not identically zero"));
            }
            let f: Vec<T> = values.iter().map(|&v| T::lit(v)).collect();
            assemble_mass(mesh, Element::P1, 1).matvec(&f)
        }
    };
    let k = assemble_laplacian(mesh, Element::P1, 1);
    let fixed: Vec<bool> = (0..nv).map(|v| mesh.is_boundary_vertex(v)).collect();
    let solver = DirichletSolver::new(k, fixed.clone(), LinearSolver::Direct, &Ordering::Amd)?;
    let mut l = solver.solve(Some(&load), &vec![T::zero(); nv])?;
    for v in 0..nv {
        if fixed[v] {
            l[v] = T::zero();
        } else if !(l[v] > T::zero()) {
            return Err(Error::MaskNotPositive {
                vertex: v,
                value: l[v].as_f64(),
            });
        }
    }
    if cfg.normalize {
        let max = l.iter().copied().fold(T::zero(), T::max);
        if max > T::zero() {
            l.iter_mut().for_each(|v| *v /= max);
        }
    }
    Field::new(mesh, Space::P1, 1, l)
}
