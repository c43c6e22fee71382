//! Extension operators: boundary displacement to interior displacement.

mod boundary;
mod classic;

pub use boundary::{read_boundary, write_boundary, BoundaryDisplacement};
pub use classic::{
    biharmonic_extend, biharmonic_system, elastic_extend, extension_newton, harmonic_extend, harmonic_system,
    p_laplace_extend, p_laplace_residual, solve_nonlinear_diffusion, stiffness_field, BiharmonicSolver,
    ElasticStiffnessConfig, HarmonicSolver, PLaplaceConfig,
};

use crate::error::Result;
use crate::field::Field;
use crate::mesh::TriMesh;
use crate::quality::deform;
use crate::real::Real;

/// A stateless map from boundary data to a P2 displacement field.
pub trait ExtensionOperator<T: Real>: Send + Sync {
    fn extend(&self, mesh: &TriMesh<T>, g: &BoundaryDisplacement<T>) -> Result<Field<T>>;
}

/// The reference operators.
#[derive(Debug, Clone, PartialEq)]
pub enum ClassicOperator {
    Harmonic,
    Biharmonic,
    PLaplace(PLaplaceConfig),
    Elastic(ElasticStiffnessConfig),
}

impl<T: Real> ExtensionOperator<T> for ClassicOperator {
    fn extend(&self, mesh: &TriMesh<T>, g: &BoundaryDisplacement<T>) -> Result<Field<T>> {
        match self {
            ClassicOperator::Harmonic => harmonic_extend(mesh, g),
            ClassicOperator::Biharmonic => biharmonic_extend(mesh, g),
            ClassicOperator::PLaplace(c) => p_laplace_extend(mesh, g, c.p, c.delta),
            ClassicOperator::Elastic(c) => elastic_extend(mesh, g, c),
        }
    }
}

/// Solves `base` on the mesh moved by `u_old` for the increment `g - g_old`
/// and adds the result to `u_old` nodally.
pub fn incremental_extend<T: Real>(
    base: &dyn ExtensionOperator<T>,
    mesh: &TriMesh<T>,
    u_old: &Field<T>,
    g: &BoundaryDisplacement<T>,
    g_old: &BoundaryDisplacement<T>,
) -> Result<Field<T>> {
    let moved = deform(mesh, u_old)?;
    let dg = g.to_p2(mesh)?.axpy(-T::one(), &g_old.to_p2(mesh)?);
    let du = base.extend(&moved, &dg)?;
    Ok(u_old.to_p2(mesh).axpy(T::one(), &du))
}

/// An operator applied along a sequence of boundary data, possibly keeping state.
pub trait Stepper<T: Real> {
    fn step(&mut self, mesh: &TriMesh<T>, g: &BoundaryDisplacement<T>) -> Result<Field<T>>;
}

impl<T, F> Stepper<T> for F
where
    T: Real,
    F: FnMut(&TriMesh<T>, &BoundaryDisplacement<T>) -> Result<Field<T>>,
{
    fn step(&mut self, mesh: &TriMesh<T>, g: &BoundaryDisplacement<T>) -> Result<Field<T>> {
        self(mesh, g)
    }
}

/// Incremental application of a base operator across a sequence.
pub struct Incremental<O, T> {
    pub base: O,
    state: Option<(Field<T>, BoundaryDisplacement<T>)>,
}

impl<O, T: Real> Incremental<O, T> {
    pub fn new(base: O) -> Self {
        Self { base, state: None }
    }

    pub fn reset(&mut self) {
        self.state = None;
    }
}

impl<O: ExtensionOperator<T>, T: Real> Stepper<T> for Incremental<O, T> {
    fn step(&mut self, mesh: &TriMesh<T>, g: &BoundaryDisplacement<T>) -> Result<Field<T>> {
        let u = match &self.state {
            None => self.base.extend(mesh, g)?,
            Some((u_old, g_old)) => incremental_extend(&self.base, mesh, u_old, g, g_old)?,
        };
        self.state = Some((u.clone(), g.to_p2(mesh)?));
        Ok(u)
    }
}
