//! Linear systems with Dirichlet constraints and the default solve path.

use super::cg::{cg_solve, CgConfig};
use super::ldl::{LdlFactor, Ordering};
use super::sparse::CsrMatrix;
use crate::error::Result;
use crate::profile::{timed, Phase};
use crate::real::{norm2, Real};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum LinearSolver {
    /// Sparse LDLᵀ with AMD ordering.
    #[default]
    Direct,
    /// Jacobi-preconditioned CG, positive definite systems only.
    Cg(CgConfig),
}

/// Square matrix, right-hand side and the Dirichlet constraints applied to them.
#[derive(Debug, Clone)]
pub struct SparseSystem<T> {
    pub matrix: CsrMatrix<T>,
    pub rhs: Vec<T>,
    pub constraints: Vec<(usize, T)>,
}

impl<T: Real> SparseSystem<T> {
    pub fn new(matrix: CsrMatrix<T>, rhs: Vec<T>) -> Self {
        assert_eq!(matrix.n_rows(), rhs.len());
        Self {
            matrix,
            rhs,
            constraints: Vec::new(),
        }
    }

    /// Applies `x[dof] = value` by row replacement with symmetric elimination.
    pub fn constrain(&mut self, constraints: &[(usize, T)]) {
        let n = self.rhs.len();
        let mut fixed = vec![false; n];
        let mut values = vec![T::zero(); n];
        for &(d, v) in constraints {
            fixed[d] = true;
            values[d] = v;
        }
        self.matrix.apply_dirichlet(&fixed, &mut [&mut self.rhs[..]], &[&values[..]]);
        self.constraints.extend_from_slice(constraints);
    }

    /// `‖A x - b‖₂`.
    pub fn residual_norm(&self, x: &[T]) -> T {
        let ax = self.matrix.matvec(x);
        norm2(&ax.iter().zip(&self.rhs).map(|(&a, &b)| a - b).collect::<Vec<_>>())
    }
}

/// Direct solve of a constrained system.
pub fn solve_linear<T: Real>(system: &SparseSystem<T>) -> Result<Vec<T>> {
    solve_with(&system.matrix, &system.rhs, LinearSolver::Direct, &Ordering::Amd)
}

/// Solves `A x = b` with the chosen method; `ordering` only affects the direct path.
pub fn solve_with<T: Real>(a: &CsrMatrix<T>, b: &[T], solver: LinearSolver, ordering: &Ordering) -> Result<Vec<T>> {
    timed(Phase::LinearSolve, || match solver {
        LinearSolver::Direct => Ok(LdlFactor::new(a, ordering)?.solve(b)),
        LinearSolver::Cg(cfg) => cg_solve(a, b, None, &cfg),
    })
}

/// Factorizes once and solves for several right-hand sides.
pub fn solve_many<T: Real>(a: &CsrMatrix<T>, rhs: &[Vec<T>], solver: LinearSolver, ordering: &Ordering) -> Result<Vec<Vec<T>>> {
    timed(Phase::LinearSolve, || match solver {
        LinearSolver::Direct => {
            let f = LdlFactor::new(a, ordering)?;
            Ok(rhs.iter().map(|b| f.solve(b)).collect())
        }
        LinearSolver::Cg(cfg) => rhs.iter().map(|b| cg_solve(a, b, None, &cfg)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    #[test]
    fn identity_returns_rhs() {
        let s = SparseSystem::new(CsrMatrix::<f64>::identity(4), vec![1.0, -2.0, 3.5, 0.0]);
        assert_eq!(solve_linear(&s).unwrap(), vec![1.0, -2.0, 3.5, 0.0]);
    }

    #[test]
    fn two_by_two() {
        let a = CsrMatrix::<f64>::from_triplets(2, 2, vec![(0, 0, 2.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 2.0)]);
        let s = SparseSystem::new(a, vec![3.0, 3.0]);
        let x: Vec<f64> = solve_linear(&s).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
        assert!(s.residual_norm(&x) <= 1e-10 * (1.0 + 18f64.sqrt()));
    }

    #[test]
    fn singular_system_fails_explicitly() {
        let a = CsrMatrix::from_triplets(2, 2, vec![(0, 0, 1.0), (0, 1, 2.0), (1, 0, 2.0), (1, 1, 4.0)]);
        assert!(matches!(solve_linear(&SparseSystem::new(a, vec![1.0, 2.0])), Err(Error::Factorization { .. })));
    }
}

/// A factorized Dirichlet problem `K x = f` with `x = g` on a fixed set of
/// dofs. The factorization depends only on `K` and the fixed set, so many
/// data sets can be solved cheaply.
#[derive(Debug, Clone)]
pub struct DirichletSolver<T> {
    k: CsrMatrix<T>,
    constrained: CsrMatrix<T>,
    fixed: Vec<bool>,
    solver: LinearSolver,
    factor: Option<LdlFactor<T>>,
}

impl<T: Real> DirichletSolver<T> {
    pub fn new(k: CsrMatrix<T>, fixed: Vec<bool>, solver: LinearSolver, ordering: &Ordering) -> Result<Self> {
        assert_eq!(fixed.len(), k.n_rows());
        let mut constrained = k.clone();
        let n = k.n_rows();
        let zeros = vec![T::zero(); n];
        let mut scratch = vec![T::zero(); n];
        constrained.apply_dirichlet(&fixed, &mut [&mut scratch[..]], &[&zeros[..]]);
        let factor = match solver {
            LinearSolver::Direct => Some(timed(Phase::LinearSolve, || LdlFactor::new(&constrained, ordering))?),
            LinearSolver::Cg(_) => None,
        };
        Ok(Self {
            k,
            constrained,
            fixed,
            solver,
            factor,
        })
    }

    pub fn fixed(&self) -> &[bool] {
        &self.fixed
    }

    /// The unconstrained operator.
    pub fn matrix(&self) -> &CsrMatrix<T> {
        &self.k
    }

    /// The operator after row replacement and symmetric elimination.
    pub fn constrained_matrix(&self) -> &CsrMatrix<T> {
        &self.constrained
    }

    /// Right-hand side of the constrained system for load `f` (zero if
    /// `None`) and Dirichlet values read from `values` at fixed dofs.
    pub fn rhs(&self, load: Option<&[T]>, values: &[T]) -> Vec<T> {
        let n = self.fixed.len();
        let lift: Vec<T> = (0..n).map(|i| if self.fixed[i] { values[i] } else { T::zero() }).collect();
        let klift = self.k.matvec(&lift);
        (0..n)
            .map(|i| {
                if self.fixed[i] {
                    values[i]
                } else {
                    load.map_or(T::zero(), |f| f[i]) - klift[i]
                }
            })
            .collect()
    }

    pub fn solve(&self, load: Option<&[T]>, values: &[T]) -> Result<Vec<T>> {
        let b = self.rhs(load, values);
        self.solve_rhs(&b)
    }

    /// Solves with an already constrained right-hand side.
    pub fn solve_rhs(&self, b: &[T]) -> Result<Vec<T>> {
        timed(Phase::LinearSolve, || match (&self.factor, self.solver) {
            (Some(f), _) => Ok(f.solve(b)),
            (None, LinearSolver::Cg(cfg)) => cg_solve(&self.constrained, b, None, &cfg),
            (None, LinearSolver::Direct) => unreachable!("direct solver always holds a factor"),
        })
    }
}
