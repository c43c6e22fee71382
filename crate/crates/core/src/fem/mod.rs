//! Finite element kernels: quadrature, P1/P2 elements, sparse assembly and solvers.

pub mod assembly;
pub mod cg;
pub mod clement;
pub mod element;
pub mod ldl;
pub mod newton;
pub mod quadrature;
pub mod sparse;
pub mod system;

pub use assembly::{
    assemble_elastic, assemble_laplacian, assemble_load, assemble_mass, assemble_nonlinear_diffusion,
    assemble_weighted_laplacian,
};
pub use cg::{cg_solve, CgConfig};
pub use clement::{clement_gradient, ClementOperator};
pub use element::{AffineMap, Element, Tabulation};
pub use ldl::{LdlFactor, Ordering};
pub use newton::{newton_solve, NewtonConfig, NewtonReport};
pub use sparse::CsrMatrix;
pub use system::{solve_linear, solve_many, solve_with, DirichletSolver, LinearSolver, SparseSystem};
