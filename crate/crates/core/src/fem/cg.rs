//! Jacobi-preconditioned conjugate gradients for symmetric positive definite systems.

use super::sparse::CsrMatrix;
use crate::error::{Error, Result};
use crate::real::{dot, norm2, Real};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgConfig {
    /// Relative residual target `‖b - Ax‖ / ‖b‖`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for CgConfig {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 20_000,
        }
    }
}

/// Solves `A x = b` starting from `x0` (zero if `None`).
pub fn cg_solve<T: Real>(a: &CsrMatrix<T>, b: &[T], x0: Option<&[T]>, cfg: &CgConfig) -> Result<Vec<T>> {
    let n = b.len();
    let inv_diag: Vec<T> = a
        .diagonal()
        .into_iter()
        .map(|d| if d != T::zero() { T::one() / d } else { T::one() })
        .collect();
    let mut x = x0.map_or_else(|| vec![T::zero(); n], |x| x.to_vec());
    let mut r: Vec<T> = a.matvec(&x).iter().zip(b).map(|(&ax, &bi)| bi - ax).collect();
    let bnorm = norm2(b).max(T::min_positive_value());
    let tol = T::lit(cfg.tol);
    let mut z: Vec<T> = r.iter().zip(&inv_diag).map(|(&ri, &di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![T::zero(); n];
    for it in 0..cfg.max_iter {
        if norm2(&r) / bnorm <= tol {
            return Ok(x);
        }
        a.matvec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > T::zero()) {
            return Err(Error::IterativeSolver {
                iterations: it,
                residual: (norm2(&r) / bnorm).as_f64(),
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let res = norm2(&r) / bnorm;
    if res <= tol {
        Ok(x)
    } else {
        Err(Error::IterativeSolver {
            iterations: cfg.max_iter,
            residual: res.as_f64(),
        })
    }
}
