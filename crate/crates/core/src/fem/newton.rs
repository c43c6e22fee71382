//! Damped Newton iteration with backtracking on the residual norm.

use super::ldl::{LdlFactor, Ordering};
use super::sparse::CsrMatrix;
use crate::error::{Error, Result};
use crate::profile::{timed, Phase};
use crate::real::{norm2, Real};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonConfig {
    pub atol: f64,
    pub rtol: f64,
    pub max_iter: usize,
    /// Step reduction factor of the line search.
    pub backtrack: f64,
    pub max_backtracks: usize,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            atol: 1e-10,
            rtol: 1e-10,
            max_iter: 50,
            backtrack: 0.5,
            max_backtracks: 25,
        }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.atol > 0.0 && self.rtol > 0.0) || self.max_iter == 0 || !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::invalid("Newton tolerances must be positive and max_iter at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonReport {
    pub iterations: usize,
    pub initial_residual: f64,
    pub residual: f64,
}

/// Residual callback: given `x` and whether the Jacobian is needed, returns
/// the residual and optionally the (symmetric) Jacobian.
pub type Residual<'a, T> = dyn FnMut(&[T], bool) -> Result<(Vec<T>, Option<CsrMatrix<T>>)> + 'a;

/// Solves `r(x) = 0` from `x0`.
///
/// Jacobians are factorized with LDLᵀ without pivoting using `ordering`, so
/// they must be symmetric with nonzero leading pivots in that order.
pub fn newton_solve<T: Real>(
    residual: &mut Residual<'_, T>,
    x0: Vec<T>,
    cfg: &NewtonConfig,
    ordering: &Ordering,
) -> Result<(Vec<T>, NewtonReport)> {
    cfg.validate()?;
    let mut x = x0;
    let (mut r, mut jac) = residual(&x, true)?;
    let mut rnorm = norm2(&r).as_f64();
    let r0 = rnorm;
    let mut factor: Option<LdlFactor<T>> = None;
    let converged = |rn: f64| rn <= cfg.atol || rn <= cfg.rtol * r0;
    for it in 0..cfg.max_iter {
        if converged(rnorm) {
            return Ok((
                x,
                NewtonReport {
                    iterations: it,
                    initial_residual: r0,
                    residual: rnorm,
                },
            ));
        }
        let j = jac.take().expect("Jacobian requested");
        let step = timed(Phase::LinearSolve, || -> Result<Vec<T>> {
            match factor.as_mut() {
                Some(f) => f.refactor(&j)?,
                None => factor = Some(LdlFactor::new(&j, ordering)?),
            }
            Ok(factor.as_ref().unwrap().solve(&r))
        })
        .map_err(|e| Error::NonConvergence {
            iterations: it,
            residual: rnorm,
            reason: format!("singular Jacobian ({e})"),
        })?;
        let mut t = T::one();
        let mut accepted = false;
        for _ in 0..=cfg.max_backtracks {
            let trial: Vec<T> = x.iter().zip(&step).map(|(&xi, &si)| xi - t * si).collect();
            if let Ok((rt, _)) = residual(&trial, false) {
                let n = norm2(&rt).as_f64();
                if n.is_finite() && n < rnorm {
                    x = trial;
                    accepted = true;
                    break;
                }
            }
            t *= T::lit(cfg.backtrack);
        }
        if !accepted {
            return Err(Error::NonConvergence {
                iterations: it + 1,
                residual: rnorm,
                reason: "line search found no decrease".into(),
            });
        }
        let (rn, jn) = residual(&x, true)?;
        r = rn;
        jac = jn;
        rnorm = norm2(&r).as_f64();
    }
    if converged(rnorm) {
        return Ok((
            x,
            NewtonReport {
                iterations: cfg.max_iter,
                initial_residual: r0,
                residual: rnorm,
            },
        ));
    }
    Err(Error::NonConvergence {
        iterations: cfg.max_iter,
        residual: rnorm,
        reason: "iteration limit reached".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(f: impl Fn(f64) -> (f64, f64)) -> impl FnMut(&[f64], bool) -> Result<(Vec<f64>, Option<CsrMatrix<f64>>)> {
        move |x: &[f64], jac: bool| {
            let (r, d) = f(x[0]);
            Ok((vec![r], jac.then(|| CsrMatrix::from_triplets(1, 1, vec![(0, 0, d)]))))
        }
    }

    #[test]
    fn cube_root_of_eight() {
        let mut r = scalar(|x| (x * x * x - 8.0, 3.0 * x * x));
        let (x, rep) = newton_solve(&mut r, vec![3.0], &NewtonConfig::default(), &Ordering::Natural).unwrap();
        // hand oracle: x1 = 3 - 19/27, x2 = ...
        let mut y: f64 = 3.0;
        for _ in 0..rep.iterations {
            y -= (y * y * y - 8.0) / (3.0 * y * y);
        }
        assert!((x[0] - 2.0).abs() < 1e-10);
        assert_eq!(x[0], y);
    }

    #[test]
    fn linear_residual_converges_in_one_step() {
        let mut r = scalar(|x| (4.0 * x - 2.0, 4.0));
        let (x, rep) = newton_solve(&mut r, vec![10.0], &NewtonConfig::default(), &Ordering::Natural).unwrap();
        assert_eq!(rep.iterations, 1);
        assert!((x[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn no_root_is_non_convergence() {
        let mut r = scalar(|x| (x * x + 1.0, 2.0 * x));
        let err = newton_solve(&mut r, vec![1.5], &NewtonConfig::default(), &Ordering::Natural).unwrap_err();
        match err {
            Error::NonConvergence { residual, .. } => assert!(residual >= 1.0),
            e => panic!("unexpected {e}"),
        }
    }
}
