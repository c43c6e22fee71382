//! Exact representation of convex coercive piecewise affine functions as
//! nonnegative combinations of ReLU ridge functions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

#[inline]
pub fn relu<T: Real>(x: T) -> T {
    x.max(T::zero())
}

/// `c + Σ_i ReLU(w_i·x + b_i)`; the nonnegative outer coefficients are folded
/// into `(w_i, b_i)` by positive homogeneity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ShallowReluNet<T> {
    pub terms: Vec<(Vec<T>, T)>,
    pub offset: T,
}

impl<T: Real> ShallowReluNet<T> {
    pub fn eval(&self, x: &[T]) -> T {
        self.offset
            + self
                .terms
                .iter()
                .map(|(w, b)| relu(w.iter().zip(x).map(|(&a, &b)| a * b).sum::<T>() + *b))
                .sum::<T>()
    }
}

/// Builds a shallow net equal to the convex piecewise affine `f` with the given
/// breakpoints `t_1 < … < t_{n-1}`, piece slopes `m_0 < … < m_{n-1}` and
/// value `f(t_1)`. Needs `m_0 ≤ 0 ≤ m_{n-1}` (coercive or flat at infinity).
pub fn represent_convex_pwl<T: Real>(breakpoints: &[T], slopes: &[T], value_at_first: T) -> Result<ShallowReluNet<T>> {
    let n = slopes.len();
    if breakpoints.is_empty() || n != breakpoints.len() + 1 {
        return Err(Error::invalid("need at least one breakpoint and one more slope than breakpoints"));
    }
    if breakpoints.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::invalid("breakpoints must be strictly increasing"));
    }
    if slopes.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::invalid("slopes must be strictly increasing (convexity)"));
    }
    // pivot piece p with m_{p-1} ≤ 0 ≤ m_p; breakpoint t_p separates them
    let p = (1..n)
        .find(|&p| slopes[p - 1] <= T::zero() && slopes[p] >= T::zero())
        .ok_or_else(|| Error::invalid("slopes must change sign (coercivity): need m_0 <= 0 <= m_last"))?;
    let t = |i: usize| breakpoints[i - 1];
    let mut f_pivot = value_at_first;
    for i in 1..p {
        f_pivot += slopes[i] * (t(i + 1) - t(i));
    }
    let mut terms = Vec::new();
    let mut push = |coef: T, dir: T, at: T| {
        if coef != T::zero() {
            // coef · ReLU(dir (x - at)) = ReLU(coef·dir·x - coef·dir·at)
            terms.push((vec![coef * dir], -coef * dir * at));
        }
    };
    for i in 1..p {
        push(slopes[i] - slopes[i - 1], -T::one(), t(i));
    }
    push(-slopes[p - 1], -T::one(), t(p));
    push(slopes[p], T::one(), t(p));
    for i in p + 1..n {
        push(slopes[i] - slopes[i - 1], T::one(), t(i));
    }
    Ok(ShallowReluNet {
        terms,
        offset: f_pivot,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pwl(x: f64, bps: &[f64], slopes: &[f64], v0: f64) -> f64 {
        // direct evaluation from t_1
        let mut v = v0;
        if x <= bps[0] {
            return v0 + slopes[0] * (x - bps[0]);
        }
        for i in 0..bps.len() {
            let right = if i + 1 < bps.len() { bps[i + 1] } else { f64::INFINITY };
            if x <= right {
                return v + slopes[i + 1] * (x - bps[i]);
            }
            v += slopes[i + 1] * (right - bps[i]);
        }
        unreachable!()
    }

    #[test]
    fn absolute_value() {
        let net = represent_convex_pwl(&[0.0], &[-1.0, 1.0], 0.0).unwrap();
        assert_eq!(net.terms, vec![(vec![-1.0], 0.0), (vec![1.0], 0.0)]);
        assert_eq!(net.offset, 0.0);
    }

    #[test]
    fn positive_part_is_one_term() {
        let net = represent_convex_pwl(&[0.0], &[0.0, 1.0], 0.0).unwrap();
        assert_eq!(net.terms.len(), 1);
        assert_eq!(net.eval(&[2.5]), 2.5);
        assert_eq!(net.eval(&[-2.5]), 0.0);
    }

    #[test]
    fn three_pieces_exact_on_grid() {
        let (b, m) = ([0.0, 1.0], [-1.0, 0.5, 2.0]);
        let net = represent_convex_pwl(&b, &m, 0.3).unwrap();
        for i in 0..1000 {
            let x = -3.0 + 6.0 * i as f64 / 999.0;
            assert!((net.eval(&[x]) - pwl(x, &b, &m, 0.3)).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_slopes_are_rejected() {
        assert!(represent_convex_pwl(&[0.0], &[1.0, 1.0], 0.0).is_err());
        assert!(represent_convex_pwl(&[0.0, 1.0], &[1.0, -1.0, 2.0], 0.0).is_err());
        assert!(represent_convex_pwl(&[0.0], &[0.5, 1.0], 0.0).is_err());
    }
}
