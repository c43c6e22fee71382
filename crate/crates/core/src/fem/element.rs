//! Lagrange P1 and P2 basis functions on the reference triangle and the
//! affine map to physical cells.

use super::quadrature::Rule;
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Element {
    P1,
    P2,
}

impl Element {
    pub fn n_basis(self) -> usize {
        match self {
            Element::P1 => 3,
            Element::P2 => 6,
        }
    }

    pub fn degree(self) -> usize {
        match self {
            Element::P1 => 1,
            Element::P2 => 2,
        }
    }

    /// Basis values at reference point `xi`.
    pub fn values(self, xi: [f64; 2], out: &mut [f64]) {
        let l = [1.0 - xi[0] - xi[1], xi[0], xi[1]];
        match self {
            Element::P1 => out[..3].copy_from_slice(&l),
            Element::P2 => {
                for k in 0..3 {
                    out[k] = l[k] * (2.0 * l[k] - 1.0);
                    out[3 + k] = 4.0 * l[(k + 1) % 3] * l[(k + 2) % 3];
                }
            }
        }
    }

    /// Reference gradients `∂/∂ξ, ∂/∂η` at `xi`.
    pub fn gradients(self, xi: [f64; 2], out: &mut [[f64; 2]]) {
        let l = [1.0 - xi[0] - xi[1], xi[0], xi[1]];
        const DL: [[f64; 2]; 3] = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];
        match self {
            Element::P1 => out[..3].copy_from_slice(&DL),
            Element::P2 => {
                for k in 0..3 {
                    let f = 4.0 * l[k] - 1.0;
                    out[k] = [f * DL[k][0], f * DL[k][1]];
                    let (a, b) = ((k + 1) % 3, (k + 2) % 3);
                    out[3 + k] = [
                        4.0 * (DL[a][0] * l[b] + l[a] * DL[b][0]),
                        4.0 * (DL[a][1] * l[b] + l[a] * DL[b][1]),
                    ];
                }
            }
        }
    }
}

/// Basis values and reference gradients at the points of a rule.
#[derive(Debug, Clone)]
pub struct Tabulation<T> {
    pub element: Element,
    pub points: Vec<[f64; 2]>,
    /// Reference weights (summing to 1/2).
    pub weights: Vec<T>,
    values: Vec<T>,
    grads: Vec<[T; 2]>,
}

impl<T: Real> Tabulation<T> {
    pub fn new(element: Element, rule: &Rule) -> Self {
        Self::at_points(element, &rule.points, &rule.weights)
    }

    pub fn at_points(element: Element, points: &[[f64; 2]], weights: &[f64]) -> Self {
        let n = element.n_basis();
        let mut v = [0.0; 6];
        let mut g = [[0.0; 2]; 6];
        let mut values = Vec::with_capacity(points.len() * n);
        let mut grads = Vec::with_capacity(points.len() * n);
        for &p in points {
            element.values(p, &mut v);
            element.gradients(p, &mut g);
            values.extend(v[..n].iter().map(|&x| T::lit(x)));
            grads.extend(g[..n].iter().map(|x| [T::lit(x[0]), T::lit(x[1])]));
        }
        Self {
            element,
            points: points.to_vec(),
            weights: weights.iter().map(|&w| T::lit(w)).collect(),
            values,
            grads,
        }
    }

    pub fn n_points(&self) -> usize {
        self.points.len()
    }

    pub fn n_basis(&self) -> usize {
        self.element.n_basis()
    }

    #[inline]
    pub fn values(&self, q: usize) -> &[T] {
        let n = self.n_basis();
        &self.values[q * n..(q + 1) * n]
    }

    #[inline]
    pub fn ref_grads(&self, q: usize) -> &[[T; 2]] {
        let n = self.n_basis();
        &self.grads[q * n..(q + 1) * n]
    }

    /// Physical basis gradients at point `q` for a cell map.
    #[inline]
    pub fn grads(&self, q: usize, map: &AffineMap<T>, out: &mut [[T; 2]]) {
        for (o, g) in out.iter_mut().zip(self.ref_grads(q)) {
            *o = map.grad(*g);
        }
    }
}

/// `x = x0 + J ξ` for a triangle with vertices `x0, x1, x2`.
#[derive(Debug, Clone, Copy)]
pub struct AffineMap<T> {
    pub origin: [T; 2],
    /// `jac[r][c] = ∂x_r/∂ξ_c`.
    pub jac: [[T; 2]; 2],
    pub det: T,
    inv_t: [[T; 2]; 2],
}

impl<T: Real> AffineMap<T> {
    pub fn new(coords: [[T; 2]; 3]) -> Self {
        let [x0, x1, x2] = coords;
        let jac = [[x1[0] - x0[0], x2[0] - x0[0]], [x1[1] - x0[1], x2[1] - x0[1]]];
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        let inv_t = [[jac[1][1] / det, -jac[1][0] / det], [-jac[0][1] / det, jac[0][0] / det]];
        Self {
            origin: x0,
            jac,
            det,
            inv_t,
        }
    }

    /// Maps a reference gradient to a physical gradient (`J^{-T} g`).
    #[inline]
    pub fn grad(&self, g: [T; 2]) -> [T; 2] {
        [
            self.inv_t[0][0] * g[0] + self.inv_t[0][1] * g[1],
            self.inv_t[1][0] * g[0] + self.inv_t[1][1] * g[1],
        ]
    }

    #[inline]
    pub fn map(&self, xi: [f64; 2]) -> [T; 2] {
        let (a, b) = (T::lit(xi[0]), T::lit(xi[1]));
        [
            self.origin[0] + self.jac[0][0] * a + self.jac[0][1] * b,
            self.origin[1] + self.jac[1][0] * a + self.jac[1][1] * b,
        ]
    }
}

/// Gradient `G[c][d] = ∂u_c/∂x_d` of a 2-vector field from node-major local
/// coefficients and physical basis gradients.
#[inline]
pub fn vector_gradient<T: Real>(local: &[[T; 2]], grads: &[[T; 2]]) -> [[T; 2]; 2] {
    let mut g = [[T::zero(); 2]; 2];
    for (u, dphi) in local.iter().zip(grads) {
        for c in 0..2 {
            g[c][0] += u[c] * dphi[0];
            g[c][1] += u[c] * dphi[1];
        }
    }
    g
}

/// Principal lattice of degree `n` on the reference triangle, `(n+1)(n+2)/2` points.
pub fn lattice_points(n: usize) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity((n + 1) * (n + 2) / 2);
    for j in 0..=n {
        for i in 0..=(n - j) {
            out.push([i as f64 / n as f64, j as f64 / n as f64]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p2_basis_is_nodal() {
        let nodes = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.5, 0.5], [0.0, 0.5], [0.5, 0.0]];
        let mut v = [0.0; 6];
        for (j, &p) in nodes.iter().enumerate() {
            Element::P2.values(p, &mut v);
            for (i, &x) in v.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((x - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let p = [0.21, 0.37];
        let h = 1e-6;
        for el in [Element::P1, Element::P2] {
            let n = el.n_basis();
            let mut g = [[0.0; 2]; 6];
            el.gradients(p, &mut g);
            let (mut a, mut b) = ([0.0; 6], [0.0; 6]);
            for d in 0..2 {
                let mut pp = p;
                let mut pm = p;
                pp[d] += h;
                pm[d] -= h;
                el.values(pp, &mut a);
                el.values(pm, &mut b);
                for i in 0..n {
                    assert!(((a[i] - b[i]) / (2.0 * h) - g[i][d]).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn affine_gradient_of_linear_function() {
        let map = AffineMap::new([[1.0, 0.5], [2.0, 1.0], [0.5, 2.0]]);
        // f(x) = 3x - 2y evaluated at the vertices, interpolated by P1
        let f = |p: [f64; 2]| 3.0 * p[0] - 2.0 * p[1];
        let vals = [f([1.0, 0.5]), f([2.0, 1.0]), f([0.5, 2.0])];
        let mut g = [[0.0; 2]; 3];
        Element::P1.gradients([0.2, 0.2], &mut g);
        let mut grad = [0.0; 2];
        for i in 0..3 {
            let pg = map.grad(g[i]);
            grad[0] += vals[i] * pg[0];
            grad[1] += vals[i] * pg[1];
        }
        assert!((grad[0] - 3.0).abs() < 1e-14 && (grad[1] + 2.0).abs() < 1e-14);
    }

    #[test]
    fn lattice_of_degree_six_has_28_points() {
        assert_eq!(lattice_points(6).len(), 28);
    }
}
