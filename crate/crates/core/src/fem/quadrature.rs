//! Symmetric quadrature on the reference triangle and Gauss-Legendre on [0, 1].

/// Points in reference coordinates `(ξ, η)` of the triangle `(0,0), (1,0), (0,1)`;
/// weights sum to the reference area 1/2.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    fn from_barycentric(orbits: &[(f64, f64, f64, f64)]) -> Self {
        // (l0, l1, l2, weight over unit area); each distinct permutation once
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for &(a, b, c, w) in orbits {
            let perms = [[a, b, c], [b, c, a], [c, a, b], [a, c, b], [c, b, a], [b, a, c]];
            let mut seen: Vec<[f64; 3]> = Vec::new();
            for p in perms {
                if !seen.contains(&p) {
                    seen.push(p);
                    points.push([p[1], p[2]]);
                    weights.push(0.5 * w);
                }
            }
        }
        Self { points, weights }
    }
}

/// Dunavant rule exact for polynomials of total degree `degree` (at most 5).
pub fn dunavant(degree: usize) -> Rule {
    match degree {
        0 | 1 => Rule::from_barycentric(&[(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 1.0)]),
        2 => Rule::from_barycentric(&[(2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0, 1.0 / 3.0)]),
        3 | 4 => {
            let a1 = 0.445_948_490_915_964_9;
            let w1 = 0.223_381_589_678_011_47;
            let a2 = 0.091_576_213_509_770_74;
            let w2 = 0.109_951_743_655_321_87;
            Rule::from_barycentric(&[(1.0 - 2.0 * a1, a1, a1, w1), (1.0 - 2.0 * a2, a2, a2, w2)])
        }
        5 => {
            let s = 15f64.sqrt();
            let a1 = (6.0 - s) / 21.0;
            let a2 = (6.0 + s) / 21.0;
            Rule::from_barycentric(&[
                (1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 9.0 / 40.0),
                (1.0 - 2.0 * a1, a1, a1, (155.0 - s) / 1200.0),
                (1.0 - 2.0 * a2, a2, a2, (155.0 + s) / 1200.0),
            ])
        }
        _ => panic!("no triangle rule of degree {degree}"),
    }
}

/// Gauss-Legendre rule with `n` points mapped to [0, 1]; weights sum to 1.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w): (Vec<f64>, Vec<f64>) = match n {
        1 => (vec![0.0], vec![2.0]),
        2 => {
            let a = 1.0 / 3f64.sqrt();
            (vec![-a, a], vec![1.0, 1.0])
        }
        3 => {
            let a = (3.0f64 / 5.0).sqrt();
            (vec![-a, 0.0, a], vec![5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0])
        }
        4 => {
            let r = 2.0 * (6.0f64 / 5.0).sqrt();
            let a = ((3.0 - r) / 7.0).sqrt();
            let b = ((3.0 + r) / 7.0).sqrt();
            let wa = (18.0 + 30f64.sqrt()) / 36.0;
            let wb = (18.0 - 30f64.sqrt()) / 36.0;
            (vec![-b, -a, a, b], vec![wb, wa, wa, wb])
        }
        _ => panic!("no Gauss-Legendre rule with {n} points"),
    };
    (x.iter().map(|t| 0.5 * (t + 1.0)).collect(), w.iter().map(|v| 0.5 * v).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    // ∫_T ξ^a η^b = a! b! / (a + b + 2)!
    fn exact(a: u32, b: u32) -> f64 {
        let f = |n: u32| (1..=n).map(f64::from).product::<f64>();
        f(a) * f(b) / f(a + b + 2)
    }

    #[test]
    fn rules_integrate_monomials_up_to_their_degree() {
        for (deg, npts) in [(1, 1), (2, 3), (4, 6), (5, 7)] {
            let r = dunavant(deg);
            assert_eq!(r.len(), npts);
            for a in 0..=deg as u32 {
                for b in 0..=(deg as u32 - a) {
                    let q: f64 = r
                        .points
                        .iter()
                        .zip(&r.weights)
                        .map(|(p, w)| w * p[0].powi(a as i32) * p[1].powi(b as i32))
                        .sum();
                    assert!((q - exact(a, b)).abs() < 1e-15, "deg {deg} monomial {a},{b}");
                }
            }
        }
    }

    #[test]
    fn gauss_legendre_is_exact() {
        for n in 1..=4 {
            let (x, w) = gauss_legendre(n);
            for k in 0..2 * n as i32 {
                let q: f64 = x.iter().zip(&w).map(|(t, w)| w * t.powi(k)).sum();
                assert!((q - 1.0 / (k as f64 + 1.0)).abs() < 1e-15);
            }
        }
    }
}
