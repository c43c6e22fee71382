//! NN-corrected harmonic extension `u = u_harm + ℓ 𝒩_θ(ξ, u_harm, ∇u_harm)`.
//!
//! The correction vanishes on the boundary because `ℓ` does, so boundary
//! data is reproduced for any network.

pub mod mask;
pub mod mlp;
pub mod train;

use ndarray::Array2;

pub use mask::{compute_mask, hand_tuned_rhs, MaskConfig, MaskRhs};
pub use mlp::{column_stats, default_widths, read_mlp, widths_for, write_mlp, Mlp, DEPTH_SWEEP, N_FEATURES, N_OUTPUTS};
pub use train::{seed_sweep, train_nncorr, NnCorrData, NnCorrTrainConfig, NnCorrTrainResult, SweepReport};

use crate::error::{Error, Result};
use crate::ext::{BoundaryDisplacement, ExtensionOperator, HarmonicSolver};
use crate::fem::{ClementOperator, LinearSolver};
use crate::field::{Field, Space};
use crate::mesh::TriMesh;
use crate::profile::{timed, Phase};
use crate::real::Real;

/// Per-vertex network inputs `(ξ₁, ξ₂, u₁, u₂, ∂₁u₁, ∂₂u₁, ∂₁u₂, ∂₂u₂)`,
/// one vertex per row.
pub fn vertex_features<T: Real>(mesh: &TriMesh<T>, u_harm: &Field<T>, grad: &Field<T>) -> Result<Array2<T>> {
    u_harm.check(mesh)?;
    grad.check(mesh)?;
    if u_harm.value_dim != 2 || u_harm.space == Space::DG0 || grad.space != Space::P1 || grad.value_dim != 4 {
        return Err(Error::invalid("expected a vector displacement and a P1 gradient with 4 components"));
    }
    let x = mesh.vertices();
    Ok(Array2::from_shape_fn((mesh.n_vertices(), N_FEATURES), |(v, j)| match j {
        0 | 1 => x[v][j],
        2 | 3 => u_harm.coefficients[2 * v + j - 2],
        _ => grad.coefficients[4 * v + j - 4],
    }))
}

/// `ℓ(v) 𝒩(features(v))` as a P1 vector field.
pub fn correction<T: Real>(mesh: &TriMesh<T>, mlp: &Mlp<T>, mask: &Field<T>, features: &Array2<T>) -> Result<Field<T>> {
    check_mask(mesh, mask)?;
    if mlp.n_inputs() != N_FEATURES || mlp.n_outputs() != N_OUTPUTS {
        return Err(Error::invalid("network must map 8 features to 2 outputs"));
    }
    let out = timed(Phase::NnCorrection, || mlp.forward_batch(features.view()));
    let mut c = Vec::with_capacity(2 * mesh.n_vertices());
    for (v, row) in out.rows().into_iter().enumerate() {
        let l = mask.coefficients[v];
        c.push(l * row[0]);
        c.push(l * row[1]);
    }
    Field::new(mesh, Space::P1, 2, c)
}

fn check_mask<T: Real>(mesh: &TriMesh<T>, mask: &Field<T>) -> Result<()> {
    mask.check(mesh)?;
    if mask.space != Space::P1 || mask.value_dim != 1 {
        return Err(Error::invalid("mask must be a scalar P1 field"));
    }
    Ok(())
}

/// Corrected extension from a precomputed harmonic extension.
pub fn correct_harmonic<T: Real>(
    mesh: &TriMesh<T>,
    u_harm: &Field<T>,
    clement: &ClementOperator<T>,
    mlp: &Mlp<T>,
    mask: &Field<T>,
) -> Result<Field<T>> {
    let grad = timed(Phase::NnCorrection, || clement.apply(u_harm));
    let feats = vertex_features(mesh, u_harm, &grad)?;
    let c = correction(mesh, mlp, mask, &feats)?;
    let c2 = timed(Phase::NnCorrection, || c.to_p2(mesh));
    Ok(u_harm.to_p2(mesh).axpy(T::one(), &c2))
}

/// Harmonic extension plus the masked network correction, embedded into P2
/// by midpoint interpolation.
pub fn nncorr_extend<T: Real>(mesh: &TriMesh<T>, g: &BoundaryDisplacement<T>, mlp: &Mlp<T>, mask: &Field<T>) -> Result<Field<T>> {
    NnCorrOperator::new(mesh, mlp.clone(), mask.clone())?.extend(mesh, g)
}

/// Reusable corrected operator holding the factorized Laplacian and the
/// recovery matrix of one mesh.
pub struct NnCorrOperator<T> {
    pub mlp: Mlp<T>,
    pub mask: Field<T>,
    harmonic: HarmonicSolver<T>,
    clement: ClementOperator<T>,
    n_vertices: usize,
}

impl<T: Real> NnCorrOperator<T> {
    pub fn new(mesh: &TriMesh<T>, mlp: Mlp<T>, mask: Field<T>) -> Result<Self> {
        mlp.validate()?;
        check_mask(mesh, &mask)?;
        Ok(Self {
            mlp,
            mask,
            harmonic: HarmonicSolver::new(mesh, LinearSolver::Direct)?,
            clement: ClementOperator::new(mesh, Space::P2),
            n_vertices: mesh.n_vertices(),
        })
    }
}

impl<T: Real> ExtensionOperator<T> for NnCorrOperator<T> {
    fn extend(&self, mesh: &TriMesh<T>, g: &BoundaryDisplacement<T>) -> Result<Field<T>> {
        if mesh.n_vertices() != self.n_vertices {
            return Err(Error::invalid("operator was built for a different mesh"));
        }
        let u_harm = self.harmonic.solve(mesh, g)?;
        correct_harmonic(mesh, &u_harm, &self.clement, &self.mlp, &self.mask)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ext::harmonic_extend;
    use crate::fem::clement_gradient;
    use crate::mesh::rectangle_mesh;
    use crate::rng::seeded;

    fn setup() -> (TriMesh<f64>, BoundaryDisplacement<f64>, Field<f64>) {
        let m = rectangle_mesh([0.0, 0.0], [1.0, 1.0], 6, 5);
        let g = BoundaryDisplacement::from_fn(&m, |x: [f64; 2]| [0.1 * x[1] * x[1], 0.2 * (3.0 * x[0]).sin() * x[1]]);
        let mask = compute_mask(&m, &MaskConfig::default()).unwrap();
        (m, g, mask)
    }

    #[test]
    fn zero_network_is_harmonic() {
        let (m, g, mask) = setup();
        let mlp = Mlp::zeros(&default_widths()).unwrap();
        let u = nncorr_extend(&m, &g, &mlp, &mask).unwrap();
        assert_eq!(u, harmonic_extend(&m, &g).unwrap());
    }

    #[test]
    fn boundary_is_preserved_for_random_networks() {
        let (m, g, mask) = setup();
        let mut rng = seeded(8);
        for _ in 0..5 {
            let mlp = Mlp::random(&[8, 32, 32, 2], &mut rng).unwrap();
            let u = nncorr_extend(&m, &g, &mlp, &mask).unwrap();
            let h = harmonic_extend(&m, &g).unwrap();
            assert!(u.max_abs_diff(&h) > 1e-3);
            for (n, v) in g.to_p2(&m).unwrap().values {
                assert!((u.node(n)[0] - v[0]).abs() <= 1e-12 && (u.node(n)[1] - v[1]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn matches_a_step_by_step_pipeline() {
        let (m, g, mask) = setup();
        let mlp = Mlp::random(&[8, 5, 2], &mut seeded(9)).unwrap();
        let u = nncorr_extend(&m, &g, &mlp, &mask).unwrap();

        let h = harmonic_extend(&m, &g).unwrap();
        let grad = clement_gradient(&m, &h);
        let nv = m.n_vertices();
        let mut corr = vec![0.0; 2 * nv];
        for v in 0..nv {
            let x = m.vertices()[v];
            let gv = grad.node(v);
            let feats = [x[0], x[1], h.node(v)[0], h.node(v)[1], gv[0], gv[1], gv[2], gv[3]];
            // manual two-layer evaluation
            let hid: Vec<f64> = (0..5)
                .map(|r| (mlp.biases[0][r] + (0..8).map(|c| mlp.weights[0][[r, c]] * feats[c]).sum::<f64>()).max(0.0))
                .collect();
            for o in 0..2 {
                let y = mlp.biases[1][o] + (0..5).map(|r| mlp.weights[1][[o, r]] * hid[r]).sum::<f64>();
                corr[2 * v + o] = mask.coefficients[v] * y;
            }
        }
        for (k, &[a, b]) in m.edges().iter().enumerate() {
            for o in 0..2 {
                let want = h.coefficients[2 * (nv + k) + o] + 0.5 * (corr[2 * a + o] + corr[2 * b + o]);
                assert!((u.coefficients[2 * (nv + k) + o] - want).abs() < 1e-13);
            }
        }
        for v in 0..nv {
            for o in 0..2 {
                assert!((u.coefficients[2 * v + o] - h.coefficients[2 * v + o] - corr[2 * v + o]).abs() < 1e-13);
            }
        }
    }
}
