//! Clément-type gradient recovery: per vertex, the area-weighted mean of the
//! cell-average gradients over the vertex patch.

use super::element::{AffineMap, Element};
use super::sparse::CsrMatrix;
use crate::field::{p2_cell_nodes, Field, Space};
use crate::mesh::TriMesh;
use crate::real::Real;

/// Pre-assembled recovery matrix mapping 2-vector P1 or P2 coefficients to
/// the 4 gradient components `(∂₁u₁, ∂₂u₁, ∂₁u₂, ∂₂u₂)` at each vertex.
#[derive(Debug, Clone)]
pub struct ClementOperator<T> {
    space: Space,
    matrix: CsrMatrix<T>,
}

impl<T: Real> ClementOperator<T> {
    pub fn new(mesh: &TriMesh<T>, space: Space) -> Self {
        let element = match space {
            Space::P1 => Element::P1,
            Space::P2 => Element::P2,
            Space::DG0 => panic!("gradient recovery needs a continuous field"),
        };
        let nb = element.n_basis();
        let n_nodes = space.n_nodes(mesh);
        let nv = mesh.n_vertices();
        let patch_area: Vec<T> = (0..nv)
            .map(|v| mesh.vertex_cells(v).iter().map(|&c| mesh.cell_area(c)).sum())
            .collect();
        let centroid = [1.0 / 3.0, 1.0 / 3.0];
        let mut ref_g = [[0.0; 2]; 6];
        element.gradients(centroid, &mut ref_g);
        let mut trip = Vec::new();
        for c in 0..mesh.n_cells() {
            let map = AffineMap::new(mesh.cell_coords(c));
            let area = mesh.cell_area(c);
            let nodes: Vec<usize> = match element {
                Element::P1 => mesh.cells()[c].to_vec(),
                Element::P2 => p2_cell_nodes(mesh, c).to_vec(),
            };
            // gradients of P1/P2 are at most linear, so the centroid value is the mean
            let grads: Vec<[T; 2]> = ref_g[..nb].iter().map(|g| map.grad([T::lit(g[0]), T::lit(g[1])])).collect();
            for &v in &mesh.cells()[c] {
                let w = area / patch_area[v];
                for (j, &node) in nodes.iter().enumerate() {
                    for comp in 0..2 {
                        for d in 0..2 {
                            trip.push((4 * v + 2 * comp + d, 2 * node + comp, w * grads[j][d]));
                        }
                    }
                }
            }
        }
        Self {
            space,
            matrix: CsrMatrix::from_triplets(4 * nv, 2 * n_nodes, trip),
        }
    }

    pub fn matrix(&self) -> &CsrMatrix<T> {
        &self.matrix
    }

    pub fn apply(&self, field: &Field<T>) -> Field<T> {
        assert_eq!(field.space, self.space, "field space differs from the operator's");
        assert_eq!(field.value_dim, 2);
        Field {
            space: Space::P1,
            value_dim: 4,
            coefficients: self.matrix.matvec(&field.coefficients),
        }
    }
}

/// One-off recovery; build a [`ClementOperator`] to reuse the matrix.
pub fn clement_gradient<T: Real>(mesh: &TriMesh<T>, field: &Field<T>) -> Field<T> {
    ClementOperator::new(mesh, field.space).apply(field)
}
