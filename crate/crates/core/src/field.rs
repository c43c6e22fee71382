//! Finite element coefficient vectors on a [`TriMesh`].
//!
//! A [`Field`] does not borrow its mesh; the mesh is passed to every
//! operation that needs geometry. Coefficients are node-major: component `c`
//! of node `i` lives at `i * value_dim + c`. P2 nodes are the vertices
//! followed by the edge midpoints in [`TriMesh::edges`] order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::TriMesh;
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Space {
    P1,
    P2,
    DG0,
}

impl Space {
    /// Number of scalar nodes of this space on `mesh`.
    pub fn n_nodes<T>(self, mesh: &TriMesh<T>) -> usize
    where
        T: Real,
    {
        match self {
            Space::P1 => mesh.n_vertices(),
            Space::P2 => mesh.n_vertices() + mesh.n_edges(),
            Space::DG0 => mesh.n_cells(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Field<T> {
    pub space: Space,
    pub value_dim: usize,
    pub coefficients: Vec<T>,
}

impl<T: Real> Field<T> {
    pub fn zeros(mesh: &TriMesh<T>, space: Space, value_dim: usize) -> Self {
        Self {
            space,
            value_dim,
            coefficients: vec![T::zero(); space.n_nodes(mesh) * value_dim],
        }
    }

    /// Wraps coefficients after checking length and finiteness.
    pub fn new(mesh: &TriMesh<T>, space: Space, value_dim: usize, coefficients: Vec<T>) -> Result<Self> {
        let f = Self {
            space,
            value_dim,
            coefficients,
        };
        f.check(mesh)?;
        Ok(f)
    }

    pub fn check(&self, mesh: &TriMesh<T>) -> Result<()> {
        if self.value_dim == 0 {
            return Err(Error::invalid("value_dim must be positive"));
        }
        let expected = self.space.n_nodes(mesh) * self.value_dim;
        if self.coefficients.len() != expected {
            return Err(Error::FieldLength {
                expected,
                actual: self.coefficients.len(),
            });
        }
        if let Some(i) = self.coefficients.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(())
    }

    /// Nodal values of a function of position, at the nodes of `space`.
    pub fn interpolate(
        mesh: &TriMesh<T>,
        space: Space,
        value_dim: usize,
        f: impl Fn([T; 2]) -> Vec<T>,
    ) -> Self {
        let coords = node_coords(mesh, space);
        let mut coefficients = Vec::with_capacity(coords.len() * value_dim);
        for p in coords {
            let v = f(p);
            assert_eq!(v.len(), value_dim, "interpolated function has wrong arity");
            coefficients.extend(v);
        }
        Self {
            space,
            value_dim,
            coefficients,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.coefficients.len() / self.value_dim
    }

    #[inline]
    pub fn node(&self, i: usize) -> &[T] {
        &self.coefficients[i * self.value_dim..(i + 1) * self.value_dim]
    }

    /// Value at vertex `v` of a 2-vector P1 or P2 field.
    #[inline]
    pub fn vertex_vec(&self, v: usize) -> [T; 2] {
        debug_assert!(self.value_dim == 2 && self.space != Space::DG0);
        [self.coefficients[2 * v], self.coefficients[2 * v + 1]]
    }

    /// P1 restriction: the vertex values of a P1 or P2 field.
    pub fn to_p1(&self, mesh: &TriMesh<T>) -> Self {
        assert!(self.space != Space::DG0, "DG0 has no vertex values");
        Self {
            space: Space::P1,
            value_dim: self.value_dim,
            coefficients: self.coefficients[..mesh.n_vertices() * self.value_dim].to_vec(),
        }
    }

    /// Embeds a P1 field into P2 by linear interpolation into edge midpoints.
    /// P2 fields are returned unchanged.
    pub fn to_p2(&self, mesh: &TriMesh<T>) -> Self {
        match self.space {
            Space::P2 => self.clone(),
            Space::P1 => {
                let d = self.value_dim;
                let half = T::lit(0.5);
                let mut coefficients = self.coefficients.clone();
                coefficients.reserve(mesh.n_edges() * d);
                for &[a, b] in mesh.edges() {
                    for c in 0..d {
                        coefficients.push(half * (self.coefficients[a * d + c] + self.coefficients[b * d + c]));
                    }
                }
                Self {
                    space: Space::P2,
                    value_dim: d,
                    coefficients,
                }
            }
            Space::DG0 => panic!("cannot embed a DG0 field into P2"),
        }
    }

    pub fn scaled(&self, a: T) -> Self {
        let mut out = self.clone();
        out.coefficients.iter_mut().for_each(|x| *x *= a);
        out
    }

    /// `self + a * other`; both fields must share space and arity.
    pub fn axpy(&self, a: T, other: &Self) -> Self {
        assert_eq!(self.space, other.space);
        assert_eq!(self.value_dim, other.value_dim);
        let mut out = self.clone();
        for (x, &y) in out.coefficients.iter_mut().zip(&other.coefficients) {
            *x += a * y;
        }
        out
    }

    /// Maximum absolute difference to another field of the same layout.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        assert_eq!(self.coefficients.len(), other.coefficients.len());
        self.coefficients
            .iter()
            .zip(&other.coefficients)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }

    pub fn cast<U: Real>(&self) -> Field<U> {
        Field {
            space: self.space,
            value_dim: self.value_dim,
            coefficients: self.coefficients.iter().map(|x| U::lit(x.as_f64())).collect(),
        }
    }
}

/// Coordinates of the nodes of `space`: vertices, then edge midpoints for P2,
/// cell centroids for DG0.
pub fn node_coords<T: Real>(mesh: &TriMesh<T>, space: Space) -> Vec<[T; 2]> {
    let vs = mesh.vertices();
    match space {
        Space::P1 => vs.to_vec(),
        Space::P2 => {
            let half = T::lit(0.5);
            let mut out = vs.to_vec();
            out.extend(
                mesh.edges()
                    .iter()
                    .map(|&[a, b]| [half * (vs[a][0] + vs[b][0]), half * (vs[a][1] + vs[b][1])]),
            );
            out
        }
        Space::DG0 => (0..mesh.n_cells())
            .map(|c| {
                let [a, b, d] = mesh.cell_coords(c);
                let third = T::lit(1.0 / 3.0);
                [third * (a[0] + b[0] + d[0]), third * (a[1] + b[1] + d[1])]
            })
            .collect(),
    }
}

/// Local-to-global P2 node map of a cell: three vertices, then the midpoints
/// of the edges opposite vertex 0, 1, 2.
#[inline]
pub fn p2_cell_nodes<T: Real>(mesh: &TriMesh<T>, cell: usize) -> [usize; 6] {
    let c = mesh.cells()[cell];
    let e = mesh.cell_edges(cell);
    let nv = mesh.n_vertices();
    [c[0], c[1], c[2], nv + e[0], nv + e[1], nv + e[2]]
}

/// P2 nodes on the boundary: vertices first, then edge midpoints, each sorted.
pub fn p2_boundary_nodes<T: Real>(mesh: &TriMesh<T>) -> Vec<usize> {
    let nv = mesh.n_vertices();
    let mut out: Vec<usize> = (0..nv).filter(|&v| mesh.is_boundary_vertex(v)).collect();
    let mut edges: Vec<usize> = mesh.boundary_edge_ids().iter().map(|&e| nv + e).collect();
    edges.sort_unstable();
    out.extend(edges);
    out
}

pub fn read_field<T: Real>(path: impl AsRef<Path>) -> Result<Field<T>> {
    crate::mesh::read_json(path.as_ref())
}

pub fn write_field<T: Real>(path: impl AsRef<Path>, field: &Field<T>) -> Result<()> {
    crate::mesh::write_json(path.as_ref(), field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::rectangle_mesh;

    #[test]
    fn lengths_per_space() {
        let m = rectangle_mesh::<f64>([0.0, 0.0], [1.0, 1.0], 2, 1);
        assert_eq!(Field::zeros(&m, Space::P1, 2).coefficients.len(), 12);
        assert_eq!(Field::zeros(&m, Space::P2, 2).coefficients.len(), 2 * (6 + m.n_edges()));
        assert_eq!(Field::zeros(&m, Space::DG0, 1).coefficients.len(), 4);
        let bad = Field::new(&m, Space::P1, 2, vec![0.0; 11]);
        assert!(matches!(bad, Err(Error::FieldLength { expected: 12, actual: 11 })));
        let mut c = vec![0.0; 12];
        c[5] = f64::NAN;
        assert!(matches!(Field::new(&m, Space::P1, 2, c), Err(Error::NonFinite(5))));
    }

    #[test]
    fn p2_embedding_reproduces_affine_functions() {
        let m = rectangle_mesh::<f64>([0.0, 0.0], [2.0, 1.0], 3, 2);
        let f = |p: [f64; 2]| vec![1.0 + 2.0 * p[0] - p[1], 0.5 * p[1]];
        let p1 = Field::interpolate(&m, Space::P1, 2, f);
        let p2 = Field::interpolate(&m, Space::P2, 2, f);
        assert!(p1.to_p2(&m).max_abs_diff(&p2) < 1e-15);
        assert_eq!(p2.to_p1(&m), p1);
    }

    #[test]
    fn cell_nodes_follow_opposite_edge_convention() {
        let m = rectangle_mesh::<f64>([0.0, 0.0], [1.0, 1.0], 1, 1);
        let coords = node_coords(&m, Space::P2);
        for c in 0..m.n_cells() {
            let nodes = p2_cell_nodes(&m, c);
            for k in 0..3 {
                let a = coords[nodes[(k + 1) % 3]];
                let b = coords[nodes[(k + 2) % 3]];
                let mid = coords[nodes[3 + k]];
                assert!((mid[0] - 0.5 * (a[0] + b[0])).abs() < 1e-15);
                assert!((mid[1] - 0.5 * (a[1] + b[1])).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn json_round_trip_is_exact() {
        let m = rectangle_mesh::<f64>([0.0, 0.0], [1.0, 1.0], 2, 2);
        let f = Field::interpolate(&m, Space::P2, 2, |p| vec![(p[0] * 3.1).sin(), 1.0 / 3.0 + p[1]]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.json");
        write_field(&path, &f).unwrap();
        let g: Field<f64> = read_field(&path).unwrap();
        assert_eq!(f, g);
    }
}
