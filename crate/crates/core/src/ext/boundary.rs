//! Boundary displacement data `g` keyed by boundary node.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{node_coords, p2_boundary_nodes, Field, Space};
use crate::mesh::TriMesh;
use crate::real::Real;

/// Values of `g` at boundary nodes of a P1 or P2 space, keyed by node index
/// (vertex id, or `n_vertices + edge id` for P2 midpoints).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct BoundaryDisplacement<T> {
    pub space: Space,
    pub values: BTreeMap<usize, [T; 2]>,
}

impl<T: Real> BoundaryDisplacement<T> {
    /// Zero on every P2 boundary node.
    pub fn zeros(mesh: &TriMesh<T>) -> Self {
        Self::from_fn(mesh, |_| [T::zero(); 2])
    }

    /// Samples `f` at the P2 boundary nodes.
    pub fn from_fn(mesh: &TriMesh<T>, f: impl Fn([T; 2]) -> [T; 2]) -> Self {
        let coords = node_coords(mesh, Space::P2);
        Self {
            space: Space::P2,
            values: p2_boundary_nodes(mesh).into_iter().map(|n| (n, f(coords[n]))).collect(),
        }
    }

    /// Trace of a P1 or P2 vector field.
    pub fn from_field(mesh: &TriMesh<T>, u: &Field<T>) -> Self {
        assert_eq!(u.value_dim, 2);
        let nodes: Vec<usize> = match u.space {
            Space::P2 => p2_boundary_nodes(mesh),
            Space::P1 => (0..mesh.n_vertices()).filter(|&v| mesh.is_boundary_vertex(v)).collect(),
            Space::DG0 => panic!("DG0 field has no trace"),
        };
        Self {
            space: u.space,
            values: nodes.into_iter().map(|n| (n, [u.coefficients[2 * n], u.coefficients[2 * n + 1]])).collect(),
        }
    }

    /// Every boundary node present with a finite value.
    pub fn validate(&self, mesh: &TriMesh<T>) -> Result<()> {
        let nodes: Vec<usize> = match self.space {
            Space::P2 => p2_boundary_nodes(mesh),
            Space::P1 => (0..mesh.n_vertices()).filter(|&v| mesh.is_boundary_vertex(v)).collect(),
            Space::DG0 => return Err(Error::invalid("boundary data must live in P1 or P2")),
        };
        for n in nodes {
            match self.values.get(&n) {
                None => return Err(Error::MissingBoundaryValue(n)),
                Some(v) if !(v[0].is_finite() && v[1].is_finite()) => return Err(Error::NonFinite(n)),
                _ => {}
            }
        }
        let limit = self.space.n_nodes(mesh);
        if let Some((&n, _)) = self.values.iter().find(|(&n, _)| n >= limit) {
            return Err(Error::invalid(format!("boundary node {n} out of range")));
        }
        Ok(())
    }

    /// P2 version; P1 data is interpolated linearly into edge midpoints.
    pub fn to_p2(&self, mesh: &TriMesh<T>) -> Result<Self> {
        self.validate(mesh)?;
        if self.space == Space::P2 {
            return Ok(self.clone());
        }
        let nv = mesh.n_vertices();
        let half = T::lit(0.5);
        let mut values = self.values.clone();
        for &e in mesh.boundary_edge_ids() {
            let [a, b] = mesh.edges()[e];
            let (ga, gb) = (self.values[&a], self.values[&b]);
            values.insert(nv + e, [half * (ga[0] + gb[0]), half * (ga[1] + gb[1])]);
        }
        Ok(Self {
            space: Space::P2,
            values,
        })
    }

    /// Fixed-node mask and full-length per-component value arrays on P2 nodes.
    pub fn dirichlet_data(&self, mesh: &TriMesh<T>) -> Result<(Vec<bool>, [Vec<T>; 2])> {
        let g = self.to_p2(mesh)?;
        let n = Space::P2.n_nodes(mesh);
        let mut fixed = vec![false; n];
        let mut vals = [vec![T::zero(); n], vec![T::zero(); n]];
        for (&i, v) in &g.values {
            fixed[i] = true;
            vals[0][i] = v[0];
            vals[1][i] = v[1];
        }
        Ok((fixed, vals))
    }

    /// Same nodes, `self + a * other`.
    pub fn axpy(&self, a: T, other: &Self) -> Self {
        assert_eq!(self.space, other.space);
        let values = self
            .values
            .iter()
            .map(|(&n, v)| {
                let w = other.values.get(&n).copied().unwrap_or([T::zero(); 2]);
                (n, [v[0] + a * w[0], v[1] + a * w[1]])
            })
            .collect();
        Self {
            space: self.space,
            values,
        }
    }

    pub fn scaled(&self, a: T) -> Self {
        Self {
            space: self.space,
            values: self.values.iter().map(|(&n, v)| (n, [a * v[0], a * v[1]])).collect(),
        }
    }

    pub fn max_abs(&self) -> T {
        self.values
            .values()
            .fold(T::zero(), |m, v| m.max(v[0].abs()).max(v[1].abs()))
    }

    /// Largest Euclidean displacement over nodes on boundary edges tagged `tag`.
    pub fn max_norm_on(&self, mesh: &TriMesh<T>, tag: &str) -> Result<T> {
        let id = mesh.tag_id(tag).ok_or_else(|| Error::UnknownTag(tag.into()))?;
        let nv = mesh.n_vertices();
        let mut m = T::zero();
        for (b, &e) in mesh.boundary_edges().iter().zip(mesh.boundary_edge_ids()) {
            if b.tag != id {
                continue;
            }
            let mut nodes = vec![b.edge[0], b.edge[1]];
            if self.space == Space::P2 {
                nodes.push(nv + e);
            }
            for n in nodes {
                if let Some(v) = self.values.get(&n) {
                    m = m.max((v[0] * v[0] + v[1] * v[1]).sqrt());
                }
            }
        }
        Ok(m)
    }

    /// Value at the boundary node closest to `p`.
    pub fn value_near(&self, mesh: &TriMesh<T>, p: [T; 2]) -> [T; 2] {
        let coords = node_coords(mesh, self.space);
        let mut best = (T::infinity(), [T::zero(); 2]);
        for (&n, v) in &self.values {
            let d = (coords[n][0] - p[0]).powi(2) + (coords[n][1] - p[1]).powi(2);
            if d < best.0 {
                best = (d, *v);
            }
        }
        best.1
    }

    pub fn cast<U: Real>(&self) -> BoundaryDisplacement<U> {
        BoundaryDisplacement {
            space: self.space,
            values: self
                .values
                .iter()
                .map(|(&n, v)| (n, [U::lit(v[0].as_f64()), U::lit(v[1].as_f64())]))
                .collect(),
        }
    }
}

pub fn read_boundary<T: Real>(path: impl AsRef<Path>) -> Result<BoundaryDisplacement<T>> {
    crate::mesh::read_json(path.as_ref())
}

pub fn write_boundary<T: Real>(path: impl AsRef<Path>, g: &BoundaryDisplacement<T>) -> Result<()> {
    crate::mesh::write_json(path.as_ref(), g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::rectangle_mesh;

    #[test]
    fn missing_node_is_reported() {
        let m = rectangle_mesh::<f64>([0.0, 0.0], [1.0, 1.0], 2, 2);
        let mut g = BoundaryDisplacement::zeros(&m);
        g.validate(&m).unwrap();
        let first = *g.values.keys().next().unwrap();
        g.values.remove(&first);
        assert!(matches!(g.validate(&m), Err(Error::MissingBoundaryValue(n)) if n == first));
    }

    #[test]
    fn p1_data_interpolates_into_midpoints() {
        let m = rectangle_mesh::<f64>([0.0, 0.0], [1.0, 1.0], 2, 2);
        let f = |p: [f64; 2]| vec![p[0] + 2.0 * p[1], -p[0]];
        let u1 = Field::interpolate(&m, Space::P1, 2, f);
        let u2 = Field::interpolate(&m, Space::P2, 2, f);
        let g1 = BoundaryDisplacement::from_field(&m, &u1).to_p2(&m).unwrap();
        let g2 = BoundaryDisplacement::from_field(&m, &u2);
        for (n, v) in &g2.values {
            let w = g1.values[n];
            assert!((v[0] - w[0]).abs() < 1e-15 && (v[1] - w[1]).abs() < 1e-15);
        }
    }

    #[test]
    fn json_round_trip() {
        let m = rectangle_mesh::<f64>([0.0, 0.0], [1.0, 1.0], 2, 1);
        let g = BoundaryDisplacement::from_fn(&m, |p| [p[0] * 0.1, (p[1] * 7.0).sin() / 3.0]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.json");
        write_boundary(&path, &g).unwrap();
        assert_eq!(read_boundary::<f64>(&path).unwrap(), g);
        assert!(std::fs::read_to_string(&path).unwrap().contains("\"space\":\"P2\""));
    }
}
