//! Conforming triangle meshes with tagged boundaries.

mod generate;
mod io;

pub use generate::{
    benchmark_mesh, channel_flap_mesh, flap_solid_mesh, rectangle_mesh, BenchmarkGeometry,
    MeshSizing, SolidMesh,
};
pub use io::{read_mesh, write_mesh, MeshFile};
pub(crate) use io::{read_json, write_json};

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::real::Real;

/// A boundary edge and the index of the tag it carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryEdge {
    pub edge: [usize; 2],
    pub tag: usize,
}

#[derive(Debug, Clone)]
struct Topology {
    /// Unique edges sorted by `(min vertex, max vertex)`.
    edges: Vec<[usize; 2]>,
    /// Local edge `k` of a cell is the one opposite local vertex `k`.
    cell_edges: Vec<[usize; 3]>,
    edge_index: HashMap<[usize; 2], usize>,
    vertex_cell_offsets: Vec<usize>,
    vertex_cells: Vec<usize>,
    boundary_vertex: Vec<bool>,
    boundary_edge_ids: Vec<usize>,
}

/// Conforming triangle mesh.
///
/// Cells are counter-clockwise with strictly positive area, every boundary
/// edge belongs to exactly one cell and carries exactly one tag.
#[derive(Debug, Clone)]
pub struct TriMesh<T> {
    vertices: Vec<[T; 2]>,
    cells: Vec<[usize; 3]>,
    boundary: Vec<BoundaryEdge>,
    tag_names: Vec<String>,
    topo: Topology,
}

pub(crate) fn sorted_edge(a: usize, b: usize) -> [usize; 2] {
    if a < b {
        [a, b]
    } else {
        [b, a]
    }
}

/// Twice the signed area of the triangle `(a, b, c)`.
#[inline]
pub fn signed_area2<T: Real>(a: [T; 2], b: [T; 2], c: [T; 2]) -> T {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

impl<T: Real> TriMesh<T> {
    /// Builds and validates a mesh. Boundary edges are given with tag names;
    /// tag indices follow the order of first appearance.
    pub fn new(
        vertices: Vec<[T; 2]>,
        cells: Vec<[usize; 3]>,
        boundary: Vec<([usize; 2], String)>,
    ) -> Result<Self> {
        let mut tag_names: Vec<String> = Vec::new();
        let mut tagged = Vec::with_capacity(boundary.len());
        for (edge, name) in boundary {
            let tag = match tag_names.iter().position(|t| *t == name) {
                Some(t) => t,
                None => {
                    tag_names.push(name);
                    tag_names.len() - 1
                }
            };
            tagged.push(BoundaryEdge { edge, tag });
        }
        Self::from_parts(vertices, cells, tagged, tag_names)
    }

    pub(crate) fn from_parts(
        vertices: Vec<[T; 2]>,
        cells: Vec<[usize; 3]>,
        boundary: Vec<BoundaryEdge>,
        tag_names: Vec<String>,
    ) -> Result<Self> {
        let n_v = vertices.len();
        for (i, v) in vertices.iter().enumerate() {
            if !v[0].is_finite() || !v[1].is_finite() {
                return Err(Error::InvalidMesh(format!("vertex {i} is not finite")));
            }
        }
        for (c, cell) in cells.iter().enumerate() {
            if cell.iter().any(|&v| v >= n_v) {
                return Err(Error::InvalidMesh(format!("cell {c} references a missing vertex")));
            }
            let area = signed_area2(vertices[cell[0]], vertices[cell[1]], vertices[cell[2]]);
            if !(area > T::zero()) {
                return Err(Error::DegenerateCell {
                    cell: c,
                    area: area.as_f64() / 2.0,
                });
            }
        }
        for b in &boundary {
            if b.tag >= tag_names.len() {
                return Err(Error::InvalidMesh(format!("boundary tag index {} undefined", b.tag)));
            }
        }
        let topo = build_topology(n_v, &cells, &boundary)?;
        Ok(Self {
            vertices,
            cells,
            boundary,
            tag_names,
            topo,
        })
    }

    pub fn vertices(&self) -> &[[T; 2]] {
        &self.vertices
    }

    pub fn cells(&self) -> &[[usize; 3]] {
        &self.cells
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary
    }

    pub fn tag_names(&self) -> &[String] {
        &self.tag_names
    }

    pub fn tag_id(&self, name: &str) -> Option<usize> {
        self.tag_names.iter().position(|t| t == name)
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn n_edges(&self) -> usize {
        self.topo.edges.len()
    }

    /// Unique edges, sorted by `(min vertex id, max vertex id)`.
    pub fn edges(&self) -> &[[usize; 2]] {
        &self.topo.edges
    }

    /// Edge ids of a cell; local edge `k` is opposite local vertex `k`.
    pub fn cell_edges(&self, cell: usize) -> [usize; 3] {
        self.topo.cell_edges[cell]
    }

    pub fn edge_id(&self, a: usize, b: usize) -> Option<usize> {
        self.topo.edge_index.get(&sorted_edge(a, b)).copied()
    }

    /// Cells touching vertex `v`.
    pub fn vertex_cells(&self, v: usize) -> &[usize] {
        &self.topo.vertex_cells[self.topo.vertex_cell_offsets[v]..self.topo.vertex_cell_offsets[v + 1]]
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.topo.boundary_vertex[v]
    }

    /// Edge ids of the boundary edges, in the order of [`Self::boundary_edges`].
    pub fn boundary_edge_ids(&self) -> &[usize] {
        &self.topo.boundary_edge_ids
    }

    pub fn cell_coords(&self, cell: usize) -> [[T; 2]; 3] {
        let c = self.cells[cell];
        [self.vertices[c[0]], self.vertices[c[1]], self.vertices[c[2]]]
    }

    pub fn cell_area(&self, cell: usize) -> T {
        let [a, b, c] = self.cell_coords(cell);
        signed_area2(a, b, c) / T::lit(2.0)
    }

    pub fn total_area(&self) -> T {
        (0..self.n_cells()).map(|c| self.cell_area(c)).sum()
    }

    /// Vertices lying on at least one boundary edge with the given tag, sorted.
    pub fn tagged_vertices(&self, tag: &str) -> Result<Vec<usize>> {
        let id = self.tag_id(tag).ok_or_else(|| Error::UnknownTag(tag.to_string()))?;
        let mut out: Vec<usize> = self
            .boundary
            .iter()
            .filter(|b| b.tag == id)
            .flat_map(|b| b.edge)
            .collect();
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }

    /// Smallest edge length over the mesh.
    pub fn min_edge_length(&self) -> T {
        self.topo
            .edges
            .iter()
            .map(|&[a, b]| edge_length(self.vertices[a], self.vertices[b]))
            .fold(T::infinity(), T::min)
    }

    pub fn max_edge_length(&self) -> T {
        self.topo
            .edges
            .iter()
            .map(|&[a, b]| edge_length(self.vertices[a], self.vertices[b]))
            .fold(T::zero(), T::max)
    }

    /// Same connectivity and tags, new vertex positions. Fails with the index
    /// of the first cell whose signed area is not positive.
    pub fn with_vertices(&self, vertices: Vec<[T; 2]>) -> Result<Self> {
        if vertices.len() != self.vertices.len() {
            return Err(Error::invalid("vertex count mismatch"));
        }
        for (c, cell) in self.cells.iter().enumerate() {
            let area = signed_area2(vertices[cell[0]], vertices[cell[1]], vertices[cell[2]]);
            if !(area > T::zero()) {
                return Err(Error::DegenerateCell {
                    cell: c,
                    area: area.as_f64() / 2.0,
                });
            }
        }
        Ok(Self {
            vertices,
            cells: self.cells.clone(),
            boundary: self.boundary.clone(),
            tag_names: self.tag_names.clone(),
            topo: self.topo.clone(),
        })
    }

    /// Converts the coordinates to another scalar type.
    pub fn cast<U: Real>(&self) -> TriMesh<U> {
        TriMesh {
            vertices: self
                .vertices
                .iter()
                .map(|v| [U::lit(v[0].as_f64()), U::lit(v[1].as_f64())])
                .collect(),
            cells: self.cells.clone(),
            boundary: self.boundary.clone(),
            tag_names: self.tag_names.clone(),
            topo: self.topo.clone(),
        }
    }
}

fn edge_length<T: Real>(a: [T; 2], b: [T; 2]) -> T {
    ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt()
}

fn build_topology(n_v: usize, cells: &[[usize; 3]], boundary: &[BoundaryEdge]) -> Result<Topology> {
    // BTreeMap gives the (min, max) ordering directly.
    let mut edge_cells: BTreeMap<[usize; 2], u32> = BTreeMap::new();
    for cell in cells {
        for k in 0..3 {
            let e = sorted_edge(cell[(k + 1) % 3], cell[(k + 2) % 3]);
            *edge_cells.entry(e).or_insert(0) += 1;
        }
    }
    let mut edges = Vec::with_capacity(edge_cells.len());
    let mut edge_index = HashMap::with_capacity(edge_cells.len());
    for (i, (e, &count)) in edge_cells.iter().enumerate() {
        if count > 2 {
            return Err(Error::InvalidMesh(format!("edge {e:?} shared by {count} cells")));
        }
        edges.push(*e);
        edge_index.insert(*e, i);
    }
    let cell_edges = cells
        .iter()
        .map(|cell| {
            let mut out = [0; 3];
            for (k, slot) in out.iter_mut().enumerate() {
                *slot = edge_index[&sorted_edge(cell[(k + 1) % 3], cell[(k + 2) % 3])];
            }
            out
        })
        .collect();

    let mut listed = vec![false; edges.len()];
    let mut boundary_edge_ids = Vec::with_capacity(boundary.len());
    let mut boundary_vertex = vec![false; n_v];
    for b in boundary {
        let e = sorted_edge(b.edge[0], b.edge[1]);
        let id = *edge_index
            .get(&e)
            .ok_or_else(|| Error::InvalidMesh(format!("boundary edge {e:?} is not a mesh edge")))?;
        if edge_cells[&e] != 1 {
            return Err(Error::InvalidMesh(format!("boundary edge {e:?} is shared by two cells")));
        }
        if listed[id] {
            return Err(Error::InvalidMesh(format!("boundary edge {e:?} listed twice")));
        }
        listed[id] = true;
        boundary_edge_ids.push(id);
        boundary_vertex[e[0]] = true;
        boundary_vertex[e[1]] = true;
    }
    for (e, &count) in &edge_cells {
        if count == 1 && !listed[edge_index[e]] {
            return Err(Error::InvalidMesh(format!("boundary edge {e:?} carries no tag")));
        }
    }

    let mut counts = vec![0usize; n_v + 1];
    for cell in cells {
        for &v in cell {
            counts[v + 1] += 1;
        }
    }
    for i in 0..n_v {
        counts[i + 1] += counts[i];
    }
    let mut fill = counts.clone();
    let mut vertex_cells = vec![0; counts[n_v]];
    for (c, cell) in cells.iter().enumerate() {
        for &v in cell {
            vertex_cells[fill[v]] = c;
            fill[v] += 1;
        }
    }

    Ok(Topology {
        edges,
        cell_edges,
        edge_index,
        vertex_cell_offsets: counts,
        vertex_cells,
        boundary_vertex,
        boundary_edge_ids,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_triangles() -> (Vec<[f64; 2]>, Vec<[usize; 3]>) {
        (
            vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            vec![[0, 1, 2], [0, 2, 3]],
        )
    }

    fn square_boundary() -> Vec<([usize; 2], String)> {
        vec![
            ([0, 1], "fixed".into()),
            ([1, 2], "moving".into()),
            ([2, 3], "fixed".into()),
            ([3, 0], "fixed".into()),
        ]
    }

    #[test]
    fn edges_are_sorted_and_opposite_local_vertices() {
        let (v, c) = two_triangles();
        let mesh = TriMesh::new(v, c, square_boundary()).unwrap();
        assert_eq!(mesh.edges(), &[[0, 1], [0, 2], [0, 3], [1, 2], [2, 3]]);
        let ce = mesh.cell_edges(0);
        assert_eq!(mesh.edges()[ce[0]], [1, 2]);
        assert_eq!(mesh.edges()[ce[1]], [0, 2]);
        assert_eq!(mesh.edges()[ce[2]], [0, 1]);
        assert_eq!(mesh.vertex_cells(0), &[0, 1]);
        assert_eq!(mesh.tagged_vertices("moving").unwrap(), vec![1, 2]);
    }

    #[test]
    fn clockwise_cell_is_rejected() {
        let (v, _) = two_triangles();
        let err = TriMesh::new(v, vec![[0, 2, 1], [0, 2, 3]], square_boundary()).unwrap_err();
        assert!(matches!(err, Error::DegenerateCell { cell: 0, .. }));
    }

    #[test]
    fn untagged_boundary_edge_is_rejected() {
        let (v, c) = two_triangles();
        let mut b = square_boundary();
        b.pop();
        assert!(matches!(TriMesh::new(v, c, b), Err(Error::InvalidMesh(_))));
    }

    #[test]
    fn interior_edge_cannot_be_tagged() {
        let (v, c) = two_triangles();
        let mut b = square_boundary();
        b.push(([0, 2], "fixed".into()));
        assert!(matches!(TriMesh::new(v, c, b), Err(Error::InvalidMesh(_))));
    }

    #[test]
    fn duplicate_tag_is_rejected() {
        let (v, c) = two_triangles();
        let mut b = square_boundary();
        b.push(([1, 0], "moving".into()));
        assert!(matches!(TriMesh::new(v, c, b), Err(Error::InvalidMesh(_))));
    }
}
