//! Shape quality of deformed meshes and detection of lost bijectivity.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::element::{lattice_points, vector_gradient, AffineMap, Element};
use crate::field::{p2_cell_nodes, Field, Space};
use crate::mesh::TriMesh;
use crate::real::Real;

pub const HISTOGRAM_BINS: usize = 40;

/// Degree of the lattice on which `det(I + ∇u)` is sampled per cell.
pub const DET_SAMPLE_DEGREE: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    /// Scaled Jacobian per cell; negative for inverted or flagged cells.
    pub per_cell: Vec<f64>,
    pub min: f64,
    /// Counts over 40 uniform bins on [-1, 1].
    pub histogram: Vec<usize>,
    /// Smallest `det(I + ∇u)` over all sample points.
    pub min_det: f64,
    /// Smallest sampled `det(I + ∇u)` per cell.
    pub per_cell_min_det: Vec<f64>,
}

impl QualityReport {
    fn from_parts(per_cell: Vec<f64>, per_cell_min_det: Vec<f64>) -> Self {
        let min = per_cell.iter().copied().fold(f64::INFINITY, f64::min);
        let min_det = per_cell_min_det.iter().copied().fold(f64::INFINITY, f64::min);
        Self {
            histogram: histogram(&per_cell),
            per_cell,
            min,
            min_det,
            per_cell_min_det,
        }
    }

    /// Cells with a negative quality entry.
    pub fn negative_cells(&self) -> Vec<usize> {
        (0..self.per_cell.len()).filter(|&c| self.per_cell[c] < 0.0).collect()
    }

    /// `cell,quality,min_det` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("cell,quality,min_det\n");
        for (c, (q, d)) in self.per_cell.iter().zip(&self.per_cell_min_det).enumerate() {
            s.push_str(&format!("{c},{q:e},{d:e}\n"));
        }
        s
    }
}

pub fn histogram(values: &[f64]) -> Vec<usize> {
    let mut h = vec![0; HISTOGRAM_BINS];
    for &q in values {
        let t = ((q.clamp(-1.0, 1.0) + 1.0) / 2.0 * HISTOGRAM_BINS as f64).floor() as usize;
        h[t.min(HISTOGRAM_BINS - 1)] += 1;
    }
    h
}

/// Scaled Jacobian of a triangle: `(2/√3) min_k cross(e_k, e_{k+1}) / (|e_k| |e_{k+1}|)`.
pub fn triangle_quality(p: [[f64; 2]; 3]) -> f64 {
    let e: Vec<[f64; 2]> = (0..3)
        .map(|k| [p[(k + 1) % 3][0] - p[k][0], p[(k + 1) % 3][1] - p[k][1]])
        .collect();
    let len: Vec<f64> = e.iter().map(|v| (v[0] * v[0] + v[1] * v[1]).sqrt()).collect();
    if len.iter().any(|&l| l == 0.0) {
        return 0.0;
    }
    let mut q = f64::INFINITY;
    for k in 0..3 {
        let (a, b) = (e[k], e[(k + 1) % 3]);
        q = q.min((a[0] * b[1] - a[1] * b[0]) / (len[k] * len[(k + 1) % 3]));
    }
    (q * 2.0 / 3f64.sqrt()).clamp(-1.0, 1.0)
}

fn check_displacement<T: Real>(mesh: &TriMesh<T>, u: &Field<T>) -> Result<()> {
    if u.value_dim != 2 || u.space == Space::DG0 {
        return Err(Error::invalid("displacement must be a P1 or P2 vector field"));
    }
    u.check(mesh)
}

fn deformed_coords<T: Real>(mesh: &TriMesh<T>, u: &Field<T>, cell: usize) -> [[f64; 2]; 3] {
    let c = mesh.cells()[cell];
    c.map(|v| {
        let x = mesh.vertices()[v];
        let d = u.vertex_vec(v);
        [(x[0] + d[0]).as_f64(), (x[1] + d[1]).as_f64()]
    })
}

/// Smallest `det(I + ∇u)` over the degree-6 lattice points of every cell.
pub fn cell_min_dets<T: Real>(mesh: &TriMesh<T>, u: &Field<T>) -> Result<Vec<f64>> {
    check_displacement(mesh, u)?;
    let element = if u.space == Space::P2 { Element::P2 } else { Element::P1 };
    let nb = element.n_basis();
    let pts = lattice_points(DET_SAMPLE_DEGREE);
    let ref_grads: Vec<[[f64; 2]; 6]> = pts
        .iter()
        .map(|&p| {
            let mut g = [[0.0; 2]; 6];
            element.gradients(p, &mut g);
            g
        })
        .collect();
    Ok((0..mesh.n_cells())
        .into_par_iter()
        .map(|c| {
            let map = AffineMap::new(mesh.cell_coords(c));
            let nodes: Vec<usize> = match element {
                Element::P1 => mesh.cells()[c].to_vec(),
                Element::P2 => p2_cell_nodes(mesh, c).to_vec(),
            };
            let loc: Vec<[T; 2]> = nodes.iter().map(|&n| [u.coefficients[2 * n], u.coefficients[2 * n + 1]]).collect();
            let mut worst = f64::INFINITY;
            let mut g = [[T::zero(); 2]; 6];
            for rg in &ref_grads {
                for i in 0..nb {
                    g[i] = map.grad([T::lit(rg[i][0]), T::lit(rg[i][1])]);
                }
                let gu = vector_gradient(&loc, &g[..nb]);
                let det = (T::one() + gu[0][0]) * (T::one() + gu[1][1]) - gu[0][1] * gu[1][0];
                worst = worst.min(det.as_f64());
            }
            worst
        })
        .collect())
}

/// Minimum of `det(I + ∇u)` over all cells and sample points.
pub fn min_det_gradient<T: Real>(mesh: &TriMesh<T>, displacement: &Field<T>) -> Result<f64> {
    Ok(cell_min_dets(mesh, displacement)?.into_iter().fold(f64::INFINITY, f64::min))
}

/// Scaled Jacobian of every deformed cell (vertex positions moved by the
/// vertex values of `displacement`).
pub fn scaled_jacobian<T: Real>(mesh: &TriMesh<T>, displacement: &Field<T>) -> Result<QualityReport> {
    let dets = cell_min_dets(mesh, displacement)?;
    let q: Vec<f64> = (0..mesh.n_cells())
        .into_par_iter()
        .map(|c| triangle_quality(deformed_coords(mesh, displacement, c)))
        .collect();
    Ok(QualityReport::from_parts(q, dets))
}

/// Marks cells with any negative sampled determinant by making their quality negative.
pub fn sign_degenerate<T: Real>(report: &QualityReport, mesh: &TriMesh<T>, displacement: &Field<T>) -> Result<QualityReport> {
    let dets = cell_min_dets(mesh, displacement)?;
    let q = report
        .per_cell
        .iter()
        .zip(&dets)
        .map(|(&q, &d)| if d < 0.0 { -q.abs() } else { q })
        .collect();
    Ok(QualityReport::from_parts(q, dets))
}

/// Scaled Jacobian with degenerate cells sign-flipped.
pub fn quality_report<T: Real>(mesh: &TriMesh<T>, displacement: &Field<T>) -> Result<QualityReport> {
    let r = scaled_jacobian(mesh, displacement)?;
    sign_degenerate(&r, mesh, displacement)
}

/// Moves vertices by the vertex values of `displacement`.
pub fn deform<T: Real>(mesh: &TriMesh<T>, displacement: &Field<T>) -> Result<TriMesh<T>> {
    check_displacement(mesh, displacement)?;
    let vertices = mesh
        .vertices()
        .iter()
        .enumerate()
        .map(|(v, x)| {
            let d = displacement.vertex_vec(v);
            [x[0] + d[0], x[1] + d[1]]
        })
        .collect();
    mesh.with_vertices(vertices)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::rectangle_mesh;

    fn single(p: [[f64; 2]; 3]) -> TriMesh<f64> {
        TriMesh::new(
            p.to_vec(),
            vec![[0, 1, 2]],
            vec![([0, 1], "b".into()), ([1, 2], "b".into()), ([2, 0], "b".into())],
        )
        .unwrap()
    }

    #[test]
    fn equilateral_and_right_triangles() {
        let h = 3f64.sqrt() / 2.0;
        let m = single([[0.0, 0.0], [1.0, 0.0], [0.5, h]]);
        let r = scaled_jacobian(&m, &Field::zeros(&m, Space::P1, 2)).unwrap();
        assert!((r.per_cell[0] - 1.0).abs() < 1e-15);
        let m = single([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
        let r = scaled_jacobian(&m, &Field::zeros(&m, Space::P2, 2)).unwrap();
        assert!((r.per_cell[0] - 2.0 / 6f64.sqrt()).abs() < 1e-15);
        assert_eq!(r.histogram.iter().sum::<usize>(), 1);
        assert_eq!(r.min_det, 1.0);
    }

    #[test]
    fn collinear_cell_has_zero_quality() {
        assert_eq!(triangle_quality([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]), 0.0);
        assert_eq!(triangle_quality([[0.0, 0.0], [0.0, 0.0], [2.0, 1.0]]), 0.0);
    }

    #[test]
    fn reflection_flags_every_cell() {
        let m = rectangle_mesh::<f64>([0.0, 0.0], [1.0, 1.0], 3, 3);
        let u = Field::interpolate(&m, Space::P2, 2, |p| vec![-2.0 * p[0], 0.0]);
        let r = quality_report(&m, &u).unwrap();
        assert_eq!(r.negative_cells().len(), m.n_cells());
        assert!((r.min_det + 1.0).abs() < 1e-14);
        assert!(deform(&m, &u).is_err());
    }

    #[test]
    fn histogram_bins() {
        let h = histogram(&[-1.0, -0.96, 0.0, 0.999, 1.0]);
        assert_eq!(h[0], 2);
        assert_eq!(h[20], 1);
        assert_eq!(h[39], 2);
    }
}
