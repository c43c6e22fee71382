//! Structured rectangles and the channel-with-cylinder-and-flap benchmark domain.

use std::collections::HashMap;

use spade::handles::FixedVertexHandle;
use spade::{
    AngleLimit, ConstrainedDelaunayTriangulation, Point2, RefinementParameters,
    Triangulation,
};

use super::{sorted_edge, TriMesh};
use crate::real::Real;

/// Structured `nx` by `ny` triangulation of the rectangle `[lo, hi]`.
///
/// Each quad is split along its lower-left to upper-right diagonal. Tags are
/// `bottom`, `right`, `top` and `left`.
pub fn rectangle_mesh<T: Real>(lo: [f64; 2], hi: [f64; 2], nx: usize, ny: usize) -> TriMesh<T> {
    assert!(nx > 0 && ny > 0);
    let idx = |i: usize, j: usize| j * (nx + 1) + i;
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            let x = lo[0] + (hi[0] - lo[0]) * i as f64 / nx as f64;
            let y = lo[1] + (hi[1] - lo[1]) * j as f64 / ny as f64;
            vertices.push([T::lit(x), T::lit(y)]);
        }
    }
    let mut cells = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            cells.push([a, b, c]);
            cells.push([a, c, d]);
        }
    }
    let mut boundary = Vec::new();
    for i in 0..nx {
        boundary.push(([idx(i, 0), idx(i + 1, 0)], "bottom".to_string()));
    }
    for j in 0..ny {
        boundary.push(([idx(nx, j), idx(nx, j + 1)], "right".to_string()));
    }
    for i in 0..nx {
        boundary.push(([idx(i + 1, ny), idx(i, ny)], "top".to_string()));
    }
    for j in 0..ny {
        boundary.push(([idx(0, j + 1), idx(0, j)], "left".to_string()));
    }
    TriMesh::new(vertices, cells, boundary).expect("structured rectangle mesh is valid")
}

/// Geometry of the channel flow benchmark with an elastic flap behind a cylinder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchmarkGeometry {
    pub length: f64,
    pub height: f64,
    pub center: [f64; 2],
    pub radius: f64,
    pub flap_end: f64,
    pub flap_thickness: f64,
}

impl Default for BenchmarkGeometry {
    fn default() -> Self {
        Self {
            length: 2.5,
            height: 0.41,
            center: [0.2, 0.2],
            radius: 0.05,
            flap_end: 0.6,
            flap_thickness: 0.02,
        }
    }
}

impl BenchmarkGeometry {
    /// x coordinate where the flap leaves the cylinder.
    pub fn flap_start(&self) -> f64 {
        let half = self.flap_thickness / 2.0;
        self.center[0] + (self.radius * self.radius - half * half).sqrt()
    }

    pub fn flap_bottom(&self) -> f64 {
        self.center[1] - self.flap_thickness / 2.0
    }

    pub fn flap_top(&self) -> f64 {
        self.center[1] + self.flap_thickness / 2.0
    }

    /// Center of the flap tip, the usual displacement probe.
    pub fn tip_probe(&self) -> [f64; 2] {
        [self.flap_end, self.center[1]]
    }

    fn flap_x(&self, i: usize, n: usize) -> f64 {
        let x0 = self.flap_start();
        if i == n {
            self.flap_end
        } else {
            x0 + (self.flap_end - x0) * i as f64 / n as f64
        }
    }

    fn tip_y(&self, j: usize, n: usize) -> f64 {
        if j == n {
            self.flap_top()
        } else {
            self.flap_bottom() + self.flap_thickness * j as f64 / n as f64
        }
    }

    /// Distance from `p` to the cylinder-and-flap obstacle (0 inside it).
    fn obstacle_distance(&self, p: [f64; 2]) -> f64 {
        let dc = ((p[0] - self.center[0]).powi(2) + (p[1] - self.center[1]).powi(2)).sqrt() - self.radius;
        let dx = (self.center[0] - p[0]).max(p[0] - self.flap_end).max(0.0);
        let dy = (self.flap_bottom() - p[1]).max(p[1] - self.flap_top()).max(0.0);
        dc.min((dx * dx + dy * dy).sqrt()).max(0.0)
    }
}

/// Target element sizes for the benchmark mesh generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshSizing {
    /// Number of segments along the top and bottom of the flap.
    pub flap_segments: usize,
    /// Number of segments across the flap tip.
    pub tip_segments: usize,
    /// Segment length on the cylinder arc.
    pub h_cylinder: f64,
    /// Segment length on the outer walls next to the obstacle.
    pub h_wall_near: f64,
    /// Segment length on the outer walls far downstream.
    pub h_wall_far: f64,
    /// Upper bound on triangle area during refinement.
    pub max_area: f64,
    /// Minimum angle requested from the refinement, in degrees.
    pub min_angle_deg: f64,
}

impl MeshSizing {
    /// Sizing for refinement level 0, 1 or 2 (each level halves all lengths).
    pub fn refinement(level: u32) -> Self {
        Self::level0().scaled(0.5f64.powi(level as i32))
    }

    fn level0() -> Self {
        Self {
            flap_segments: 76,
            tip_segments: 5,
            h_cylinder: 0.004,
            h_wall_near: 0.0116,
            h_wall_far: 0.026,
            max_area: 2.35e-4,
            min_angle_deg: 28.0,
        }
    }

    /// A coarse variant of level 0 with well under 1500 vertices, meant for
    /// quick training runs.
    pub fn coarse() -> Self {
        Self::level0().scaled(2.5)
    }

    /// Multiplies all lengths by `factor` (areas by its square).
    pub fn scaled(&self, factor: f64) -> Self {
        let seg = |n: usize| ((n as f64 / factor).round() as usize).max(1);
        Self {
            flap_segments: seg(self.flap_segments),
            tip_segments: seg(self.tip_segments),
            h_cylinder: self.h_cylinder * factor,
            h_wall_near: self.h_wall_near * factor,
            h_wall_far: self.h_wall_far * factor,
            max_area: self.max_area * factor * factor,
            min_angle_deg: self.min_angle_deg,
        }
    }
}

/// Fluid mesh of the benchmark at refinement level 0, 1 or 2.
///
/// Vertex counts are roughly 3.9k, 15k and 60k. Tags: `moving` on the flap
/// interface, `fixed` on the outer walls and the cylinder.
pub fn benchmark_mesh<T: Real>(refinement: u32) -> TriMesh<T> {
    assert!(refinement <= 2, "refinement level must be 0, 1 or 2");
    channel_flap_mesh(&BenchmarkGeometry::default(), &MeshSizing::refinement(refinement))
}

struct BoundaryBuilder {
    points: Vec<[f64; 2]>,
    lookup: HashMap<(i64, i64), usize>,
    segments: Vec<([usize; 2], &'static str)>,
}

impl BoundaryBuilder {
    fn new() -> Self {
        Self {
            points: Vec::new(),
            lookup: HashMap::new(),
            segments: Vec::new(),
        }
    }

    fn point(&mut self, p: [f64; 2]) -> usize {
        let key = ((p[0] * 1e9).round() as i64, (p[1] * 1e9).round() as i64);
        if let Some(&i) = self.lookup.get(&key) {
            return i;
        }
        self.points.push(p);
        self.lookup.insert(key, self.points.len() - 1);
        self.points.len() - 1
    }

    fn polyline(&mut self, pts: &[[f64; 2]], tag: &'static str) {
        for w in pts.windows(2) {
            let a = self.point(w[0]);
            let b = self.point(w[1]);
            self.segments.push(([a, b], tag));
        }
    }
}

/// Points along the segment `a -> b` with spacing following `size`.
fn graded_segment(a: [f64; 2], b: [f64; 2], size: impl Fn([f64; 2]) -> f64) -> Vec<[f64; 2]> {
    let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
    let mut ts = vec![0.0];
    let mut t = 0.0;
    loop {
        let p = [a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t];
        t += size(p) / len;
        if t >= 1.0 {
            break;
        }
        ts.push(t);
    }
    // drop a trailing sliver interval
    if ts.len() > 1 {
        let last = ts[ts.len() - 1];
        if 1.0 - last < 0.5 * (last - ts[ts.len() - 2]) {
            ts.pop();
        }
    }
    let mut out: Vec<[f64; 2]> = ts
        .iter()
        .map(|&t| [a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t])
        .collect();
    out.push(b);
    out
}

/// Constrained-Delaunay mesh of the benchmark fluid domain for a given sizing.
pub fn channel_flap_mesh<T: Real>(geo: &BenchmarkGeometry, sizing: &MeshSizing) -> TriMesh<T> {
    let mut bb = BoundaryBuilder::new();
    let wall_size = |p: [f64; 2]| {
        let d = geo.obstacle_distance(p);
        (sizing.h_wall_near + 0.05 * d).min(sizing.h_wall_far)
    };

    // outer channel, counter-clockwise
    let (l, h) = (geo.length, geo.height);
    bb.polyline(&graded_segment([0.0, 0.0], [l, 0.0], wall_size), "fixed");
    bb.polyline(&graded_segment([l, 0.0], [l, h], wall_size), "fixed");
    bb.polyline(&graded_segment([l, h], [0.0, h], wall_size), "fixed");
    bb.polyline(&graded_segment([0.0, h], [0.0, 0.0], wall_size), "fixed");

    // cylinder arc from the upper attachment point around to the lower one
    let half = geo.flap_thickness / 2.0;
    let theta0 = (half / geo.radius).asin();
    let arc = 2.0 * std::f64::consts::PI - 2.0 * theta0;
    let n_arc = ((arc * geo.radius / sizing.h_cylinder).ceil() as usize).max(8);
    let x0 = geo.flap_start();
    let arc_pts: Vec<[f64; 2]> = (0..=n_arc)
        .map(|i| {
            if i == 0 {
                return [x0, geo.flap_top()];
            }
            if i == n_arc {
                return [x0, geo.flap_bottom()];
            }
            let t = theta0 + arc * i as f64 / n_arc as f64;
            [geo.center[0] + geo.radius * t.cos(), geo.center[1] + geo.radius * t.sin()]
        })
        .collect();
    bb.polyline(&arc_pts, "fixed");

    // flap interface: bottom, tip, top
    let nf = sizing.flap_segments;
    let nt = sizing.tip_segments;
    let bottom: Vec<[f64; 2]> = (0..=nf).map(|i| [geo.flap_x(i, nf), geo.flap_bottom()]).collect();
    let tip: Vec<[f64; 2]> = (0..=nt).map(|j| [geo.flap_end, geo.tip_y(j, nt)]).collect();
    let top: Vec<[f64; 2]> = (0..=nf).rev().map(|i| [geo.flap_x(i, nf), geo.flap_top()]).collect();
    bb.polyline(&bottom, "moving");
    bb.polyline(&tip, "moving");
    bb.polyline(&top, "moving");

    triangulate(&bb, sizing, |p| {
        let inside_channel = p[0] > 0.0 && p[0] < l && p[1] > 0.0 && p[1] < h;
        let in_cyl = (p[0] - geo.center[0]).powi(2) + (p[1] - geo.center[1]).powi(2) < geo.radius * geo.radius;
        let in_flap = p[0] > geo.center[0] && p[0] < geo.flap_end && p[1] > geo.flap_bottom() && p[1] < geo.flap_top();
        inside_channel && !in_cyl && !in_flap
    })
}

fn triangulate<T: Real>(
    bb: &BoundaryBuilder,
    sizing: &MeshSizing,
    inside: impl Fn([f64; 2]) -> bool,
) -> TriMesh<T> {
    let mut cdt: ConstrainedDelaunayTriangulation<Point2<f64>> = ConstrainedDelaunayTriangulation::new();
    let handles: Vec<FixedVertexHandle> = bb
        .points
        .iter()
        .map(|p| cdt.insert(Point2::new(p[0], p[1])).expect("finite boundary point"))
        .collect();
    for (seg, _) in &bb.segments {
        cdt.add_constraint(handles[seg[0]], handles[seg[1]]);
    }
    let params = RefinementParameters::<f64>::new()
        .with_angle_limit(AngleLimit::from_deg(sizing.min_angle_deg))
        .with_max_allowed_area(sizing.max_area)
        .keep_constraint_edges()
        .exclude_outer_faces(true)
        .with_max_additional_vertices(4_000_000);
    let result = cdt.refine(params);
    if !result.refinement_complete {
        log::warn!("mesh refinement stopped before reaching the angle bound");
    }
    let excluded: std::collections::HashSet<_> = result.excluded_faces.iter().copied().collect();

    let mut remap: HashMap<usize, usize> = HashMap::new();
    let mut vertices: Vec<[T; 2]> = Vec::new();
    let mut cells = Vec::new();
    let mut map_vertex = |h: FixedVertexHandle, pos: Point2<f64>, vertices: &mut Vec<[T; 2]>| -> usize {
        *remap.entry(h.index()).or_insert_with(|| {
            vertices.push([T::lit(pos.x), T::lit(pos.y)]);
            vertices.len() - 1
        })
    };
    // Keep boundary points first, in construction order, so vertex ids are stable.
    for (i, p) in bb.points.iter().enumerate() {
        map_vertex(handles[i], Point2::new(p[0], p[1]), &mut vertices);
    }
    for face in cdt.inner_faces() {
        if excluded.contains(&face.fix()) {
            continue;
        }
        let vs = face.vertices();
        let pts = vs.map(|v| v.position());
        let centroid = [
            (pts[0].x + pts[1].x + pts[2].x) / 3.0,
            (pts[0].y + pts[1].y + pts[2].y) / 3.0,
        ];
        if !inside(centroid) {
            continue;
        }
        let mut ids = [0usize; 3];
        for k in 0..3 {
            ids[k] = map_vertex(vs[k].fix(), pts[k], &mut vertices);
        }
        let area = (pts[1].x - pts[0].x) * (pts[2].y - pts[0].y) - (pts[1].y - pts[0].y) * (pts[2].x - pts[0].x);
        if area < 0.0 {
            ids.swap(1, 2);
        }
        cells.push(ids);
    }
    let boundary: Vec<([usize; 2], String)> = bb
        .segments
        .iter()
        .map(|(seg, tag)| {
            let a = remap[&handles[seg[0]].index()];
            let b = remap[&handles[seg[1]].index()];
            (sorted_edge(a, b), tag.to_string())
        })
        .collect();
    TriMesh::new(vertices, cells, boundary).expect("generated benchmark mesh is valid")
}

/// Mesh of the elastic flap that conforms to the fluid mesh interface.
#[derive(Debug, Clone)]
pub struct SolidMesh<T> {
    pub mesh: TriMesh<T>,
    pub geometry: BenchmarkGeometry,
}

/// Structured flap mesh whose top, bottom and tip vertices coincide with the
/// `moving` boundary of [`channel_flap_mesh`] for the same sizing.
///
/// Tags: `attach` (clamped to the cylinder), `tip`, `top`, `bottom`.
pub fn flap_solid_mesh<T: Real>(geo: &BenchmarkGeometry, sizing: &MeshSizing) -> SolidMesh<T> {
    let nx = sizing.flap_segments;
    let ny = sizing.tip_segments;
    let idx = |i: usize, j: usize| j * (nx + 1) + i;
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push([T::lit(geo.flap_x(i, nx)), T::lit(geo.tip_y(j, ny))]);
        }
    }
    let mut cells = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            // alternate diagonals to avoid a directional bias in bending
            if (i + j) % 2 == 0 {
                cells.push([a, b, c]);
                cells.push([a, c, d]);
            } else {
                cells.push([a, b, d]);
                cells.push([b, c, d]);
            }
        }
    }
    let mut boundary = Vec::new();
    for i in 0..nx {
        boundary.push(([idx(i, 0), idx(i + 1, 0)], "bottom".to_string()));
        boundary.push(([idx(i + 1, ny), idx(i, ny)], "top".to_string()));
    }
    for j in 0..ny {
        boundary.push(([idx(nx, j), idx(nx, j + 1)], "tip".to_string()));
        boundary.push(([idx(0, j + 1), idx(0, j)], "attach".to_string()));
    }
    SolidMesh {
        mesh: TriMesh::new(vertices, cells, boundary).expect("structured flap mesh is valid"),
        geometry: *geo,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rectangle_corner_has_single_cell() {
        let m = rectangle_mesh::<f64>([0.0, 0.0], [1.0, 1.0], 3, 3);
        assert_eq!(m.n_vertices(), 16);
        assert_eq!(m.n_cells(), 18);
        assert_eq!(m.vertex_cells(3).len(), 1);
        assert!((m.total_area() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn graded_segment_hits_endpoints() {
        let pts = graded_segment([0.0, 0.0], [1.0, 0.0], |_| 0.3);
        assert_eq!(pts[0], [0.0, 0.0]);
        assert_eq!(*pts.last().unwrap(), [1.0, 0.0]);
        for w in pts.windows(2) {
            assert!(w[1][0] > w[0][0]);
        }
    }

    #[test]
    fn coarse_benchmark_mesh_is_valid_and_tagged() {
        let geo = BenchmarkGeometry::default();
        let sizing = MeshSizing::refinement(0).scaled(2.0);
        let m = channel_flap_mesh::<f64>(&geo, &sizing);
        let exact = 2.5 * 0.41 - std::f64::consts::PI * 0.05 * 0.05;
        // polygonal cylinder plus flap rectangle outside the cylinder
        assert!((m.total_area() - exact).abs() < 0.01);
        let moving = m.tagged_vertices("moving").unwrap();
        assert_eq!(moving.len(), 2 * sizing.flap_segments + sizing.tip_segments + 1);
        assert!(m.tagged_vertices("fixed").unwrap().len() > 50);
    }

    #[test]
    fn solid_interface_matches_fluid_interface() {
        let geo = BenchmarkGeometry::default();
        let sizing = MeshSizing::refinement(0).scaled(2.0);
        let fluid = channel_flap_mesh::<f64>(&geo, &sizing);
        let solid = flap_solid_mesh::<f64>(&geo, &sizing);
        let solid_pts: Vec<[f64; 2]> = solid.mesh.vertices().to_vec();
        for v in fluid.tagged_vertices("moving").unwrap() {
            let p = fluid.vertices()[v];
            assert!(solid_pts.iter().any(|q| q == &p), "fluid interface vertex {p:?} missing in solid");
        }
    }
}
