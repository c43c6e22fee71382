//! Sequence replay: apply an extension operator along a series of boundary
//! data and track mesh quality, standing in for a coupled time loop.

use serde::{Deserialize, Serialize};

use crate::ext::{BoundaryDisplacement, Stepper};
use crate::field::node_coords;
use crate::field::Space;
use crate::mesh::{BenchmarkGeometry, TriMesh};
use crate::quality::quality_report;
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplayRow {
    pub step: usize,
    pub min_quality: f64,
    pub min_det: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    /// One row per completed step; steps after an abort are absent.
    pub rows: Vec<ReplayRow>,
    pub n_steps: usize,
    /// First step whose mesh lost bijectivity (included in `rows`), or
    /// whose extension failed (not included).
    pub degenerate_at: Option<usize>,
    pub error: Option<String>,
}

impl ReplayReport {
    /// `step,min_quality,min_det` rows, then a `degenerate_at` footer if the
    /// series was cut short.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,min_quality,min_det\n");
        for r in &self.rows {
            s.push_str(&format!("{},{:e},{:e}\n", r.step, r.min_quality, r.min_det));
        }
        if let Some(k) = self.degenerate_at {
            s.push_str(&format!("degenerate_at,{k}\n"));
        }
        s
    }

    /// The last row before degeneration.
    pub fn last_valid(&self) -> Option<&ReplayRow> {
        self.rows.iter().rev().find(|r| Some(r.step) != self.degenerate_at)
    }
}

/// Applies `stepper` to each `g` in order, stopping at the first step with
/// `min det ≤ 0` or a failed extension.
pub fn replay_sequence<T: Real>(
    mesh: &TriMesh<T>,
    gs: &[BoundaryDisplacement<T>],
    stepper: &mut dyn Stepper<T>,
) -> ReplayReport {
    let mut report = ReplayReport {
        rows: Vec::with_capacity(gs.len()),
        n_steps: gs.len(),
        degenerate_at: None,
        error: None,
    };
    for (step, g) in gs.iter().enumerate() {
        let q = stepper.step(mesh, g).and_then(|u| quality_report(mesh, &u));
        match q {
            Ok(q) => {
                report.rows.push(ReplayRow {
                    step,
                    min_quality: q.min,
                    min_det: q.min_det,
                });
                if !(q.min_det > 0.0) {
                    report.degenerate_at = Some(step);
                    break;
                }
            }
            Err(e) => {
                log::info!("replay stopped at step {step}: {e}");
                report.degenerate_at = Some(step);
                report.error = Some(e.to_string());
                break;
            }
        }
    }
    report
}

/// Bending family for the flap: the interface moves like a cantilever,
/// `w(s) = A s²(3 - s)/2` with `s` the relative distance from the root,
/// and cross sections rotate with the slope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticFamily {
    pub n_steps: usize,
    /// Tip deflection of the last step; step `k` uses `A k / n_steps`.
    pub max_amplitude: f64,
}

impl Default for SyntheticFamily {
    fn default() -> Self {
        Self {
            n_steps: 15,
            max_amplitude: 0.15,
        }
    }
}

/// Cantilever displacement of a point on the flap for tip deflection `a`.
pub fn cantilever_displacement(geo: &BenchmarkGeometry, a: f64, p: [f64; 2]) -> [f64; 2] {
    let x0 = geo.flap_start();
    let len = geo.flap_end - x0;
    let s = ((p[0] - x0) / len).clamp(0.0, 1.0);
    let w = 0.5 * a * s * s * (3.0 - s);
    let slope = 1.5 * a * s * (2.0 - s) / len;
    let angle = slope.atan();
    let dy = p[1] - geo.center[1];
    // rotate the cross-section offset by the slope angle
    [-dy * angle.sin(), w + dy * (angle.cos() - 1.0)]
}

/// Boundary data of the family on a fluid mesh with a `moving` interface;
/// zero on all other boundary nodes.
pub fn synthetic_family<T: Real>(
    mesh: &TriMesh<T>,
    geo: &BenchmarkGeometry,
    family: &SyntheticFamily,
) -> crate::error::Result<Vec<BoundaryDisplacement<T>>> {
    let moving = mesh.tag_id("moving").ok_or_else(|| crate::error::Error::UnknownTag("moving".into()))?;
    let nv = mesh.n_vertices();
    let mut nodes = Vec::new();
    for be in mesh.boundary_edges().iter().filter(|be| be.tag == moving) {
        let [a, b] = be.edge;
        nodes.extend([a, b, nv + mesh.edge_id(a, b).expect("boundary edge exists")]);
    }
    nodes.sort_unstable();
    nodes.dedup();
    let coords = node_coords(mesh, Space::P2);
    Ok((1..=family.n_steps)
        .map(|k| {
            let a = family.max_amplitude * k as f64 / family.n_steps as f64;
            let mut g = BoundaryDisplacement::zeros(mesh);
            for &n in &nodes {
                let p = [coords[n][0].as_f64(), coords[n][1].as_f64()];
                let d = cantilever_displacement(geo, a, p);
                g.values.insert(n, [T::lit(d[0]), T::lit(d[1])]);
            }
            g
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ext::{ClassicOperator, ExtensionOperator};
    use crate::mesh::{channel_flap_mesh, MeshSizing};

    fn classic(op: ClassicOperator) -> impl FnMut(&TriMesh<f64>, &BoundaryDisplacement<f64>) -> crate::Result<crate::Field<f64>> {
        move |m, g| op.extend(m, g)
    }

    #[test]
    fn zero_sequence_keeps_reference_quality() {
        let geo = BenchmarkGeometry::default();
        let mesh = channel_flap_mesh::<f64>(&geo, &MeshSizing::coarse());
        let gs = vec![BoundaryDisplacement::zeros(&mesh); 4];
        let r = replay_sequence(&mesh, &gs, &mut classic(ClassicOperator::Harmonic));
        assert_eq!(r.rows.len(), 4);
        assert_eq!(r.degenerate_at, None);
        for row in &r.rows {
            assert!((row.min_det - 1.0).abs() < 1e-12);
            assert_eq!(row.min_quality, r.rows[0].min_quality);
        }
        assert_eq!(r.to_csv().lines().count(), 5);
    }

    #[test]
    fn cantilever_shape_is_clamped_and_hits_the_tip() {
        let geo = BenchmarkGeometry::default();
        let root = cantilever_displacement(&geo, 0.1, [geo.flap_start(), geo.flap_top()]);
        assert!(root[0].abs() < 1e-15 && root[1].abs() < 1e-15);
        let tip = cantilever_displacement(&geo, 0.1, geo.tip_probe());
        assert!((tip[1] - 0.1).abs() < 1e-15 && tip[0].abs() < 1e-15);
    }

    #[test]
    fn synthetic_family_orders_harmonic_before_biharmonic() {
        let geo = BenchmarkGeometry::default();
        let mesh = channel_flap_mesh::<f64>(&geo, &MeshSizing::coarse());
        let gs = synthetic_family(&mesh, &geo, &SyntheticFamily::default()).unwrap();
        let h = replay_sequence(&mesh, &gs, &mut classic(ClassicOperator::Harmonic));
        let b = replay_sequence(&mesh, &gs, &mut classic(ClassicOperator::Biharmonic));
        // monotone loss of quality along the family
        for w in h.rows.windows(2) {
            assert!(w[1].min_det < w[0].min_det);
        }
        let hd = h.degenerate_at.unwrap_or(usize::MAX);
        let bd = b.degenerate_at.unwrap_or(usize::MAX);
        assert!(hd <= bd, "harmonic {hd} biharmonic {bd}");
        let last = h.last_valid().unwrap().step;
        assert!(b.rows[last].min_quality >= h.rows[last].min_quality);
    }
}
