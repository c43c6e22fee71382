//! Mesh and boundary-data arguments.

use std::path::PathBuf;
use std::str::FromStr;

use meshmotion::data::{read_dataset, synthetic_family, SyntheticFamily};
use meshmotion::ext::read_boundary;
use meshmotion::mesh::{channel_flap_mesh, flap_solid_mesh, read_mesh, BenchmarkGeometry, MeshSizing, SolidMesh};
use meshmotion::{BoundaryData, Mesh};

use crate::UsageError;

/// `benchmark:<level>`, `coarse`, or a mesh JSON file.
#[derive(Debug, Clone, PartialEq)]
pub enum MeshSource {
    Benchmark(u32),
    Coarse,
    File(PathBuf),
}

impl FromStr for MeshSource {
    type Err = UsageError;

    fn from_str(s: &str) -> Result<Self, UsageError> {
        if s == "coarse" {
            return Ok(MeshSource::Coarse);
        }
        if let Some(level) = s.strip_prefix("benchmark:") {
            return match level.parse() {
                Ok(l) if l <= 2 => Ok(MeshSource::Benchmark(l)),
                _ => Err(UsageError(format!("refinement level must be 0, 1 or 2, got {level:?}"))),
            };
        }
        Ok(MeshSource::File(s.into()))
    }
}

impl MeshSource {
    /// Sizing of generated meshes; `None` for files.
    pub fn sizing(&self) -> Option<MeshSizing> {
        match self {
            MeshSource::Benchmark(l) => Some(MeshSizing::refinement(*l)),
            MeshSource::Coarse => Some(MeshSizing::coarse()),
            MeshSource::File(_) => None,
        }
    }

    pub fn load(&self) -> anyhow::Result<Mesh> {
        match (self, self.sizing()) {
            (_, Some(sizing)) => Ok(channel_flap_mesh(&BenchmarkGeometry::default(), &sizing)),
            (MeshSource::File(p), None) => Ok(read_mesh(p)?),
            _ => unreachable!("generated meshes have a sizing"),
        }
    }

    /// Flap mesh matching a generated fluid mesh.
    pub fn solid(&self) -> anyhow::Result<SolidMesh<f64>> {
        let sizing = self
            .sizing()
            .ok_or_else(|| UsageError("solid solves need a generated mesh (coarse or benchmark:<level>)".into()))?;
        Ok(flap_solid_mesh(&BenchmarkGeometry::default(), &sizing))
    }
}

/// `zero`, `cantilever:<tip deflection>`, `dataset:<dir>:<index>`, or a
/// boundary-data JSON file.
#[derive(Debug, Clone, PartialEq)]
pub enum BoundarySource {
    Zero,
    Cantilever(f64),
    Snapshot(PathBuf, usize),
    File(PathBuf),
}

impl FromStr for BoundarySource {
    type Err = UsageError;

    fn from_str(s: &str) -> Result<Self, UsageError> {
        if s == "zero" {
            return Ok(BoundarySource::Zero);
        }
        if let Some(a) = s.strip_prefix("cantilever:") {
            return a
                .parse()
                .map(BoundarySource::Cantilever)
                .map_err(|_| UsageError(format!("bad cantilever amplitude {a:?}")));
        }
        if let Some(rest) = s.strip_prefix("dataset:") {
            let (dir, idx) = rest
                .rsplit_once(':')
                .ok_or_else(|| UsageError("expected dataset:<dir>:<index>".into()))?;
            let idx = idx.parse().map_err(|_| UsageError(format!("bad snapshot index {idx:?}")))?;
            return Ok(BoundarySource::Snapshot(dir.into(), idx));
        }
        Ok(BoundarySource::File(s.into()))
    }
}

impl BoundarySource {
    pub fn load(&self, mesh: &Mesh) -> anyhow::Result<BoundaryData> {
        let g = match self {
            BoundarySource::Zero => BoundaryData::zeros(mesh),
            BoundarySource::Cantilever(a) => {
                let family = SyntheticFamily {
                    n_steps: 1,
                    max_amplitude: *a,
                };
                synthetic_family(mesh, &BenchmarkGeometry::default(), &family)?.remove(0)
            }
            BoundarySource::Snapshot(dir, i) => {
                let set = read_dataset::<f64>(dir)?;
                set.snapshots
                    .get(*i)
                    .ok_or_else(|| UsageError(format!("dataset has {} snapshots, asked for {i}", set.len())))?
                    .g
                    .clone()
            }
            BoundarySource::File(p) => read_boundary(p)?,
        };
        g.validate(mesh)?;
        Ok(g)
    }
}
