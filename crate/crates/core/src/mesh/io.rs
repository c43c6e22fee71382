use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TriMesh;
use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundaryRecord {
    pub edge: [usize; 2],
    pub tag: String,
}

/// On-disk mesh layout.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct MeshFile<T> {
    pub vertices: Vec<[T; 2]>,
    pub cells: Vec<[usize; 3]>,
    pub boundary: Vec<BoundaryRecord>,
}

impl<T: Real> From<&TriMesh<T>> for MeshFile<T> {
    fn from(mesh: &TriMesh<T>) -> Self {
        MeshFile {
            vertices: mesh.vertices().to_vec(),
            cells: mesh.cells().to_vec(),
            boundary: mesh
                .boundary_edges()
                .iter()
                .map(|b| BoundaryRecord {
                    edge: b.edge,
                    tag: mesh.tag_names()[b.tag].clone(),
                })
                .collect(),
        }
    }
}

impl<T: Real> TryFrom<MeshFile<T>> for TriMesh<T> {
    type Error = Error;

    fn try_from(file: MeshFile<T>) -> Result<Self> {
        TriMesh::new(
            file.vertices,
            file.cells,
            file.boundary.into_iter().map(|b| (b.edge, b.tag)).collect(),
        )
    }
}

pub(crate) fn read_json<D: serde::de::DeserializeOwned>(path: &Path) -> Result<D> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.display().to_string(),
        source,
    })
}

pub(crate) fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let text = serde_json::to_string(value).map_err(|source| Error::Json {
        path: path.display().to_string(),
        source,
    })?;
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_mesh<T: Real>(path: &Path) -> Result<TriMesh<T>> {
    let file: MeshFile<T> = read_json(path)?;
    file.try_into()
}

pub fn write_mesh<T: Real>(path: &Path, mesh: &TriMesh<T>) -> Result<()> {
    write_json(path, &MeshFile::from(mesh))
}
