pub mod data;
pub mod error;
pub mod ext;
pub mod fem;
pub mod hybrid;
pub mod icnn;
pub mod field;
pub mod mesh;
pub mod nncorr;
pub mod optim;
pub mod profile;
pub mod quality;
pub mod real;
pub mod rng;

pub use error::{Error, Result};
pub use field::{Field, Space};
pub use mesh::TriMesh;
pub use real::Real;

pub type Mesh = TriMesh<f64>;
pub type MeshF32 = TriMesh<f32>;
pub type VectorField = Field<f64>;
pub type BoundaryData = ext::BoundaryDisplacement<f64>;
pub type Icnn = icnn::IcnnParams<f64>;
pub type Network = nncorr::Mlp<f64>;
pub type NetworkF32 = nncorr::Mlp<f32>;
pub type Dataset = data::SnapshotSet<f64>;
