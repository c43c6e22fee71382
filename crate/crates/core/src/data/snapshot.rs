//! Snapshot sets: boundary data with optional harmonic, gradient and
//! biharmonic fields on one shared mesh, plus train/val/test splits.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{amplitudes, neo_hookean_boundary, LoadConfig, Material};
use crate::error::{Error, Result};
use crate::ext::{BiharmonicSolver, BoundaryDisplacement, HarmonicSolver};
use crate::fem::{ClementOperator, LinearSolver};
use crate::field::{Field, Space};
use crate::hybrid::HybridSample;
use crate::mesh::{read_json, read_mesh, write_json, write_mesh, SolidMesh, TriMesh};
use crate::nncorr::NnCorrData;
use crate::real::Real;
use crate::rng::seeded;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Snapshot<T> {
    pub g: BoundaryDisplacement<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_harm: Option<Field<T>>,
    /// Recovered P1 gradient of `u_harm`, components `∂₁u₁, ∂₂u₁, ∂₁u₂, ∂₂u₂`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clement: Option<Field<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_biharm: Option<Field<T>>,
}

impl<T: Real> Snapshot<T> {
    pub fn boundary_only(g: BoundaryDisplacement<T>) -> Self {
        Self {
            g,
            u_harm: None,
            clement: None,
            u_biharm: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Prefix, middle and suffix blocks, for time series.
    Sequential,
    /// Seeded shuffle.
    Random,
}

impl SplitMode {
    /// 1800/200/400 of 2400 for sequences, 85/15 train/val for shuffles.
    pub fn default_fractions(self) -> Vec<f64> {
        match self {
            SplitMode::Sequential => vec![0.75, 1.0 / 12.0, 1.0 / 6.0],
            SplitMode::Random => vec![0.85, 0.15],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Load configuration and amplitude a snapshot was generated from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnapshotLabel {
    pub config: usize,
    pub theta: f64,
}

#[derive(Debug, Clone)]
pub struct SnapshotSet<T> {
    pub mesh: TriMesh<T>,
    pub snapshots: Vec<Snapshot<T>>,
    /// Empty, or one label per snapshot.
    pub labels: Vec<SnapshotLabel>,
    pub split: SplitMode,
    pub splits: Option<Splits>,
    pub material: Option<Material>,
    pub configs: Vec<LoadConfig>,
    /// Generation attempts dropped because a solve failed.
    pub skipped: usize,
}

impl<T: Real> SnapshotSet<T> {
    /// Boundary data only, in sequence order.
    pub fn from_boundary(mesh: TriMesh<T>, gs: Vec<BoundaryDisplacement<T>>) -> Self {
        Self {
            mesh,
            snapshots: gs.into_iter().map(Snapshot::boundary_only).collect(),
            labels: Vec::new(),
            split: SplitMode::Sequential,
            splits: None,
            material: None,
            configs: Vec::new(),
            skipped: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let mesh = &self.mesh;
        for (i, s) in self.snapshots.iter().enumerate() {
            let ctx = |e: Error| Error::invalid(format!("snapshot {i}: {e}"));
            s.g.validate(mesh).map_err(ctx)?;
            for (name, f, dim) in [("u_harm", &s.u_harm, 2), ("clement", &s.clement, 4), ("u_biharm", &s.u_biharm, 2)] {
                if let Some(f) = f {
                    f.check(mesh).map_err(ctx)?;
                    if f.value_dim != dim {
                        return Err(Error::invalid(format!("snapshot {i}: {name} has {} components", f.value_dim)));
                    }
                }
            }
            if let (Some(h), Some(b)) = (&s.u_harm, &s.u_biharm) {
                if h.space != b.space {
                    return Err(Error::invalid(format!("snapshot {i}: target and input live in different spaces")));
                }
            }
        }
        if !self.labels.is_empty() && self.labels.len() != self.len() {
            return Err(Error::invalid("labels do not match the snapshots"));
        }
        if let Some(sp) = &self.splits {
            let mut all: Vec<usize> = sp.train.iter().chain(&sp.val).chain(&sp.test).copied().collect();
            all.sort_unstable();
            if all != (0..self.len()).collect::<Vec<_>>() {
                return Err(Error::invalid("split indices do not partition the snapshots"));
            }
        }
        Ok(())
    }

    fn split_part(&self, pick: impl Fn(&Splits) -> &Vec<usize>) -> Result<&[usize]> {
        self.splits
            .as_ref()
            .map(|s| pick(s).as_slice())
            .ok_or_else(|| Error::invalid("dataset has not been split"))
    }

    pub fn train(&self) -> Result<&[usize]> {
        self.split_part(|s| &s.train)
    }

    pub fn val(&self) -> Result<&[usize]> {
        self.split_part(|s| &s.val)
    }

    pub fn test(&self) -> Result<&[usize]> {
        self.split_part(|s| &s.test)
    }

    /// Fills in missing harmonic extensions, recovered gradients and
    /// biharmonic targets.
    pub fn complete(&mut self) -> Result<()> {
        let ext = Extensions::new(&self.mesh)?;
        let mesh = &self.mesh;
        self.snapshots.par_iter_mut().try_for_each(|s| ext.fill(mesh, s))
    }

    pub fn cast<U: Real>(&self) -> SnapshotSet<U> {
        let cast = |f: &Option<Field<T>>| f.as_ref().map(Field::cast);
        SnapshotSet {
            mesh: self.mesh.cast(),
            snapshots: self
                .snapshots
                .iter()
                .map(|s| Snapshot {
                    g: s.g.cast(),
                    u_harm: cast(&s.u_harm),
                    clement: cast(&s.clement),
                    u_biharm: cast(&s.u_biharm),
                })
                .collect(),
            labels: self.labels.clone(),
            split: self.split,
            splits: self.splits.clone(),
            material: self.material,
            configs: self.configs.clone(),
            skipped: self.skipped,
        }
    }
}

impl SnapshotSet<f64> {
    /// Boundary data and biharmonic targets of the given snapshots.
    pub fn hybrid_samples(&self, indices: &[usize]) -> Result<Vec<HybridSample>> {
        indices
            .iter()
            .map(|&i| {
                let s = self.snapshots.get(i).ok_or_else(|| Error::invalid(format!("no snapshot {i}")))?;
                let target = s.u_biharm.clone().ok_or_else(|| Error::invalid(format!("snapshot {i} has no target")))?;
                Ok(HybridSample { g: s.g.clone(), target })
            })
            .collect()
    }
}

impl<T: Real> SnapshotSet<T> {
    /// Network inputs and residual targets of the given snapshots.
    pub fn nncorr_data(&self, indices: &[usize], mask: &Field<T>) -> Result<NnCorrData<T>> {
        let mut data = NnCorrData::new(mask);
        for &i in indices {
            let s = self.snapshots.get(i).ok_or_else(|| Error::invalid(format!("no snapshot {i}")))?;
            let missing = || Error::invalid(format!("snapshot {i} lacks u_harm, clement or u_biharm"));
            let (Some(h), Some(c), Some(b)) = (&s.u_harm, &s.clement, &s.u_biharm) else {
                return Err(missing());
            };
            data.push(&self.mesh, h, c, b)?;
        }
        Ok(data)
    }
}

/// Factorized operators shared by every snapshot of one mesh.
struct Extensions<T> {
    harmonic: HarmonicSolver<T>,
    biharmonic: BiharmonicSolver<T>,
    clement: ClementOperator<T>,
}

impl<T: Real> Extensions<T> {
    fn new(mesh: &TriMesh<T>) -> Result<Self> {
        Ok(Self {
            harmonic: HarmonicSolver::new(mesh, LinearSolver::Direct)?,
            biharmonic: BiharmonicSolver::new(mesh)?,
            clement: ClementOperator::new(mesh, Space::P2),
        })
    }

    fn fill(&self, mesh: &TriMesh<T>, s: &mut Snapshot<T>) -> Result<()> {
        if s.u_harm.is_none() {
            s.u_harm = Some(self.harmonic.solve(mesh, &s.g)?);
        }
        if s.clement.is_none() {
            s.clement = Some(self.clement.apply(s.u_harm.as_ref().unwrap()));
        }
        if s.u_biharm.is_none() {
            s.u_biharm = Some(self.biharmonic.solve(mesh, &s.g)?);
        }
        Ok(())
    }
}

/// Solid solves for every configuration at `n_amplitudes` amplitudes in
/// `[0, 2π]`, extended to the fluid mesh harmonically and biharmonically.
///
/// Failed solves are logged and skipped; `skipped` counts them.
pub fn build_artificial_dataset<T: Real>(
    fluid: &TriMesh<T>,
    solid: &SolidMesh<T>,
    configs: &[LoadConfig],
    material: &Material,
    n_amplitudes: usize,
) -> Result<SnapshotSet<T>> {
    if configs.is_empty() {
        return Err(Error::invalid("no load configurations given"));
    }
    if n_amplitudes == 0 {
        return Err(Error::invalid("need at least one amplitude"));
    }
    material.validate()?;
    for c in configs {
        c.validate(&solid.geometry)?;
    }
    let thetas = amplitudes(n_amplitudes);
    let jobs: Vec<SnapshotLabel> = (0..configs.len())
        .flat_map(|config| thetas.iter().map(move |&theta| SnapshotLabel { config, theta }))
        .collect();
    let ext = Extensions::new(fluid)?;
    let results: Vec<Result<Snapshot<T>>> = jobs
        .par_iter()
        .map(|job| {
            let g = neo_hookean_boundary(fluid, solid, &configs[job.config], job.theta, material)?;
            let mut s = Snapshot::boundary_only(g);
            ext.fill(fluid, &mut s)?;
            Ok(s)
        })
        .collect();
    let mut set = SnapshotSet {
        mesh: fluid.clone(),
        snapshots: Vec::with_capacity(jobs.len()),
        labels: Vec::with_capacity(jobs.len()),
        split: SplitMode::Random,
        splits: None,
        material: Some(*material),
        configs: configs.to_vec(),
        skipped: 0,
    };
    for (job, r) in jobs.into_iter().zip(results) {
        match r {
            Ok(s) => {
                set.snapshots.push(s);
                set.labels.push(job);
            }
            Err(e) => {
                log::warn!("skipping config {} at amplitude {}: {e}", job.config, job.theta);
                set.skipped += 1;
            }
        }
    }
    if set.skipped > 0 {
        log::warn!("{} of {} snapshots skipped", set.skipped, set.skipped + set.len());
    }
    Ok(set)
}

/// Split sizes: `⌊n f⌋` for every part but the last, which takes the rest.
pub fn split_sizes(n: usize, fractions: &[f64]) -> Result<Vec<usize>> {
    if !(2..=3).contains(&fractions.len()) {
        return Err(Error::invalid("give two (train, val) or three (train, val, test) fractions"));
    }
    let sum: f64 = fractions.iter().sum();
    if fractions.iter().any(|&f| !(f >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("fractions must be nonnegative and sum to 1, got {fractions:?}")));
    }
    let last = fractions.len() - 1;
    let mut sizes: Vec<usize> = fractions[..last].iter().map(|&f| (n as f64 * f + 1e-9).floor() as usize).collect();
    let used: usize = sizes.iter().sum();
    sizes.push(n.checked_sub(used).ok_or_else(|| Error::invalid("fractions exceed the dataset"))?);
    if let Some(k) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::invalid(format!("split {k} of {n} snapshots with {fractions:?} is empty")));
    }
    Ok(sizes)
}

/// Assigns train/val(/test) indices.
pub fn split_dataset<T: Real>(mut set: SnapshotSet<T>, mode: SplitMode, fractions: &[f64], seed: u64) -> Result<SnapshotSet<T>> {
    let sizes = split_sizes(set.len(), fractions)?;
    let mut order: Vec<usize> = (0..set.len()).collect();
    if mode == SplitMode::Random {
        order.shuffle(&mut seeded(seed));
    }
    let mut parts = Vec::with_capacity(3);
    let mut start = 0;
    for s in &sizes {
        let mut p = order[start..start + s].to_vec();
        p.sort_unstable();
        parts.push(p);
        start += s;
    }
    parts.resize(3, Vec::new());
    let test = parts.pop().unwrap();
    let val = parts.pop().unwrap();
    let train = parts.pop().unwrap();
    set.split = mode;
    set.splits = Some(Splits { train, val, test });
    Ok(set)
}

/// On-disk index of a dataset directory. Paths are relative to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub mesh: String,
    pub snapshots: Vec<String>,
    pub split: SplitMode,
    pub splits: Option<Splits>,
    pub material: Option<Material>,
    pub configs: Vec<LoadConfig>,
    #[serde(default)]
    pub labels: Vec<SnapshotLabel>,
    #[serde(default)]
    pub skipped: usize,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Writes `mesh.json`, `snapshots/NNNNN.json` and `manifest.json` into `dir`
/// and returns the manifest path.
pub fn write_dataset<T: Real>(dir: impl AsRef<Path>, set: &SnapshotSet<T>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    let io = |p: &Path| {
        let p = p.display().to_string();
        move |source| Error::Io { path: p, source }
    };
    let snap_dir = dir.join("snapshots");
    std::fs::create_dir_all(&snap_dir).map_err(io(&snap_dir))?;
    write_mesh(&dir.join("mesh.json"), &set.mesh)?;
    let mut names = Vec::with_capacity(set.len());
    for (i, s) in set.snapshots.iter().enumerate() {
        let name = format!("snapshots/{i:05}.json");
        write_json(&dir.join(&name), s)?;
        names.push(name);
    }
    let manifest = Manifest {
        mesh: "mesh.json".into(),
        snapshots: names,
        split: set.split,
        splits: set.splits.clone(),
        material: set.material,
        configs: set.configs.clone(),
        labels: set.labels.clone(),
        skipped: set.skipped,
    };
    let path = dir.join(MANIFEST_FILE);
    write_json(&path, &manifest)?;
    Ok(path)
}

/// Reads a dataset from its manifest file or the directory holding it.
pub fn read_dataset<T: Real>(path: impl AsRef<Path>) -> Result<SnapshotSet<T>> {
    let path = path.as_ref();
    let manifest_path = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
    let root = manifest_path.parent().unwrap_or(Path::new("."));
    let m: Manifest = read_json(&manifest_path)?;
    let mesh = read_mesh(&root.join(&m.mesh))?;
    let snapshots = m
        .snapshots
        .iter()
        .map(|s| read_json::<Snapshot<T>>(&root.join(s)))
        .collect::<Result<Vec<_>>>()?;
    let set = SnapshotSet {
        mesh,
        snapshots,
        labels: m.labels,
        split: m.split,
        splits: m.splits,
        material: m.material,
        configs: m.configs,
        skipped: m.skipped,
    };
    set.validate()?;
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::table1_configs;
    use crate::mesh::{channel_flap_mesh, flap_solid_mesh, rectangle_mesh, BenchmarkGeometry, MeshSizing};

    fn toy_set(n: usize) -> SnapshotSet<f64> {
        let m = rectangle_mesh([0.0, 0.0], [1.0, 1.0], 4, 4);
        let gs = (0..n)
            .map(|k| BoundaryDisplacement::from_fn(&m, |x: [f64; 2]| [0.01 * k as f64 * x[1], 0.02 * (x[0] * x[1]).sin()]))
            .collect();
        SnapshotSet::from_boundary(m, gs)
    }

    #[test]
    fn paper_split_sizes() {
        assert_eq!(split_sizes(2400, &SplitMode::Sequential.default_fractions()).unwrap(), vec![1800, 200, 400]);
        assert_eq!(split_sizes(606, &SplitMode::Random.default_fractions()).unwrap(), vec![515, 91]);
        assert!(split_sizes(5, &[0.1, 0.9]).is_err());
        assert!(split_sizes(10, &[0.5, 0.6]).is_err());
    }

    #[test]
    fn sequential_split_takes_blocks() {
        let set = split_dataset(toy_set(12), SplitMode::Sequential, &[0.5, 0.25, 0.25], 0).unwrap();
        let sp = set.splits.as_ref().unwrap();
        assert_eq!(sp.train, (0..6).collect::<Vec<_>>());
        assert_eq!(sp.val, vec![6, 7, 8]);
        assert_eq!(sp.test, vec![9, 10, 11]);
        set.validate().unwrap();
    }

    #[test]
    fn random_split_is_seeded() {
        let a = split_dataset(toy_set(20), SplitMode::Random, &[0.85, 0.15], 3).unwrap();
        let b = split_dataset(toy_set(20), SplitMode::Random, &[0.85, 0.15], 3).unwrap();
        let c = split_dataset(toy_set(20), SplitMode::Random, &[0.85, 0.15], 4).unwrap();
        assert_eq!(a.splits, b.splits);
        assert_ne!(a.splits, c.splits);
        let sp = a.splits.unwrap();
        assert_eq!((sp.train.len(), sp.val.len(), sp.test.len()), (17, 3, 0));
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let mut set = toy_set(4);
        set.complete().unwrap();
        let set = split_dataset(set, SplitMode::Sequential, &[0.5, 0.25, 0.25], 0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = write_dataset(dir.path(), &set).unwrap();
        let back: SnapshotSet<f64> = read_dataset(&path).unwrap();
        assert_eq!(back.snapshots, set.snapshots);
        assert_eq!(back.splits, set.splits);
        assert_eq!(back.mesh.vertices(), set.mesh.vertices());
        let again: SnapshotSet<f64> = read_dataset(dir.path()).unwrap();
        assert_eq!(again.snapshots, set.snapshots);
    }

    #[test]
    fn artificial_snapshots_match_their_boundary_data() {
        let geo = BenchmarkGeometry::default();
        let sizing = MeshSizing::coarse();
        let fluid = channel_flap_mesh::<f64>(&geo, &sizing);
        let solid = flap_solid_mesh::<f64>(&geo, &sizing);
        let mat = Material { mu_s: 0.5e6, lambda_s: 2.0e6 };
        // amplitudes 0, π/2, π, 3π/2, 2π
        let set = build_artificial_dataset(&fluid, &solid, &table1_configs()[..1], &mat, 5).unwrap();
        assert_eq!(set.len(), 5);
        assert_eq!(set.skipped, 0);
        set.validate().unwrap();
        for s in &set.snapshots {
            for f in [s.u_harm.as_ref().unwrap(), s.u_biharm.as_ref().unwrap()] {
                for (&n, v) in &s.g.values {
                    assert!((f.node(n)[0] - v[0]).abs() <= 1e-12 && (f.node(n)[1] - v[1]).abs() <= 1e-12);
                }
            }
        }
        let zero = &set.snapshots[1];
        assert!(zero.g.max_abs() < 1e-12);
        assert!(zero.u_harm.as_ref().unwrap().coefficients.iter().all(|x| x.abs() < 1e-12));
        assert!(zero.u_biharm.as_ref().unwrap().coefficients.iter().all(|x| x.abs() < 1e-12));
        assert!(build_artificial_dataset(&fluid, &solid, &[], &mat, 5).is_err());
    }
}
