//! Artificial training data from stationary solid solves, snapshot storage,
//! dataset splits and sequence replay.

pub mod neo_hookean;
pub mod replay;
pub mod snapshot;

pub use neo_hookean::{
    internal_forces, neo_hookean_boundary, neo_hookean_solve, solid_trace_to_fluid, strain_energy, traction_forces,
    Material, SolidSolution,
};

pub use replay::{cantilever_displacement, replay_sequence, synthetic_family, ReplayReport, ReplayRow, SyntheticFamily};
pub use snapshot::{
    build_artificial_dataset, read_dataset, split_dataset, split_sizes, write_dataset, Manifest, Snapshot, SnapshotLabel,
    SnapshotSet, SplitMode, Splits, MANIFEST_FILE,
};

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::BenchmarkGeometry;

/// One base load configuration. Tractions `(0, f_tip)·cos θ` act on the flap
/// tip and `(0, f_side)·cos(θ - φ)` on top and bottom where `|x - c| < d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadConfig {
    pub f_tip: f64,
    pub f_side: f64,
    pub phi: f64,
    /// Window center as a global x coordinate.
    pub c: f64,
    pub d: f64,
}

impl LoadConfig {
    pub fn validate(&self, geo: &BenchmarkGeometry) -> Result<()> {
        let finite = [self.f_tip, self.f_side, self.phi, self.c, self.d].iter().all(|v| v.is_finite());
        if !finite || !(self.d > 0.0) {
            return Err(Error::invalid(format!("load needs finite values and d > 0: {self:?}")));
        }
        if !(self.c >= geo.flap_start() && self.c <= geo.flap_end) {
            return Err(Error::invalid(format!(
                "load center {} outside the flap [{}, {}]",
                self.c,
                geo.flap_start(),
                geo.flap_end
            )));
        }
        Ok(())
    }
}

/// The six base configurations of the artificial dataset.
pub fn table1_configs() -> Vec<LoadConfig> {
    let rows = [
        (1.925e3, -1.7e3, 0.0, 0.4, 0.02),
        (0.6e3, -0.6e3, -PI / 4.0, 0.4, 0.02),
        (1.4e3, -0.2e3, 0.0, 0.5, 0.04),
        (1.76e3, -0.66e3, 0.0, 0.45, 0.04),
        (0.53e3, 0.0, 0.0, 0.45, 0.04),
        (1.99e3, -1.94e3, 0.0, 0.4, 0.02),
    ];
    rows.iter()
        .map(|&(f_tip, f_side, phi, c, d)| LoadConfig { f_tip, f_side, phi, c, d })
        .collect()
}

/// `n` equally spaced amplitudes covering `[0, 2π]` including both ends.
pub fn amplitudes(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n).map(|i| 2.0 * PI * i as f64 / (n - 1) as f64).collect(),
    }
}
