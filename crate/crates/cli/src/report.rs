//! Per-run manifest written next to the outputs of every command.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Context;
use serde::{Deserialize, Serialize};

use meshmotion::profile::Timings;

pub const RUN_FILE: &str = "run.json";

/// What was run, on what, and where the time went. Timings differ between
/// runs; every other output of a command is reproducible.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Effective settings after defaults were filled in.
    pub config: serde_json::Value,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub seed: Option<u64>,
    pub timings: Timings,
    #[serde(default)]
    pub summary: BTreeMap<String, serde_json::Value>,
    #[serde(default)]
    pub notes: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.into(),
            ..Self::default()
        }
    }

    pub fn input(&mut self, name: &str, value: impl ToString) -> &mut Self {
        self.inputs.insert(name.into(), value.to_string());
        self
    }

    pub fn output(&mut self, name: &str, path: &Path) -> &mut Self {
        self.outputs.insert(name.into(), path.display().to_string());
        self
    }

    pub fn summary(&mut self, key: &str, value: impl Serialize) -> &mut Self {
        let v = serde_json::to_value(value).unwrap_or(serde_json::Value::Null);
        self.summary.insert(key.into(), v);
        self
    }

    pub fn write(&mut self, dir: &Path) -> anyhow::Result<()> {
        let path = dir.join(RUN_FILE);
        self.output("run", &path);
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))
    }
}

pub fn read_run(dir: &Path) -> anyhow::Result<RunManifest> {
    let path = dir.join(RUN_FILE);
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&text)?)
}
