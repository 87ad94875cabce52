//! Run manifests: enough metadata to reproduce a run byte-identically with
//! the same build. Timing fields are informational and excluded from
//! reproducibility comparisons.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub inputs: Vec<InputDigest>,
    /// Flags that shape the computation, sorted by key.
    pub settings: BTreeMap<String, String>,
    /// Seed for synthetic-scenario generation; core numerics are seed-free.
    pub seed: u64,
    pub version: String,
    pub outputs: Vec<String>,
    pub wall_ms: f64,
}

impl RunManifest {
    pub fn new(subcommand: &str) -> Self {
        Self {
            subcommand: subcommand.to_string(),
            inputs: Vec::new(),
            settings: BTreeMap::new(),
            seed: 0,
            version: env!("CARGO_PKG_VERSION").to_string(),
            outputs: Vec::new(),
            wall_ms: 0.0,
        }
    }

    pub fn add_input(&mut self, path: &Path) -> anyhow::Result<()> {
        let data = std::fs::read(path)
            .with_context(|| format!("cannot read input '{}'", path.display()))?;
        let mut hasher = Sha256::new();
        hasher.update(&data);
        self.inputs.push(InputDigest {
            path: path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.display().to_string()),
            sha256: format!("{:x}", hasher.finalize()),
        });
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.settings.insert(key.to_string(), value.to_string());
    }

    pub fn write(&self, dir: &Path) -> anyhow::Result<PathBuf> {
        let path = dir.join("manifest.json");
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, json)
            .with_context(|| format!("cannot write manifest '{}'", path.display()))?;
        Ok(path)
    }

    pub fn read(dir: &Path) -> anyhow::Result<Self> {
        let path = dir.join("manifest.json");
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("cannot read manifest '{}'", path.display()))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// True when the two runs consumed identical inputs and settings
    /// (timing and output lists excluded).

    /// Human-readable diff of inputs/settings for refusal messages.
    pub fn diff(&self, other: &Self) -> String {
        let mut lines = Vec::new();
        if self.inputs != other.inputs {
            lines.push(format!("inputs: {:?} vs {:?}", self.inputs, other.inputs));
        }
        for key in self.settings.keys().chain(other.settings.keys()) {
            let a = self.settings.get(key);
            let b = other.settings.get(key);
            if a != b {
                lines.push(format!("setting {key}: {a:?} vs {b:?}"));
            }
        }
        lines.dedup();
        lines.join("\n")
    }
}
