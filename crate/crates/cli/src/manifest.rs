//! Run manifests: one JSON record written alongside every command's
//! outputs, capturing what ran, with which seed and files, and how long
//! it took.

use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use iottrust::Result;

/// Record of one CLI run, written as `manifest.json` in the output
/// directory.
///
/// All other outputs are byte-reproducible given identical inputs and
/// seeds; the manifest is the documented exception (wall time varies).
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config_path: Option<String>,
    /// Root seed the run's randomness flowed from, if the command has one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub wall_time_s: f64,
    /// Command-specific summary values (counts, metrics, fits).
    #[serde(skip_serializing_if = "serde_json::Map::is_empty")]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        RunManifest {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_path: None,
            seed: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            wall_time_s: 0.0,
            extra: serde_json::Map::new(),
        }
    }

    pub fn config(&mut self, path: Option<&Path>) -> &mut Self {
        self.config_path = path.map(|p| p.display().to_string());
        self
    }

    pub fn seed(&mut self, seed: u64) -> &mut Self {
        self.seed = Some(seed);
        self
    }

    pub fn input(&mut self, path: &Path) -> &mut Self {
        self.inputs.push(path.display().to_string());
        self
    }

    pub fn output(&mut self, path: &Path) -> &mut Self {
        self.outputs.push(path.display().to_string());
        self
    }

    pub fn note(&mut self, key: &str, value: impl Into<serde_json::Value>) -> &mut Self {
        self.extra.insert(key.to_string(), value.into());
        self
    }

    /// Stamps the elapsed wall time and writes `manifest.json` into the
    /// output directory.
    pub fn write(mut self, out_dir: &Path, started: Instant) -> Result<()> {
        self.wall_time_s = started.elapsed().as_secs_f64();
        let json = serde_json::to_string_pretty(&self)?;
        std::fs::write(out_dir.join("manifest.json"), json)?;
        Ok(())
    }
}
