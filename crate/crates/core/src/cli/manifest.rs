//! `manifest.toml`: what each pipeline stage read, wrote and how it ended.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Ok,
    /// Completed, but calibration flags did not pass.
    CriteriaFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub command: String,
    pub status: StageStatus,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub config: toml::Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "crate::simulate::seed_repr::option")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub stages: Vec<Stage>,
}

impl Default for RunManifest {
    fn default() -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: None,
            stages: Vec::new(),
        }
    }
}

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

impl RunManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }

    /// Loads `dir/manifest.toml`, or starts a new one.
    pub fn open(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        if path.exists() {
            Self::read(&path)
        } else {
            Ok(Self::default())
        }
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(MANIFEST_FILE);
        let text = toml::to_string(self).map_err(|e| Error::format(&path, e.to_string()))?;
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    /// Appends a stage and rewrites the manifest in `dir`.
    pub fn record<C: Serialize>(
        dir: &Path,
        seed: Option<u64>,
        stage: StageRecord<'_, C>,
    ) -> Result<PathBuf> {
        let mut m = Self::open(dir)?;
        if seed.is_some() {
            m.seed = seed;
        }
        let config = toml::Table::try_from(stage.config)
            .map_err(|e| Error::Config(format!("config snapshot: {e}")))?;
        m.stages.push(Stage {
            command: stage.command.to_string(),
            status: stage.status,
            started_unix: stage.started_unix,
            finished_unix: unix_now(),
            inputs: stage.inputs.iter().map(|p| p.display().to_string()).collect(),
            outputs: stage.outputs.iter().map(|p| p.display().to_string()).collect(),
            config,
        });
        m.write(dir)
    }

    /// Every path listed by any stage.
    pub fn files(&self) -> impl Iterator<Item = &str> {
        self.stages
            .iter()
            .flat_map(|s| s.inputs.iter().chain(&s.outputs))
            .map(String::as_str)
    }
}

pub struct StageRecord<'a, C> {
    pub command: &'a str,
    pub status: StageStatus,
    pub started_unix: u64,
    pub inputs: &'a [PathBuf],
    pub outputs: &'a [PathBuf],
    pub config: &'a C,
}
