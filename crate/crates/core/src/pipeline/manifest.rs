//! Run manifest: per-stage completion records keyed by the config hash, so
//! re-running a finished stage with an unchanged config is a no-op and a
//! failed run resumes where it stopped.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct StageRecord {
    pub done: bool,
    pub config_hash: String,
    pub artifacts: Vec<String>,
    pub completed_at_unix: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default, PartialEq, Eq)]
pub struct RunManifest {
    pub config_hash: String,
    pub seeds: BTreeMap<String, u64>,
    pub stages: BTreeMap<String, StageRecord>,
}

impl RunManifest {
    pub fn load_or_new(path: &Path, config_hash: &str) -> Result<Self> {
        if path.exists() {
            let text =
                fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
            let mut m: RunManifest = serde_json::from_str(&text)
                .map_err(|e| Error::json(path.display().to_string(), e))?;
            m.config_hash = config_hash.to_string();
            Ok(m)
        } else {
            Ok(RunManifest {
                config_hash: config_hash.to_string(),
                ..Default::default()
            })
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::json(path.display().to_string(), e))?;
        fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
    }

    /// True when `stage` already ran under this exact config.
    pub fn is_done(&self, stage: &str, config_hash: &str) -> bool {
        self.stages
            .get(stage)
            .map(|r| r.done && r.config_hash == config_hash)
            .unwrap_or(false)
    }

    pub fn record(&mut self, stage: &str, config_hash: &str, artifacts: Vec<String>) {
        let now = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        self.stages.insert(
            stage.to_string(),
            StageRecord {
                done: true,
                config_hash: config_hash.to_string(),
                artifacts,
                completed_at_unix: now,
            },
        );
    }
}
