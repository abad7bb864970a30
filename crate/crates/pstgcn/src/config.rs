//! Run configuration file (TOML) for the end-to-end pipeline.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::search::SearchConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StreamMode {
    Joint,
    Bone,
    TwoStream,
}

impl Default for StreamMode {
    fn default() -> Self {
        StreamMode::Joint
    }
}

impl std::str::FromStr for StreamMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "joint" => Ok(StreamMode::Joint),
            "bone" => Ok(StreamMode::Bone),
            "two-stream" | "twostream" => Ok(StreamMode::TwoStream),
            other => Err(Error::InvalidConfig(format!("unknown stream mode {other:?}"))),
        }
    }
}

fn default_bone_epochs() -> usize {
    30
}

fn default_fusion_alpha() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    /// Dataset directory (topology.txt + samples.bin).
    pub dataset: PathBuf,
    /// Output directory for reports, descriptors and checkpoints.
    pub output: PathBuf,
    #[serde(default)]
    pub stream: StreamMode,
    /// Fine-tune budget for the bone stream in two-stream mode.
    #[serde(default = "default_bone_epochs")]
    pub bone_epochs: usize,
    /// Per-stream fusion weights.
    #[serde(default = "default_fusion_alpha")]
    pub fusion_alpha_joint: f64,
    #[serde(default = "default_fusion_alpha")]
    pub fusion_alpha_bone: f64,
    #[serde(default)]
    pub search: SearchConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)?;
        let cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self)
            .map_err(|e| Error::InvalidConfig(format!("serialize: {e}")))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if !self.dataset.is_dir() {
            return Err(Error::InvalidConfig(format!(
                "dataset directory {} does not exist",
                self.dataset.display()
            )));
        }
        self.search.validate()?;
        let m = &self.search.finetune_milestones;
        if m.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig(
                "finetune_milestones must be strictly increasing".into(),
            ));
        }
        if m.last().is_some_and(|&last| last >= self.search.finetune_epochs)
            && self.search.finetune_epochs > 0
        {
            return Err(Error::InvalidConfig(
                "finetune_milestones must lie before finetune_epochs".into(),
            ));
        }
        Ok(())
    }
}
