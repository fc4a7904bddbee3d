//! Writes generated frames and their manifest to disk.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{generate_scene, SceneConfig};
use crate::dataset::{Dataset, DatasetEntry, Split};
use crate::error::{Error, Result};
use crate::frame::save_frame;
use crate::par;

/// What `generate_dataset` writes. Frame `i` is rendered with seed `seed + i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    /// Annotated frames; the first ones train, the last `round(frames * test_fraction)` test.
    pub frames: usize,
    pub test_fraction: f64,
    /// Person-free frames appended after the annotated ones.
    pub negatives: usize,
    pub seed: u64,
    pub scene: SceneConfig,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self { frames: 200, test_fraction: 0.25, negatives: 20, seed: 1, scene: SceneConfig::default() }
    }
}

impl DatasetConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::ConfigInvalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.test_fraction) {
            return Err(Error::ConfigInvalid(format!("test_fraction must lie in [0, 1], got {}", self.test_fraction)));
        }
        self.scene.validate()
    }

    pub fn test_count(&self) -> usize {
        (self.frames as f64 * self.test_fraction).round() as usize
    }

    /// Split of frame index `i`.
    pub fn split_of(&self, i: usize) -> Split {
        if i >= self.frames {
            Split::Negative
        } else if i >= self.frames - self.test_count() {
            Split::Test
        } else {
            Split::Train
        }
    }
}

/// Renders every frame into `out_dir` and writes the manifest.
pub fn generate_dataset(cfg: &DatasetConfig, out_dir: &Path) -> Result<Dataset> {
    cfg.validate()?;
    fs::create_dir_all(out_dir)?;
    let empty = SceneConfig { persons: [0, 0], ..cfg.scene.clone() };
    let total = cfg.frames + cfg.negatives;
    let written = par::map_indexed(total, |i| -> Result<DatasetEntry> {
        let split = cfg.split_of(i);
        let scene = if split == Split::Negative { &empty } else { &cfg.scene };
        let frame = generate_scene(scene, cfg.seed.wrapping_add(i as u64))?;
        let path = format!("frame_{i:05}.json");
        save_frame(&frame, &out_dir.join(&path))?;
        Ok(DatasetEntry { id: i, path, split })
    });
    let dataset = Dataset { root: out_dir.to_path_buf(), entries: written.into_iter().collect::<Result<_>>()? };
    dataset.save()?;
    Ok(dataset)
}
