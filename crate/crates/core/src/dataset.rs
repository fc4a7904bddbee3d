//! Dataset manifests: a directory of frames plus `manifest.json` naming each frame's split.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{json_error, load_frame, RgbdFrame};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    /// Person-free frames for negative mining.
    Negative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub id: usize,
    /// Frame JSON path relative to the dataset root.
    pub path: String,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub root: PathBuf,
    pub entries: Vec<DatasetEntry>,
}

#[derive(Serialize, Deserialize)]
struct ManifestJson {
    frames: Vec<DatasetEntry>,
}

impl Dataset {
    pub fn load(root: &Path) -> Result<Self> {
        let path = root.join(MANIFEST_NAME);
        let text = fs::read_to_string(&path)?;
        let m: ManifestJson = serde_json::from_str(&text).map_err(|e| json_error(&path, &text, e))?;
        Ok(Self { root: root.to_path_buf(), entries: m.frames })
    }

    pub fn save(&self) -> Result<()> {
        fs::create_dir_all(&self.root)?;
        let text = serde_json::to_string_pretty(&ManifestJson { frames: self.entries.clone() }).map_err(|e| Error::Io(e.into()))?;
        fs::write(self.root.join(MANIFEST_NAME), text + "\n")?;
        Ok(())
    }

    /// Entries of one split, in id order.
    pub fn split(&self, split: Split) -> Vec<&DatasetEntry> {
        let mut v: Vec<&DatasetEntry> = self.entries.iter().filter(|e| e.split == split).collect();
        v.sort_by_key(|e| e.id);
        v
    }

    pub fn load_frame(&self, entry: &DatasetEntry) -> Result<RgbdFrame> {
        load_frame(&self.root.join(&entry.path))
    }
}
