//! JSON dataset manifest: the task, class names, per-entry file paths, and
//! (for part segmentation) the per-category part-label sets.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Classification,
    PartSegmentation,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartSet {
    pub category: usize,
    pub parts: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub cloud: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
    pub class_id: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub task: Task,
    pub classes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub part_sets: Option<Vec<PartSet>>,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    /// Part set of a category; only meaningful for segmentation manifests.
    pub fn parts_of(&self, category: usize) -> Option<&[usize]> {
        self.part_sets
            .as_ref()?
            .iter()
            .find(|p| p.category == category)
            .map(|p| p.parts.as_slice())
    }

    /// Total number of distinct part labels (max label + 1).
    pub fn part_label_space(&self) -> usize {
        self.part_sets
            .as_ref()
            .map(|sets| {
                sets.iter()
                    .flat_map(|s| s.parts.iter())
                    .max()
                    .map_or(0, |m| m + 1)
            })
            .unwrap_or(0)
    }

    fn validate(&self, location: &str) -> Result<()> {
        let parse = |message: String| Error::parse(location.to_string(), message);
        if self.classes.is_empty() {
            return Err(parse("manifest declares no classes".into()));
        }
        for (i, e) in self.entries.iter().enumerate() {
            if e.class_id >= self.classes.len() {
                return Err(parse(format!(
                    "entry {i}: class_id {} out of range ({} classes)",
                    e.class_id,
                    self.classes.len()
                )));
            }
        }
        if self.task == Task::PartSegmentation {
            let sets = self
                .part_sets
                .as_ref()
                .ok_or_else(|| parse("part_segmentation manifest needs part_sets".into()))?;
            let mut seen: BTreeSet<usize> = BTreeSet::new();
            for s in sets {
                if s.parts.is_empty() {
                    return Err(parse(format!(
                        "category {} has an empty part set",
                        s.category
                    )));
                }
                for &p in &s.parts {
                    if !seen.insert(p) {
                        return Err(parse(format!(
                            "part label {p} appears in more than one category"
                        )));
                    }
                }
            }
            for (i, e) in self.entries.iter().enumerate() {
                if e.labels.is_none() {
                    return Err(parse(format!("entry {i}: segmentation entry needs labels")));
                }
                if self.parts_of(e.class_id).is_none() {
                    return Err(parse(format!(
                        "entry {i}: category {} has no part set",
                        e.class_id
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Reads and validates a manifest; relative paths are resolved against the
/// manifest's directory and every referenced file must exist.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(vec![path.display().to_string()]));
    }
    let location = path.display().to_string();
    let text = std::fs::read_to_string(path)?;
    let mut manifest: DatasetManifest = serde_json::from_str(&text)
        .map_err(|e| Error::parse(format!("{location}:{}", e.line()), e.to_string()))?;
    manifest.validate(&location)?;

    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let resolve = |p: &PathBuf| -> PathBuf {
        if p.is_absolute() {
            p.clone()
        } else {
            base.join(p)
        }
    };
    let mut missing = Vec::new();
    for e in &mut manifest.entries {
        e.cloud = resolve(&e.cloud);
        if !e.cloud.exists() {
            missing.push(e.cloud.display().to_string());
        }
        if let Some(m) = &e.mesh {
            let m = resolve(m);
            if !m.exists() {
                missing.push(m.display().to_string());
            }
            e.mesh = Some(m);
        }
        if let Some(l) = &e.labels {
            let l = resolve(l);
            if !l.exists() {
                missing.push(l.display().to_string());
            }
            e.labels = Some(l);
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingFile(missing));
    }
    Ok(manifest)
}

/// Writes a manifest as pretty JSON (paths are stored as given).
pub fn write_manifest(manifest: &DatasetManifest, path: impl AsRef<Path>) -> Result<()> {
    let json = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    std::fs::write(path.as_ref(), json + "\n")?;
    Ok(())
}
