//! Case manifests: one JSON object per line.
//!
//! ```text
//! {"case_id":"c0001","disease_id":56,"zone":2,"split":"train","case_text":"...","image_features":[0.1, ...]}
//! {"case_id":"c0002","disease_id":3,"zone":3,"split":"test","case_text":"...","image_file":"features/c0002.json"}
//! ```

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::partition::{PartitionResult, Split};
use super::DataError;
use crate::fusion::IMAGE_DIM;
use crate::taxonomy::{DiseaseId, Taxonomy, Zone};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub case_id: String,
    pub disease_id: DiseaseId,
    pub zone: Zone,
    pub split: Split,
    pub case_text: String,
    /// Inline features; exclusive with `image_file`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_features: Option<Vec<f64>>,
    /// Path of a JSON array of features, relative to the manifest.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_file: Option<String>,
}

impl ManifestEntry {
    /// Image features, reading `image_file` relative to `base` if needed.
    pub fn features(&self, base: &Path) -> Result<Vec<f64>, DataError> {
        let values = match (&self.image_features, &self.image_file) {
            (Some(v), None) => v.clone(),
            (None, Some(f)) => {
                let path = base.join(f);
                let text = std::fs::read_to_string(&path).map_err(|e| DataError::Io {
                    path: path.display().to_string(),
                    message: e.to_string(),
                })?;
                serde_json::from_str(&text).map_err(|e| DataError::Parse {
                    line: 1,
                    message: format!("{}: {e}", path.display()),
                })?
            }
            _ => {
                return Err(DataError::Entry {
                    case_id: self.case_id.clone(),
                    message: "exactly one of image_features and image_file is required".into(),
                })
            }
        };
        if values.len() != IMAGE_DIM {
            return Err(DataError::Entry {
                case_id: self.case_id.clone(),
                message: format!(
                    "image features have {} values, expected {IMAGE_DIM}",
                    values.len()
                ),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(DataError::Entry {
                case_id: self.case_id.clone(),
                message: "image features contain non-finite values".into(),
            });
        }
        Ok(values)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Parses JSON Lines; blank lines are skipped. Checks structure only;
    /// see [`Manifest::validate`] for taxonomy checks.
    pub fn parse<R: BufRead>(r: R) -> Result<Self, DataError> {
        let mut entries = Vec::new();
        let mut seen = HashSet::new();
        for (i, line) in r.lines().enumerate() {
            let line = line.map_err(|e| DataError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: ManifestEntry = serde_json::from_str(&line).map_err(|e| DataError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            if entry.case_id.is_empty() {
                return Err(DataError::Parse {
                    line: i + 1,
                    message: "empty case_id".into(),
                });
            }
            if entry.disease_id.0 == 0 {
                return Err(DataError::Parse {
                    line: i + 1,
                    message: "disease_id must be at least 1".into(),
                });
            }
            if entry.image_features.is_some() == entry.image_file.is_some() {
                return Err(DataError::Parse {
                    line: i + 1,
                    message: "exactly one of image_features and image_file is required".into(),
                });
            }
            if !seen.insert(entry.case_id.clone()) {
                return Err(DataError::DuplicateCase(entry.case_id));
            }
            entries.push(entry);
        }
        Ok(Manifest { entries })
    }

    pub fn parse_str(text: &str) -> Result<Self, DataError> {
        Self::parse(text.as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DataError> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| DataError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(std::io::BufReader::new(file))
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<(), DataError> {
        for e in &self.entries {
            serde_json::to_writer(&mut w, e).map_err(|e| DataError::Io {
                path: "<manifest>".into(),
                message: e.to_string(),
            })?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| DataError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let mut w = std::io::BufWriter::new(file);
        self.write(&mut w)?;
        w.flush()?;
        Ok(())
    }

    /// Every disease is registered and every zone agrees with the taxonomy.
    pub fn validate(&self, taxonomy: &Taxonomy) -> Result<(), DataError> {
        for e in &self.entries {
            let rec = taxonomy.get(e.disease_id).ok_or_else(|| DataError::Entry {
                case_id: e.case_id.clone(),
                message: format!("unknown disease id {}", e.disease_id),
            })?;
            if rec.zone != e.zone {
                return Err(DataError::Entry {
                    case_id: e.case_id.clone(),
                    message: format!(
                        "zone {} does not match {} for disease {}",
                        e.zone.number(),
                        rec.zone.number(),
                        e.disease_id
                    ),
                });
            }
        }
        Ok(())
    }

    pub fn in_split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    /// Disease of every entry outside the external split, in order.
    pub fn disease_ids(&self) -> Vec<DiseaseId> {
        self.entries
            .iter()
            .filter(|e| e.split != Split::External)
            .map(|e| e.disease_id)
            .collect()
    }

    /// Applies a partition computed over `self.disease_ids()`. External
    /// entries keep their split.
    pub fn apply_partition(&mut self, p: &PartitionResult) {
        let internal = self.entries.iter_mut().filter(|e| e.split != Split::External);
        for (e, s) in internal.zip(&p.assignment) {
            e.split = *s;
        }
    }

    /// Cases per disease.
    pub fn class_counts(&self) -> BTreeMap<DiseaseId, u64> {
        let mut m = BTreeMap::new();
        for e in &self.entries {
            *m.entry(e.disease_id).or_insert(0) += 1;
        }
        m
    }

    /// Directory that relative `image_file` paths resolve against.
    pub fn base_dir(path: &Path) -> PathBuf {
        path.parent().map(Path::to_path_buf).unwrap_or_default()
    }
}
