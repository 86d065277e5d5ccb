//! Disease registry, diagnostic zones and the per-level label schema.
//!
//! The registry drives candidate masking in the reasoning tree: a choice at
//! levels 2-4 keeps only the diseases that carry the chosen label.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of diseases in the registry.
pub const DISEASE_COUNT: usize = 118;

/// Label cardinalities for levels 1-4.
pub const SCHEMA_CARDINALITY: [usize; 4] = [2, 8, 8, 10];

/// The taxonomy format version understood by this build.
pub const TAXONOMY_SCHEMA_VERSION: u32 = 1;

/// Registry shipped with the crate.
pub const DEFAULT_TAXONOMY: &str = include_str!("../data/taxonomy.toml");

pub const NORMAL: &str = "normal";
pub const ABNORMAL: &str = "abnormal";

#[derive(Debug, Error)]
pub enum TaxonomyError {
    #[error("failed to read taxonomy file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("taxonomy parse error: {0}")]
    Parse(String),
    #[error("unsupported taxonomy schema_version {0}")]
    SchemaVersion(u32),
    #[error("expected {expected} disease records, found {found}")]
    Count { expected: usize, found: usize },
    #[error("level {level} must declare exactly {expected} labels, found {found}")]
    LabelCount {
        level: usize,
        expected: usize,
        found: usize,
    },
    #[error("level {level} declares label `{key}` more than once")]
    DuplicateLabel { level: usize, key: String },
    #[error("level 1 labels must be `normal` and `abnormal`")]
    PrimaryLabels,
    #[error("disease record #{record} (id {id}): duplicate id")]
    DuplicateId { record: usize, id: i64 },
    #[error("disease record #{record} (id {id}): {problem}")]
    Record { record: usize, id: i64, problem: String },
    #[error("label `{label}` is not declared for level {level}")]
    UnknownLabel { level: usize, label: String },
    #[error("path prefix has {0} labels; at most 4 levels constrain the candidate set")]
    PrefixTooLong(usize),
    #[error("unknown disease id {0}")]
    UnknownDisease(u16),
}

/// Diagnostic difficulty of a disease. Ordered by routine-ness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Zone {
    /// Zone 1: rare or biopsy-dependent.
    Complex,
    /// Zone 2: overlapping features, needs clinical context.
    Intermediate,
    /// Zone 3: pathognomonic presentation.
    Routine,
}

impl Zone {
    pub const ALL: [Zone; 3] = [Zone::Complex, Zone::Intermediate, Zone::Routine];

    pub fn number(self) -> u8 {
        match self {
            Zone::Complex => 1,
            Zone::Intermediate => 2,
            Zone::Routine => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Zone::Complex => "Complex",
            Zone::Intermediate => "Intermediate",
            Zone::Routine => "Routine",
        }
    }
}

impl TryFrom<u8> for Zone {
    type Error = String;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        match value {
            1 => Ok(Zone::Complex),
            2 => Ok(Zone::Intermediate),
            3 => Ok(Zone::Routine),
            other => Err(format!("unknown zone {other}")),
        }
    }
}

impl From<Zone> for u8 {
    fn from(z: Zone) -> u8 {
        z.number()
    }
}

impl fmt::Display for Zone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Zone {} ({})", self.number(), self.name())
    }
}

/// 1-based disease identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DiseaseId(pub u16);

impl DiseaseId {
    /// Position of this disease in the 118-way heads.
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }

    pub fn from_index(index: usize) -> Self {
        DiseaseId(index as u16 + 1)
    }
}

impl fmt::Display for DiseaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Label {
    pub key: String,
    pub display: String,
    /// Words that signal this label in free text.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub keywords: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategorySchema {
    pub level1: Vec<Label>,
    pub level2: Vec<Label>,
    pub level3: Vec<Label>,
    pub level4: Vec<Label>,
}

impl CategorySchema {
    /// Labels of `level` (1-4).
    pub fn labels(&self, level: usize) -> &[Label] {
        match level {
            1 => &self.level1,
            2 => &self.level2,
            3 => &self.level3,
            4 => &self.level4,
            _ => &[],
        }
    }

    pub fn index_of(&self, level: usize, key: &str) -> Option<usize> {
        self.labels(level).iter().position(|l| l.key == key)
    }

    fn validate(&self) -> Result<(), TaxonomyError> {
        for level in 1..=4 {
            let labels = self.labels(level);
            let expected = SCHEMA_CARDINALITY[level - 1];
            if labels.len() != expected {
                return Err(TaxonomyError::LabelCount {
                    level,
                    expected,
                    found: labels.len(),
                });
            }
            let mut seen = HashSet::new();
            for l in labels {
                if !seen.insert(l.key.as_str()) {
                    return Err(TaxonomyError::DuplicateLabel {
                        level,
                        key: l.key.clone(),
                    });
                }
            }
        }
        if self.index_of(1, NORMAL).is_none() || self.index_of(1, ABNORMAL).is_none() {
            return Err(TaxonomyError::PrimaryLabels);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiseaseRecord {
    pub id: DiseaseId,
    pub name: String,
    pub zone: Zone,
    pub family: String,
    pub lesion_char: String,
    pub context_tags: Vec<String>,
    pub category: String,
    /// Other ids that name the same condition.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub aliases: Vec<DiseaseId>,
}

#[derive(Debug, Deserialize)]
struct RawTaxonomy {
    schema_version: u32,
    labels: CategorySchema,
    #[serde(default)]
    disease: Vec<RawDisease>,
}

#[derive(Debug, Deserialize)]
struct RawDisease {
    id: i64,
    name: String,
    zone: i64,
    family: String,
    lesion_char: String,
    context_tags: Vec<String>,
    category: String,
    #[serde(default)]
    aliases: Vec<i64>,
}

/// Label indices of one disease, precomputed for masking.
#[derive(Debug, Clone, PartialEq, Eq)]
struct LabelIndex {
    lesion: usize,
    contexts: Vec<usize>,
    category: usize,
}

/// Validated, immutable disease registry.
#[derive(Debug, Clone)]
pub struct Taxonomy {
    schema: CategorySchema,
    diseases: Vec<DiseaseRecord>,
    index: Vec<LabelIndex>,
    by_name: HashMap<String, DiseaseId>,
}

impl Taxonomy {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, TaxonomyError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| TaxonomyError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    /// The registry bundled with the crate.
    pub fn bundled() -> Self {
        Self::parse(DEFAULT_TAXONOMY).expect("bundled taxonomy is valid")
    }

    pub fn parse(text: &str) -> Result<Self, TaxonomyError> {
        let raw: RawTaxonomy = toml::from_str(text).map_err(|e| TaxonomyError::Parse(e.to_string()))?;
        if raw.schema_version != TAXONOMY_SCHEMA_VERSION {
            return Err(TaxonomyError::SchemaVersion(raw.schema_version));
        }
        raw.labels.validate()?;
        if raw.disease.len() != DISEASE_COUNT {
            return Err(TaxonomyError::Count {
                expected: DISEASE_COUNT,
                found: raw.disease.len(),
            });
        }

        let schema = raw.labels;
        let mut slots: Vec<Option<(DiseaseRecord, LabelIndex)>> = vec![None; DISEASE_COUNT];
        for (i, d) in raw.disease.into_iter().enumerate() {
            let record = i + 1;
            let bad = |problem: String| TaxonomyError::Record {
                record,
                id: d.id,
                problem,
            };
            if d.id < 1 || d.id > DISEASE_COUNT as i64 {
                return Err(bad(format!("id outside 1..={DISEASE_COUNT}")));
            }
            if slots[d.id as usize - 1].is_some() {
                return Err(TaxonomyError::DuplicateId { record, id: d.id });
            }
            if d.name.trim().is_empty() {
                return Err(bad("empty name".into()));
            }
            let zone = u8::try_from(d.zone)
                .ok()
                .and_then(|z| Zone::try_from(z).ok())
                .ok_or_else(|| bad(format!("unknown zone {}", d.zone)))?;
            let lesion = schema
                .index_of(2, &d.lesion_char)
                .ok_or_else(|| bad(format!("lesion_char `{}` not in level 2", d.lesion_char)))?;
            if d.context_tags.is_empty() {
                return Err(bad("context_tags must not be empty".into()));
            }
            let mut contexts = Vec::with_capacity(d.context_tags.len());
            for tag in &d.context_tags {
                let ix = schema
                    .index_of(3, tag)
                    .ok_or_else(|| bad(format!("context tag `{tag}` not in level 3")))?;
                if contexts.contains(&ix) {
                    return Err(bad(format!("context tag `{tag}` repeated")));
                }
                contexts.push(ix);
            }
            let category = schema
                .index_of(4, &d.category)
                .ok_or_else(|| bad(format!("category `{}` not in level 4", d.category)))?;
            let mut aliases = Vec::with_capacity(d.aliases.len());
            for a in &d.aliases {
                if *a < 1 || *a > DISEASE_COUNT as i64 || *a == d.id {
                    return Err(bad(format!("invalid alias id {a}")));
                }
                aliases.push(DiseaseId(*a as u16));
            }
            let rec = DiseaseRecord {
                id: DiseaseId(d.id as u16),
                name: d.name.trim().to_string(),
                zone,
                family: d.family,
                lesion_char: d.lesion_char,
                context_tags: d.context_tags,
                category: d.category,
                aliases,
            };
            let idx = LabelIndex {
                lesion,
                contexts,
                category,
            };
            slots[d.id as usize - 1] = Some((rec, idx));
        }

        // 118 records with unique ids in 1..=118 fill every slot.
        let (diseases, index): (Vec<_>, Vec<_>) = slots.into_iter().map(|s| s.unwrap()).unzip();
        let by_name = diseases.iter().map(|d| (d.name.to_lowercase(), d.id)).collect();
        Ok(Taxonomy {
            schema,
            diseases,
            index,
            by_name,
        })
    }

    pub fn schema(&self) -> &CategorySchema {
        &self.schema
    }

    /// Records ordered by id.
    pub fn diseases(&self) -> &[DiseaseRecord] {
        &self.diseases
    }

    pub fn len(&self) -> usize {
        self.diseases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diseases.is_empty()
    }

    pub fn get(&self, id: DiseaseId) -> Option<&DiseaseRecord> {
        if id.0 == 0 {
            return None;
        }
        self.diseases.get(id.index())
    }

    pub fn record(&self, id: DiseaseId) -> Result<&DiseaseRecord, TaxonomyError> {
        self.get(id).ok_or(TaxonomyError::UnknownDisease(id.0))
    }

    /// Case-insensitive lookup by disease name.
    pub fn by_name(&self, name: &str) -> Option<&DiseaseRecord> {
        self.by_name
            .get(&name.trim().to_lowercase())
            .map(|id| &self.diseases[id.index()])
    }

    pub fn all_ids(&self) -> BTreeSet<DiseaseId> {
        self.diseases.iter().map(|d| d.id).collect()
    }

    /// Whether disease `id` carries label index `label` at `level` (1-4).
    pub fn carries(&self, id: DiseaseId, level: usize, label: usize) -> bool {
        let ix = &self.index[id.index()];
        match level {
            1 => self.schema.level1[label].key == ABNORMAL,
            2 => ix.lesion == label,
            3 => ix.contexts.contains(&label),
            4 => ix.category == label,
            _ => false,
        }
    }

    /// Level-2 label index of a disease.
    pub fn lesion_index(&self, id: DiseaseId) -> usize {
        self.index[id.index()].lesion
    }

    /// Level-3 label indices of a disease, in declaration order.
    pub fn context_indices(&self, id: DiseaseId) -> &[usize] {
        &self.index[id.index()].contexts
    }

    /// Level-4 label index of a disease.
    pub fn category_index(&self, id: DiseaseId) -> usize {
        self.index[id.index()].category
    }

    /// Diseases consistent with every label of `prefix` (level 1 first).
    pub fn candidates_for<S: AsRef<str>>(&self, prefix: &[S]) -> Result<BTreeSet<DiseaseId>, TaxonomyError> {
        if prefix.len() > 4 {
            return Err(TaxonomyError::PrefixTooLong(prefix.len()));
        }
        let mut indices = Vec::with_capacity(prefix.len());
        for (i, label) in prefix.iter().enumerate() {
            let level = i + 1;
            let label = label.as_ref();
            let ix = self
                .schema
                .index_of(level, label)
                .ok_or_else(|| TaxonomyError::UnknownLabel {
                    level,
                    label: label.to_string(),
                })?;
            indices.push(ix);
        }
        Ok(self.candidates_for_indices(&indices))
    }

    /// Same as [`Taxonomy::candidates_for`] with pre-resolved label indices.
    pub fn candidates_for_indices(&self, prefix: &[usize]) -> BTreeSet<DiseaseId> {
        self.diseases
            .iter()
            .map(|d| d.id)
            .filter(|&id| {
                prefix
                    .iter()
                    .enumerate()
                    .all(|(i, &label)| self.carries(id, i + 1, label))
            })
            .collect()
    }

    /// The full label path (levels 1-4) of a disease.
    pub fn own_prefix(&self, id: DiseaseId) -> [usize; 4] {
        let ix = &self.index[id.index()];
        [
            self.schema.index_of(1, ABNORMAL).unwrap(),
            ix.lesion,
            ix.contexts[0],
            ix.category,
        ]
    }

    pub fn zone_counts<'a, I>(&self, ids: I) -> Result<BTreeMap<Zone, usize>, TaxonomyError>
    where
        I: IntoIterator<Item = &'a DiseaseId>,
    {
        let mut counts: BTreeMap<Zone, usize> = Zone::ALL.iter().map(|&z| (z, 0)).collect();
        for id in ids {
            let rec = self.record(*id)?;
            *counts.get_mut(&rec.zone).unwrap() += 1;
        }
        Ok(counts)
    }

    /// Diseases in `zone`.
    pub fn in_zone(&self, zone: Zone) -> impl Iterator<Item = &DiseaseRecord> {
        self.diseases.iter().filter(move |d| d.zone == zone)
    }
}
