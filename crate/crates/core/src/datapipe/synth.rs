//! Zone-structured synthetic corpus.
//!
//! Every disease gets a random unit prototype in image-feature space and a
//! set of invented signature words. Routine (zone 3) cases are the
//! prototype plus noise and mention two signature words; intermediate
//! (zone 2) cases blend in a look-alike neighbour's prototype and mention
//! one own and one neighbour word; complex (zone 1) cases carry boosted
//! noise and at most one signature word.

use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::manifest::{Manifest, ManifestEntry};
use super::partition::{partition, Ratios, Split};
use super::DataError;
use crate::fusion::IMAGE_DIM;
use crate::reasoning::{DialogueScript, ScriptTurn};
use crate::taxonomy::{DiseaseId, Taxonomy, Zone};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub cases_per_disease: usize,
    /// Expected norm of the feature noise added to each case.
    pub noise_sigma: f64,
    /// Weight of the neighbour prototype in zone 2 cases, in `[0, 0.5)`.
    pub zone2_overlap: f64,
    /// Noise multiplier for zone 1 cases.
    pub zone1_noise_boost: f64,
    /// Invented words per disease.
    pub signature_words: usize,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            cases_per_disease: 20,
            noise_sigma: 2.0,
            zone2_overlap: 0.4,
            zone1_noise_boost: 5.0,
            signature_words: 4,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.cases_per_disease == 0 {
            return Err(DataError::Config("cases_per_disease must be at least 1".into()));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(DataError::Config(format!(
                "noise_sigma must be non-negative, got {}",
                self.noise_sigma
            )));
        }
        if !(0.0..0.5).contains(&self.zone2_overlap) {
            return Err(DataError::Config(format!(
                "zone2_overlap must be in [0, 0.5), got {}",
                self.zone2_overlap
            )));
        }
        if !(self.zone1_noise_boost.is_finite() && self.zone1_noise_boost >= 0.0) {
            return Err(DataError::Config(format!(
                "zone1_noise_boost must be non-negative, got {}",
                self.zone1_noise_boost
            )));
        }
        if self.signature_words < 2 {
            return Err(DataError::Config("signature_words must be at least 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCorpus {
    pub seed: u64,
    pub params: SynthParams,
    pub manifest: Manifest,
    /// Unit prototype per disease, indexed by head position.
    pub prototypes: Vec<Vec<f64>>,
    /// Invented words per disease, indexed by head position.
    pub signatures: Vec<Vec<String>>,
    /// Look-alike used for zone 2 blending, indexed by head position.
    pub neighbours: Vec<DiseaseId>,
}

const SYLLABLES: [&str; 24] = [
    "ka", "lo", "mi", "ru", "ten", "vas", "qui", "zor", "bel", "dra", "fen", "gil", "hox", "jun", "lep",
    "mar", "nid", "pol", "rys", "sut", "tav", "ulm", "vek", "wyn",
];

const FILLER: [&str; 10] = [
    "patient",
    "reports",
    "lesion",
    "noted",
    "oral",
    "mucosa",
    "examination",
    "presents",
    "area",
    "finding",
];

fn pseudo_word<R: Rng>(rng: &mut R) -> String {
    (0..3).map(|_| *SYLLABLES.choose(rng).unwrap()).collect()
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

fn unit_gaussian<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
    normalize(&mut v);
    v
}

/// Weights of the shared lesion, context and category directions in each
/// prototype; the rest of the unit norm is disease-specific.
const SHARED_WEIGHTS: [f64; 3] = [0.5, 0.4, 0.5];

/// Unit prototypes built from directions shared by diseases with the same
/// lesion, context tags and category, plus a disease-specific direction.
fn structured_prototypes<R: Rng>(taxonomy: &Taxonomy, rng: &mut R) -> Vec<Vec<f64>> {
    let schema = taxonomy.schema();
    let shared: Vec<Vec<Vec<f64>>> = (2..=4)
        .map(|level| {
            (0..schema.labels(level).len())
                .map(|_| unit_gaussian(rng, IMAGE_DIM))
                .collect()
        })
        .collect();
    let own_weight = (1.0 - SHARED_WEIGHTS.iter().map(|w| w * w).sum::<f64>()).sqrt();
    taxonomy
        .diseases()
        .iter()
        .map(|d| {
            let mut context = vec![0.0; IMAGE_DIM];
            for &c in taxonomy.context_indices(d.id) {
                context.iter_mut().zip(&shared[1][c]).for_each(|(a, b)| *a += b);
            }
            normalize(&mut context);
            let parts = [
                &shared[0][taxonomy.lesion_index(d.id)],
                &context,
                &shared[2][taxonomy.category_index(d.id)],
            ];
            let own = unit_gaussian(rng, IMAGE_DIM);
            let mut v: Vec<f64> = own.iter().map(|x| own_weight * x).collect();
            for (dir, w) in parts.into_iter().zip(SHARED_WEIGHTS) {
                v.iter_mut().zip(dir).for_each(|(a, b)| *a += w * b);
            }
            normalize(&mut v);
            v
        })
        .collect()
}

/// Neighbour preference: same category and lesion sharing a context tag,
/// then same category and lesion, then same category, then same lesion,
/// then anything else.
fn pick_neighbour<R: Rng>(taxonomy: &Taxonomy, id: DiseaseId, rng: &mut R) -> DiseaseId {
    let others: Vec<DiseaseId> = taxonomy.all_ids().into_iter().filter(|&o| o != id).collect();
    let same_cat = |o: DiseaseId| taxonomy.category_index(o) == taxonomy.category_index(id);
    let same_lesion = |o: DiseaseId| taxonomy.lesion_index(o) == taxonomy.lesion_index(id);
    let shares_context = |o: DiseaseId| {
        taxonomy
            .context_indices(o)
            .iter()
            .any(|c| taxonomy.context_indices(id).contains(c))
    };
    let tiers: [&dyn Fn(DiseaseId) -> bool; 4] = [
        &|o| same_cat(o) && same_lesion(o) && shares_context(o),
        &|o| same_cat(o) && same_lesion(o),
        &same_cat,
        &same_lesion,
    ];
    for tier in tiers {
        let pool: Vec<DiseaseId> = others.iter().copied().filter(|&o| tier(o)).collect();
        if let Some(&n) = pool.choose(rng) {
            return n;
        }
    }
    *others.choose(rng).expect("taxonomy has more than one disease")
}

impl SyntheticCorpus {
    pub fn prototype(&self, id: DiseaseId) -> &[f64] {
        &self.prototypes[id.index()]
    }

    pub fn signature(&self, id: DiseaseId) -> &[String] {
        &self.signatures[id.index()]
    }

    /// Clarification answer that states every signature word of `id`
    /// along with its lesion and context keywords.
    pub fn oracle_answer(&self, taxonomy: &Taxonomy, id: DiseaseId) -> String {
        let mut words: Vec<String> = self.signature(id).to_vec();
        let schema = taxonomy.schema();
        if let Some(k) = schema.labels(2)[taxonomy.lesion_index(id)].keywords.first() {
            words.push(k.clone());
        }
        for &c in taxonomy.context_indices(id) {
            if let Some(k) = schema.labels(3)[c].keywords.first() {
                words.push(k.clone());
                break;
            }
        }
        words.join(" ")
    }

    /// An oral lichen planus case with an ambiguous presentation: half its
    /// image prototype is borrowed from a red lichenoid look-alike and the
    /// text gives no lesion or context keywords.
    pub fn olp_like_case(&self, taxonomy: &Taxonomy) -> Result<(String, Vec<f64>), DataError> {
        let olp = taxonomy
            .by_name("Oral Lichen Planus")
            .ok_or_else(|| DataError::Config("taxonomy has no Oral Lichen Planus".into()))?
            .id;
        let other = taxonomy
            .by_name("Erythematous Lichen Planus")
            .map(|d| d.id)
            .unwrap_or(self.neighbours[olp.index()]);
        let features: Vec<f64> = self
            .prototype(olp)
            .iter()
            .zip(self.prototype(other))
            .map(|(a, b)| 0.55 * a + 0.45 * b)
            .collect();
        let text = format!(
            "lesion noted on the buccal mucosa during examination {}",
            self.signature(olp)[0]
        );
        Ok((text, features))
    }

    /// Two-turn script for [`SyntheticCorpus::olp_like_case`]: first the
    /// lesion's appearance, then the medication history.
    pub fn olp_script(&self, taxonomy: &Taxonomy) -> DialogueScript {
        let olp = taxonomy
            .by_name("Oral Lichen Planus")
            .map(|d| d.id)
            .unwrap_or(DiseaseId(1));
        let sig = self.signature(olp);
        DialogueScript {
            turns: vec![
                ScriptTurn {
                    expect: "visual characteristics".into(),
                    answer: format!(
                        "white reticular lace-like striae on both cheeks {} {}",
                        sig[0], sig[1]
                    ),
                },
                ScriptTurn {
                    expect: "medications".into(),
                    answer: format!("adult, no new medications or known triggers {}", sig.join(" ")),
                },
            ],
        }
    }
}

/// Generates `cases_per_disease` cases for every disease and partitions
/// them 70/20/10 per class.
pub fn generate_synthetic_corpus(
    taxonomy: &Taxonomy,
    seed: u64,
    params: &SynthParams,
) -> Result<SyntheticCorpus, DataError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = taxonomy.len();

    let prototypes = structured_prototypes(taxonomy, &mut rng);
    let mut used = BTreeSet::new();
    let signatures: Vec<Vec<String>> = (0..n)
        .map(|_| {
            let mut words = Vec::with_capacity(params.signature_words);
            while words.len() < params.signature_words {
                let w = pseudo_word(&mut rng);
                if used.insert(w.clone()) {
                    words.push(w);
                }
            }
            words
        })
        .collect();
    let neighbours: Vec<DiseaseId> = taxonomy
        .diseases()
        .iter()
        .map(|d| pick_neighbour(taxonomy, d.id, &mut rng))
        .collect();

    let schema = taxonomy.schema();
    let per_coord = params.noise_sigma / (IMAGE_DIM as f64).sqrt();
    let mut entries = Vec::with_capacity(n * params.cases_per_disease);
    for d in taxonomy.diseases() {
        let i = d.id.index();
        let nb = neighbours[i];
        for k in 0..params.cases_per_disease {
            let (mix, sd) = match d.zone {
                Zone::Routine => (0.0, per_coord),
                Zone::Intermediate => (params.zone2_overlap, per_coord),
                Zone::Complex => (0.0, per_coord * params.zone1_noise_boost),
            };
            let features: Vec<f64> = prototypes[i]
                .iter()
                .zip(&prototypes[nb.index()])
                .map(|(a, b)| {
                    let noise: f64 = StandardNormal.sample(&mut rng);
                    (1.0 - mix) * a + mix * b + sd * noise
                })
                .collect();

            let mut words: Vec<String> = Vec::new();
            for _ in 0..rng.random_range(1..=2) {
                words.push(FILLER.choose(&mut rng).unwrap().to_string());
            }
            let lesion_p = match d.zone {
                Zone::Routine => 0.9,
                Zone::Intermediate => 0.8,
                Zone::Complex => 0.6,
            };
            if rng.random_bool(lesion_p) {
                if let Some(k) = schema.labels(2)[taxonomy.lesion_index(d.id)]
                    .keywords
                    .choose(&mut rng)
                {
                    words.push(k.clone());
                }
            }
            if rng.random_bool(0.8) {
                let tag = *taxonomy.context_indices(d.id).choose(&mut rng).unwrap();
                if let Some(k) = schema.labels(3)[tag].keywords.choose(&mut rng) {
                    words.push(k.clone());
                }
            }
            let own = &signatures[i];
            match d.zone {
                Zone::Routine => {
                    words.extend(own.choose_multiple(&mut rng, 2).cloned());
                }
                Zone::Intermediate => {
                    words.push(signatures[nb.index()].choose(&mut rng).unwrap().clone());
                    if rng.random_bool(0.5) {
                        words.push(own.choose(&mut rng).unwrap().clone());
                    }
                }
                Zone::Complex => {
                    if rng.random_bool(0.5) {
                        words.push(own.choose(&mut rng).unwrap().clone());
                    }
                }
            }
            words.shuffle(&mut rng);

            entries.push(ManifestEntry {
                case_id: format!("s{seed}-d{:03}-{k:03}", d.id.0),
                disease_id: d.id,
                zone: d.zone,
                split: Split::Train,
                case_text: words.join(" "),
                image_features: Some(features),
                image_file: None,
            });
        }
    }

    let mut manifest = Manifest { entries };
    let p = partition(&manifest.disease_ids(), &Ratios::default(), seed)?;
    manifest.apply_partition(&p);
    Ok(SyntheticCorpus {
        seed,
        params: *params,
        manifest,
        prototypes,
        signatures,
        neighbours,
    })
}
