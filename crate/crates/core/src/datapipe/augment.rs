//! Distribution-aware augmentation planning for long-tailed class counts.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::DataError;
use crate::taxonomy::DiseaseId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogBase {
    #[default]
    Natural,
    Two,
    Ten,
}

impl LogBase {
    pub fn log(self, x: f64) -> f64 {
        match self {
            LogBase::Natural => x.ln(),
            LogBase::Two => x.log2(),
            LogBase::Ten => x.log10(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugConfig {
    /// Weight of the rarity term.
    pub a: f64,
    /// Base offset: every class gets at least `log(b)`.
    pub b: f64,
    #[serde(default)]
    pub log_base: LogBase,
}

impl Default for AugConfig {
    fn default() -> Self {
        AugConfig {
            a: 10.0,
            b: 2.0,
            log_base: LogBase::Natural,
        }
    }
}

impl AugConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        if !(self.b.is_finite() && self.b > 0.0) {
            return Err(DataError::Config(format!("b must be positive, got {}", self.b)));
        }
        if !(self.a.is_finite() && self.a >= 0.0) {
            return Err(DataError::Config(format!(
                "a must be non-negative, got {}",
                self.a
            )));
        }
        Ok(())
    }
}

/// `log(b) + a * (1 - n_initial / n_max)`.
pub fn augmentation_factor(n_initial: u64, n_max: u64, config: &AugConfig) -> Result<f64, DataError> {
    config.validate()?;
    if n_max == 0 {
        return Err(DataError::ZeroMax);
    }
    if n_initial > n_max {
        return Err(DataError::CountAboveMax { n_initial, n_max });
    }
    let ratio = n_initial as f64 / n_max as f64;
    Ok(config.log_base.log(config.b) + config.a * (1.0 - ratio))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCount {
    pub disease_id: DiseaseId,
    pub n_initial: u64,
}

/// Declarative transform labels attached to every augmented class.
pub const DEFAULT_TRANSFORMS: [&str; 4] = ["flip", "rotate±10°", "brightness±10%", "text-paraphrase"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRow {
    pub disease_id: DiseaseId,
    pub n_initial: u64,
    pub factor: f64,
    pub target_count: u64,
    pub transforms: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationPlan {
    pub config: AugConfig,
    pub n_max: u64,
    /// Sorted by disease id.
    pub rows: Vec<PlanRow>,
}

/// `round(n * (1 + factor))`, at least 1 when `n >= 1`.
pub fn target_count(n_initial: u64, factor: f64) -> u64 {
    if n_initial == 0 {
        return 0;
    }
    let t = (n_initial as f64 * (1.0 + factor)).round();
    (t.max(1.0)) as u64
}

pub fn build_plan(counts: &[ClassCount], config: &AugConfig) -> Result<AugmentationPlan, DataError> {
    config.validate()?;
    if counts.is_empty() {
        return Err(DataError::EmptyCounts);
    }
    let n_max = counts.iter().map(|c| c.n_initial).max().unwrap_or(0);
    if n_max == 0 {
        return Err(DataError::AllZeroCounts);
    }
    let mut seen = std::collections::BTreeSet::new();
    let mut rows = Vec::with_capacity(counts.len());
    for c in counts {
        if !seen.insert(c.disease_id) {
            return Err(DataError::DuplicateClass(c.disease_id));
        }
        let factor = augmentation_factor(c.n_initial, n_max, config)?;
        let target = target_count(c.n_initial, factor);
        rows.push(PlanRow {
            disease_id: c.disease_id,
            n_initial: c.n_initial,
            factor,
            target_count: target,
            transforms: if target > c.n_initial {
                DEFAULT_TRANSFORMS.iter().map(|s| s.to_string()).collect()
            } else {
                Vec::new()
            },
        });
    }
    rows.sort_by_key(|r| r.disease_id);
    Ok(AugmentationPlan {
        config: *config,
        n_max,
        rows,
    })
}

impl AugmentationPlan {
    pub fn total_initial(&self) -> u64 {
        self.rows.iter().map(|r| r.n_initial).sum()
    }

    pub fn total_target(&self) -> u64 {
        self.rows.iter().map(|r| r.target_count).sum()
    }

    /// CSV with header `disease_id,n_initial,factor,target_count,transforms`;
    /// transforms are `;`-separated.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), DataError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["disease_id", "n_initial", "factor", "target_count", "transforms"])?;
        for r in &self.rows {
            out.write_record([
                r.disease_id.to_string(),
                r.n_initial.to_string(),
                format!("{:.4}", r.factor),
                r.target_count.to_string(),
                r.transforms.join(";"),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}

#[derive(Debug, Deserialize)]
struct CountRow {
    disease_id: u16,
    n_initial: u64,
}

/// Reads `disease_id,n_initial` rows with a header line.
pub fn read_counts_csv<R: Read>(r: R) -> Result<Vec<ClassCount>, DataError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let mut counts = Vec::new();
    for (i, row) in rdr.deserialize::<CountRow>().enumerate() {
        let row = row.map_err(|e| DataError::Parse {
            line: i + 2,
            message: e.to_string(),
        })?;
        if row.disease_id == 0 {
            return Err(DataError::Parse {
                line: i + 2,
                message: "disease_id must be at least 1".into(),
            });
        }
        counts.push(ClassCount {
            disease_id: DiseaseId(row.disease_id),
            n_initial: row.n_initial,
        });
    }
    Ok(counts)
}

pub fn write_counts_csv<W: Write>(counts: &[ClassCount], w: W) -> Result<(), DataError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["disease_id", "n_initial"])?;
    for c in counts {
        out.write_record([c.disease_id.to_string(), c.n_initial.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counts(ns: &[u64]) -> Vec<ClassCount> {
        ns.iter()
            .enumerate()
            .map(|(i, &n)| ClassCount {
                disease_id: DiseaseId(i as u16 + 1),
                n_initial: n,
            })
            .collect()
    }

    #[test]
    fn golden_factors() {
        let c = AugConfig::default();
        let ln2 = 2f64.ln();
        assert!((augmentation_factor(100, 100, &c).unwrap() - ln2).abs() < 1e-12);
        assert!((augmentation_factor(50, 100, &c).unwrap() - (ln2 + 5.0)).abs() < 1e-12);
        assert!((augmentation_factor(0, 100, &c).unwrap() - (ln2 + 10.0)).abs() < 1e-12);
    }

    #[test]
    fn factor_errors() {
        let c = AugConfig::default();
        assert!(matches!(augmentation_factor(1, 0, &c), Err(DataError::ZeroMax)));
        assert!(matches!(
            augmentation_factor(5, 4, &c),
            Err(DataError::CountAboveMax { .. })
        ));
        let bad = AugConfig { b: 0.0, ..c };
        assert!(augmentation_factor(1, 2, &bad).is_err());
    }

    #[test]
    fn log_base_shifts_by_a_constant() {
        let c = AugConfig {
            log_base: LogBase::Two,
            ..Default::default()
        };
        assert!((augmentation_factor(100, 100, &c).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn plan_for_ten_and_hundred() {
        let p = build_plan(&counts(&[10, 100]), &AugConfig::default()).unwrap();
        let ln2 = 2f64.ln();
        assert!((p.rows[0].factor - (ln2 + 9.0)).abs() < 1e-12);
        assert!((p.rows[1].factor - ln2).abs() < 1e-12);
        // 10 * (1 + 9.6931) = 106.93
        assert_eq!(p.rows[0].target_count, 107);
        // 100 * 1.6931 = 169.31
        assert_eq!(p.rows[1].target_count, 169);
        let csv = p.to_csv();
        assert!(csv.starts_with("disease_id,n_initial,factor,target_count,transforms\n"));
        assert!(csv.contains("1,10,9.6931,107,"));
        assert!(csv.contains("2,100,0.6931,169,"));
    }

    #[test]
    fn symmetric_and_degenerate_plans() {
        let p = build_plan(&counts(&[100, 100]), &AugConfig::default()).unwrap();
        assert_eq!(p.rows[0].factor, p.rows[1].factor);
        assert!(matches!(
            build_plan(&counts(&[0, 0]), &AugConfig::default()),
            Err(DataError::AllZeroCounts)
        ));
        assert!(build_plan(&[], &AugConfig::default()).is_err());
        let p = build_plan(&counts(&[0, 4]), &AugConfig::default()).unwrap();
        assert_eq!(p.rows[0].target_count, 0);
    }

    #[test]
    fn counts_csv_round_trip() {
        let c = counts(&[3, 0, 17]);
        let mut buf = Vec::new();
        write_counts_csv(&c, &mut buf).unwrap();
        assert_eq!(read_counts_csv(&buf[..]).unwrap(), c);
        assert!(read_counts_csv("disease_id,n_initial\n0,4\n".as_bytes()).is_err());
        assert!(read_counts_csv("disease_id,n_initial\n1,-4\n".as_bytes()).is_err());
    }
}
