//! Zone-stratified accuracy and weighted overall figures.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::numeric::round_half_up;
use crate::taxonomy::{DiseaseId, Taxonomy, Zone};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Fast,
    Standard,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Fast => "fast",
            Mode::Standard => "standard",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionEntry {
    pub case_id: String,
    pub truth: DiseaseId,
    pub zone: Zone,
    pub fast: DiseaseId,
    /// Absent when the case was not run in Standard Mode.
    pub standard: Option<DiseaseId>,
    pub clarifications: u32,
    /// Display labels of the Standard Mode path, `>`-separated in CSV.
    pub path: Vec<String>,
}

impl PredictionEntry {
    pub fn prediction(&self, mode: Mode) -> Option<DiseaseId> {
        match mode {
            Mode::Fast => Some(self.fast),
            Mode::Standard => self.standard,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PredictionLog {
    pub entries: Vec<PredictionEntry>,
}

#[derive(Debug, Deserialize, Serialize)]
struct LogRow {
    case_id: String,
    truth: u16,
    zone: u8,
    fast: u16,
    standard: Option<u16>,
    clarifications: u32,
    path: String,
}

fn id(v: u16, line: usize) -> Result<DiseaseId, EvalError> {
    if v == 0 {
        return Err(EvalError::Parse {
            line,
            message: "disease ids start at 1".into(),
        });
    }
    Ok(DiseaseId(v))
}

impl PredictionLog {
    /// CSV with header `case_id,truth,zone,fast,standard,clarifications,path`.
    pub fn read_csv<R: Read>(r: R) -> Result<Self, EvalError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let mut entries = Vec::new();
        for (i, row) in rdr.deserialize::<LogRow>().enumerate() {
            let line = i + 2;
            let row = row.map_err(|e| EvalError::Parse {
                line,
                message: e.to_string(),
            })?;
            let zone = Zone::try_from(row.zone).map_err(|message| EvalError::Parse { line, message })?;
            entries.push(PredictionEntry {
                case_id: row.case_id,
                truth: id(row.truth, line)?,
                zone,
                fast: id(row.fast, line)?,
                standard: row.standard.map(|s| id(s, line)).transpose()?,
                clarifications: row.clarifications,
                path: row
                    .path
                    .split('>')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect(),
            });
        }
        Ok(PredictionLog { entries })
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), EvalError> {
        let mut out = csv::Writer::from_writer(w);
        for e in &self.entries {
            out.serialize(LogRow {
                case_id: e.case_id.clone(),
                truth: e.truth.0,
                zone: e.zone.number(),
                fast: e.fast.0,
                standard: e.standard.map(|s| s.0),
                clarifications: e.clarifications,
                path: e.path.join(" > "),
            })?;
        }
        if self.entries.is_empty() {
            out.write_record([
                "case_id",
                "truth",
                "zone",
                "fast",
                "standard",
                "clarifications",
                "path",
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

    pub fn has_mode(&self, mode: Mode) -> bool {
        !self.entries.is_empty() && self.entries.iter().all(|e| e.prediction(mode).is_some())
    }

    pub fn validate(&self, taxonomy: &Taxonomy) -> Result<(), EvalError> {
        for e in &self.entries {
            let rec = taxonomy
                .get(e.truth)
                .ok_or_else(|| EvalError::UnknownDisease(e.truth, e.case_id.clone()))?;
            if rec.zone != e.zone {
                return Err(EvalError::ZoneMismatch(e.case_id.clone()));
            }
            for p in [Some(e.fast), e.standard].into_iter().flatten() {
                taxonomy
                    .get(p)
                    .ok_or_else(|| EvalError::UnknownDisease(p, e.case_id.clone()))?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZoneCell {
    pub n: u64,
    /// Percent.
    pub accuracy: f64,
}

/// Accuracy of one mode; zones without cases are absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeColumn {
    pub mode: String,
    pub zones: BTreeMap<Zone, ZoneCell>,
    pub overall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneReport {
    pub columns: Vec<ModeColumn>,
}

/// `sum(n * acc) / sum(n)`.
pub fn weighted_overall(pairs: &[(u64, f64)]) -> Result<f64, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::Empty);
    }
    if let Some((n, _)) = pairs.iter().find(|(n, _)| *n == 0) {
        return Err(EvalError::NonPositiveCount(*n));
    }
    let total: u64 = pairs.iter().map(|(n, _)| n).sum();
    let weighted: f64 = pairs.iter().map(|(n, a)| *n as f64 * a).sum();
    Ok(weighted / total as f64)
}

/// Per-zone accuracy of `mode`.
pub fn zone_accuracy(log: &PredictionLog, taxonomy: &Taxonomy, mode: Mode) -> Result<ModeColumn, EvalError> {
    if log.entries.is_empty() {
        return Err(EvalError::Empty);
    }
    log.validate(taxonomy)?;
    let mut tallies: BTreeMap<Zone, (u64, u64)> = BTreeMap::new();
    for e in &log.entries {
        let pred = e.prediction(mode).ok_or(EvalError::MissingMode(mode))?;
        let t = tallies.entry(e.zone).or_default();
        t.0 += 1;
        if pred == e.truth {
            t.1 += 1;
        }
    }
    let zones: BTreeMap<Zone, ZoneCell> = tallies
        .into_iter()
        .map(|(z, (n, c))| {
            (
                z,
                ZoneCell {
                    n,
                    accuracy: c as f64 / n as f64 * 100.0,
                },
            )
        })
        .collect();
    let pairs: Vec<(u64, f64)> = zones.values().map(|c| (c.n, c.accuracy)).collect();
    Ok(ModeColumn {
        mode: mode.as_str().into(),
        overall: weighted_overall(&pairs)?,
        zones,
    })
}

/// Fast and, if every entry has one, Standard columns.
pub fn zone_report(log: &PredictionLog, taxonomy: &Taxonomy) -> Result<ZoneReport, EvalError> {
    let mut columns = vec![zone_accuracy(log, taxonomy, Mode::Fast)?];
    if log.has_mode(Mode::Standard) {
        columns.push(zone_accuracy(log, taxonomy, Mode::Standard)?);
    }
    Ok(ZoneReport { columns })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaTable {
    pub from: String,
    pub to: String,
    /// `to - from` in percentage points, for zones present in both.
    pub zones: BTreeMap<Zone, f64>,
    pub overall: f64,
}

impl ZoneReport {
    pub fn column(&self, mode: &str) -> Option<&ModeColumn> {
        self.columns.iter().find(|c| c.mode == mode)
    }

    /// Rows zone 3, 2, 1 then overall, one column per mode, half-up to one
    /// decimal.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = write!(out, "{:<24}{:>8}", "Zone", "N");
        for c in &self.columns {
            let _ = write!(out, "{:>12}", c.mode);
        }
        out.push('\n');
        let n_of = |z: Zone| {
            self.columns
                .iter()
                .find_map(|c| c.zones.get(&z).map(|cell| cell.n))
        };
        for z in Zone::ALL.iter().rev() {
            let Some(n) = n_of(*z) else { continue };
            let label = format!("Zone {} ({})", z.number(), z.name());
            let _ = write!(out, "{label:<24}{n:>8}");
            for c in &self.columns {
                match c.zones.get(z) {
                    Some(cell) => {
                        let _ = write!(out, "{:>12.1}", round_half_up(cell.accuracy, 1));
                    }
                    None => {
                        let _ = write!(out, "{:>12}", "-");
                    }
                }
            }
            out.push('\n');
        }
        let total: u64 = Zone::ALL.iter().filter_map(|z| n_of(*z)).sum();
        let _ = write!(out, "{:<24}{total:>8}", "Overall");
        for c in &self.columns {
            let _ = write!(out, "{:>12.1}", round_half_up(c.overall, 1));
        }
        out.push('\n');
        out
    }

    /// `fast / standard` overall line, e.g. `73.4 / 89.5`.
    pub fn overall_line(&self) -> String {
        self.columns
            .iter()
            .map(|c| format!("{:.1}", round_half_up(c.overall, 1)))
            .collect::<Vec<_>>()
            .join(" / ")
    }
}

/// Percentage-point change from mode `from` to mode `to`.
pub fn compare_modes(report: &ZoneReport, from: &str, to: &str) -> Result<DeltaTable, EvalError> {
    let a = report
        .column(from)
        .ok_or_else(|| EvalError::MissingColumn(from.to_string()))?;
    let b = report
        .column(to)
        .ok_or_else(|| EvalError::MissingColumn(to.to_string()))?;
    let zones = a
        .zones
        .iter()
        .filter_map(|(z, ca)| b.zones.get(z).map(|cb| (*z, cb.accuracy - ca.accuracy)))
        .collect();
    Ok(DeltaTable {
        from: from.into(),
        to: to.into(),
        zones,
        overall: b.overall - a.overall,
    })
}

impl DeltaTable {
    pub fn render(&self) -> String {
        let mut out = format!("{:<24}{:>12}\n", "Zone", format!("{} - {}", self.to, self.from));
        for (z, d) in self.zones.iter().rev() {
            let label = format!("Zone {} ({})", z.number(), z.name());
            let _ = writeln!(out, "{label:<24}{:>+12.1}", round_half_up(*d, 1));
        }
        let _ = writeln!(out, "{:<24}{:>+12.1}", "Overall", round_half_up(self.overall, 1));
        out
    }
}
