//! Recomputing printed zone tables.
//!
//! A table CSV has header `mode,zone,n,accuracy`. `zone` is 1, 2, 3 or
//! `overall`; the overall row carries the printed overall accuracy and its
//! `n` is the total case count.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Read;

use serde::{Deserialize, Serialize};

use super::zones::{weighted_overall, ModeColumn, ZoneCell, ZoneReport};
use super::EvalError;
use crate::numeric::round_half_up;
use crate::taxonomy::Zone;

/// Rounded recomputation and printed value may differ by this much before a
/// row is flagged.
pub const PRINT_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublishedColumn {
    pub mode: String,
    pub zones: BTreeMap<Zone, ZoneCell>,
    pub printed_overall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublishedTable {
    pub columns: Vec<PublishedColumn>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReproducedRow {
    pub mode: String,
    pub computed: f64,
    /// `computed` half-up to one decimal.
    pub rounded: f64,
    pub printed: f64,
    pub discrepancy: bool,
}

#[derive(Debug, Deserialize)]
struct Row {
    mode: String,
    zone: String,
    n: u64,
    accuracy: f64,
}

/// Mode, zone cells and the `overall` row `(n, accuracy)` once seen.
type ParsedColumn = (String, BTreeMap<Zone, ZoneCell>, Option<(u64, f64)>);

impl PublishedTable {
    pub fn read_csv<R: Read>(r: R) -> Result<Self, EvalError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let mut columns: Vec<ParsedColumn> = Vec::new();
        for (i, row) in rdr.deserialize::<Row>().enumerate() {
            let line = i + 2;
            let row = row.map_err(|e| EvalError::Parse {
                line,
                message: e.to_string(),
            })?;
            let bad = |message: String| EvalError::Parse { line, message };
            if !(row.accuracy.is_finite() && (0.0..=100.0).contains(&row.accuracy)) {
                return Err(bad(format!("accuracy {} is outside [0, 100]", row.accuracy)));
            }
            if row.mode.is_empty() {
                return Err(bad("empty mode".into()));
            }
            let idx = match columns.iter().position(|c| c.0 == row.mode) {
                Some(i) => i,
                None => {
                    columns.push((row.mode.clone(), BTreeMap::new(), None));
                    columns.len() - 1
                }
            };
            let col = &mut columns[idx];
            if row.zone.eq_ignore_ascii_case("overall") {
                if col.2.replace((row.n, row.accuracy)).is_some() {
                    return Err(bad(format!("second overall row for `{}`", row.mode)));
                }
                continue;
            }
            let zone = row
                .zone
                .parse::<u8>()
                .map_err(|_| bad(format!("zone `{}` is not 1, 2, 3 or overall", row.zone)))
                .and_then(|z| Zone::try_from(z).map_err(bad))?;
            if row.n == 0 {
                return Err(EvalError::NonPositiveCount(0));
            }
            let cell = ZoneCell {
                n: row.n,
                accuracy: row.accuracy,
            };
            if col.1.insert(zone, cell).is_some() {
                return Err(bad(format!("zone {} repeated for `{}`", zone.number(), row.mode)));
            }
        }
        if columns.is_empty() {
            return Err(EvalError::Empty);
        }
        let columns = columns
            .into_iter()
            .map(|(mode, zones, overall)| {
                let (n, printed_overall) = overall.ok_or_else(|| EvalError::MissingOverall(mode.clone()))?;
                if zones.is_empty() {
                    return Err(EvalError::Empty);
                }
                let total: u64 = zones.values().map(|c| c.n).sum();
                if n != total {
                    return Err(EvalError::CountMismatch {
                        mode: mode.clone(),
                        overall: n,
                        zones: total,
                    });
                }
                Ok(PublishedColumn {
                    mode,
                    zones,
                    printed_overall,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(PublishedTable { columns })
    }

    /// Recomputes each overall as the count-weighted mean of its zones.
    pub fn reproduce(&self) -> Result<Vec<ReproducedRow>, EvalError> {
        self.columns
            .iter()
            .map(|c| {
                let pairs: Vec<(u64, f64)> = c.zones.values().map(|z| (z.n, z.accuracy)).collect();
                let computed = weighted_overall(&pairs)?;
                let rounded = round_half_up(computed, 1);
                Ok(ReproducedRow {
                    mode: c.mode.clone(),
                    computed,
                    rounded,
                    printed: c.printed_overall,
                    discrepancy: (rounded - c.printed_overall).abs() > PRINT_TOLERANCE + 1e-9,
                })
            })
            .collect()
    }

    /// The table as a [`ZoneReport`] with recomputed overall values.
    pub fn to_report(&self) -> Result<ZoneReport, EvalError> {
        let columns = self
            .columns
            .iter()
            .map(|c| {
                let pairs: Vec<(u64, f64)> = c.zones.values().map(|z| (z.n, z.accuracy)).collect();
                Ok(ModeColumn {
                    mode: c.mode.clone(),
                    zones: c.zones.clone(),
                    overall: weighted_overall(&pairs)?,
                })
            })
            .collect::<Result<Vec<_>, EvalError>>()?;
        Ok(ZoneReport { columns })
    }
}

pub fn render_reproduction(rows: &[ReproducedRow]) -> String {
    let mut out = format!(
        "{:<12}{:>12}{:>10}{:>10}  {}\n",
        "mode", "computed", "rounded", "printed", "status"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<12}{:>12.4}{:>10.1}{:>10.1}  {}",
            r.mode,
            r.computed,
            r.rounded,
            r.printed,
            if r.discrepancy { "DISCREPANCY" } else { "ok" }
        );
    }
    out
}
