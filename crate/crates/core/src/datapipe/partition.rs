//! Stratified train/val/test partitioning.
//!
//! Each class is split into floor-or-ceil of its exact share per split, and
//! the split totals equal the largest-remainder rounding of the whole
//! manifest. Choosing which classes round up is a small transportation
//! problem, solved as a max-flow.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::DataError;
use crate::taxonomy::DiseaseId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
    External,
}

impl Split {
    pub const PARTITIONED: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
            Split::External => "external",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            "external" => Ok(Split::External),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ratios(pub [f64; 3]);

impl Default for Ratios {
    fn default() -> Self {
        Ratios([0.70, 0.20, 0.10])
    }
}

impl Ratios {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.0.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(DataError::Config(format!(
                "split ratios must be positive, got {:?}",
                self.0
            )));
        }
        let sum: f64 = self.0.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(DataError::Config(format!(
                "split ratios must sum to 1, got {sum}"
            )));
        }
        Ok(())
    }
}

/// A class too small to stratify; all of its cases went to train.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionWarning {
    pub disease_id: DiseaseId,
    pub cases: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionResult {
    /// Split of each input case, in input order.
    pub assignment: Vec<Split>,
    /// Train/val/test totals.
    pub totals: [usize; 3],
    pub per_class: BTreeMap<DiseaseId, [usize; 3]>,
    pub warnings: Vec<PartitionWarning>,
}

impl PartitionResult {
    /// `train/val/test`, e.g. `3017/862/431`.
    pub fn summary(&self) -> String {
        format!("{}/{}/{}", self.totals[0], self.totals[1], self.totals[2])
    }
}

/// Largest-remainder rounding of `n * ratios`; ties go to the earlier split.
pub fn largest_remainder(n: usize, ratios: &Ratios) -> [usize; 3] {
    let exact: Vec<f64> = ratios.0.iter().map(|r| n as f64 * r).collect();
    let mut out = [0usize; 3];
    for (o, e) in out.iter_mut().zip(&exact) {
        *o = e.floor() as usize;
    }
    let mut left = n - out.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        out[i] += 1;
        left -= 1;
    }
    out
}

/// Tiny Edmonds-Karp max-flow on an adjacency matrix.
struct Flow {
    cap: Vec<Vec<i64>>,
}

impl Flow {
    fn new(n: usize) -> Self {
        Flow {
            cap: vec![vec![0; n]; n],
        }
    }

    fn run(&mut self, s: usize, t: usize) -> i64 {
        let n = self.cap.len();
        let mut total = 0;
        loop {
            let mut prev = vec![usize::MAX; n];
            prev[s] = s;
            let mut queue = VecDeque::from([s]);
            while let Some(u) = queue.pop_front() {
                for v in 0..n {
                    if prev[v] == usize::MAX && self.cap[u][v] > 0 {
                        prev[v] = u;
                        queue.push_back(v);
                    }
                }
            }
            if prev[t] == usize::MAX {
                return total;
            }
            let mut bottleneck = i64::MAX;
            let mut v = t;
            while v != s {
                bottleneck = bottleneck.min(self.cap[prev[v]][v]);
                v = prev[v];
            }
            let mut v = t;
            while v != s {
                self.cap[prev[v]][v] -= bottleneck;
                self.cap[v][prev[v]] += bottleneck;
                v = prev[v];
            }
            total += bottleneck;
        }
    }
}

/// Per-class split counts: floor or ceil of `n_c * ratio` in every cell,
/// exact class totals, and column totals equal to
/// [`largest_remainder`] of the grand total.
///
/// `order` decides which classes are offered the round-up first.
fn controlled_rounding(
    sizes: &[usize],
    ratios: &Ratios,
    order: &[usize],
) -> Result<Vec<[usize; 3]>, DataError> {
    let total: usize = sizes.iter().sum();
    let targets = largest_remainder(total, ratios);
    let mut cells: Vec<[usize; 3]> = Vec::with_capacity(sizes.len());
    let mut fractional: Vec<[bool; 3]> = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let mut row = [0usize; 3];
        let mut frac = [false; 3];
        for s in 0..3 {
            let exact = n as f64 * ratios.0[s];
            // Guard against 0.7 * 10 = 7.000000000000001.
            let rounded = exact.round();
            if (exact - rounded).abs() < 1e-9 {
                row[s] = rounded as usize;
            } else {
                row[s] = exact.floor() as usize;
                frac[s] = true;
            }
        }
        cells.push(row);
        fractional.push(frac);
    }

    // Nodes: source, classes, splits, sink.
    let k = sizes.len();
    let (source, sink) = (0, k + 4);
    let mut flow = Flow::new(k + 5);
    let mut need = 0i64;
    for (pos, &c) in order.iter().enumerate() {
        let residual = sizes[c] as i64 - cells[c].iter().sum::<usize>() as i64;
        // Node index follows `order` so BFS prefers earlier classes.
        let node = 1 + pos;
        flow.cap[source][node] = residual;
        need += residual;
        for s in 0..3 {
            if fractional[c][s] {
                flow.cap[node][k + 1 + s] = 1;
            }
        }
    }
    for s in 0..3 {
        let floor_sum: usize = cells.iter().map(|r| r[s]).sum();
        let extra = targets[s] as i64 - floor_sum as i64;
        if extra < 0 {
            return Err(DataError::Rounding);
        }
        flow.cap[k + 1 + s][sink] = extra;
    }
    if flow.run(source, sink) != need {
        return Err(DataError::Rounding);
    }
    for (pos, &c) in order.iter().enumerate() {
        for s in 0..3 {
            // A used unit edge has reverse capacity 1.
            if fractional[c][s] && flow.cap[k + 1 + s][1 + pos] == 1 {
                cells[c][s] += 1;
            }
        }
    }
    Ok(cells)
}

/// Splits cases, given by their disease ids, into train/val/test.
///
/// Classes with fewer cases than splits go entirely to train and produce a
/// warning; the remaining classes are stratified exactly.
pub fn partition(diseases: &[DiseaseId], ratios: &Ratios, seed: u64) -> Result<PartitionResult, DataError> {
    ratios.validate()?;
    let mut by_class: BTreeMap<DiseaseId, Vec<usize>> = BTreeMap::new();
    for (i, &d) in diseases.iter().enumerate() {
        by_class.entry(d).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![Split::Train; diseases.len()];
    let mut per_class = BTreeMap::new();
    let mut warnings = Vec::new();

    let mut strat_ids = Vec::new();
    let mut strat_sizes = Vec::new();
    for (&d, cases) in &by_class {
        if cases.len() < 3 {
            warnings.push(PartitionWarning {
                disease_id: d,
                cases: cases.len(),
                message: format!(
                    "disease {d} has {} case(s), fewer than the 3 splits; all assigned to train",
                    cases.len()
                ),
            });
            per_class.insert(d, [cases.len(), 0, 0]);
        } else {
            strat_ids.push(d);
            strat_sizes.push(cases.len());
        }
    }

    let mut order: Vec<usize> = (0..strat_ids.len()).collect();
    order.shuffle(&mut rng);
    let counts = controlled_rounding(&strat_sizes, ratios, &order)?;
    for (d, row) in strat_ids.iter().zip(&counts) {
        let mut cases = by_class[d].clone();
        cases.shuffle(&mut rng);
        let mut it = cases.into_iter();
        for (s, &n) in Split::PARTITIONED.iter().zip(row) {
            for i in it.by_ref().take(n) {
                assignment[i] = *s;
            }
        }
        per_class.insert(*d, *row);
    }

    let mut totals = [0usize; 3];
    for s in &assignment {
        match s {
            Split::Train => totals[0] += 1,
            Split::Val => totals[1] += 1,
            Split::Test => totals[2] += 1,
            Split::External => {}
        }
    }
    Ok(PartitionResult {
        assignment,
        totals,
        per_class,
        warnings,
    })
}
