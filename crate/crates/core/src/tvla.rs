//! Test Vector Leakage Assessment over the fixed plaintext classes.
//!
//! Every pair of classes gets a Welch t-score. Off-diagonal cells compare the
//! full sets; a class against itself compares the first half of its traces
//! with the second half. Rows are written with a prime (`All 0s'`) to mark the
//! second collection, as in the usual table layout.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::stats_core::{welch_t, MomentAccumulator, StatsError, THRESHOLD_TVLA};
use crate::trace_store::{PlaintextClass, TraceRecord, TraceSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Classification {
    #[serde(rename = "TP")]
    TruePositive,
    #[serde(rename = "TN")]
    TrueNegative,
    #[serde(rename = "FP")]
    FalsePositive,
    #[serde(rename = "FN")]
    FalseNegative,
}

impl Classification {
    pub fn abbrev(self) -> &'static str {
        match self {
            Self::TruePositive => "TP",
            Self::TrueNegative => "TN",
            Self::FalsePositive => "FP",
            Self::FalseNegative => "FN",
        }
    }

    pub fn is_positive(self) -> bool {
        matches!(self, Self::TruePositive | Self::FalsePositive)
    }
}

pub fn classify_cell(t: f64, same_plaintext: bool, threshold: f64) -> Classification {
    let distinguishable = t.abs() >= threshold;
    match (same_plaintext, distinguishable) {
        (false, true) => Classification::TruePositive,
        (true, false) => Classification::TrueNegative,
        (true, true) => Classification::FalsePositive,
        (false, false) => Classification::FalseNegative,
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TvlaError {
    #[error("need at least two plaintext classes, got {0}")]
    TooFewClasses(usize),
    #[error("class {0} has {1} traces; at least 4 are needed to split it")]
    TooFewTraces(PlaintextClass, usize),
    #[error("classes disagree on samples per trace")]
    SampleCountMismatch,
    #[error("sample index {index} out of range ({available} samples per trace)")]
    SampleIndexOutOfRange { index: usize, available: usize },
    #[error(transparent)]
    Stats(#[from] StatsError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TvlaCell {
    pub row: PlaintextClass,
    pub col: PlaintextClass,
    /// `None` when both groups had zero variance at the chosen sample.
    pub t: Option<f64>,
    pub sample_index: usize,
    /// Set on indeterminate cells whose group means differ.
    pub means_differ: bool,
    pub classification: Classification,
}

impl TvlaCell {
    /// |t| used for classification. An indeterminate cell is the limit of the
    /// statistic as the variance goes to zero: 0 for equal means, infinite otherwise.
    pub fn effective_abs_t(&self) -> f64 {
        match self.t {
            Some(t) => t.abs(),
            None if self.means_differ => f64::INFINITY,
            None => 0.0,
        }
    }

    pub fn is_indeterminate(&self) -> bool {
        self.t.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TvlaReport {
    pub channel: String,
    pub classes: Vec<PlaintextClass>,
    pub threshold: f64,
    /// `cells[r][c]`, rows and columns both in `classes` order.
    pub cells: Vec<Vec<TvlaCell>>,
}

impl TvlaReport {
    pub fn cell(&self, row: PlaintextClass, col: PlaintextClass) -> Option<&TvlaCell> {
        let r = self.classes.iter().position(|&c| c == row)?;
        let c = self.classes.iter().position(|&c| c == col)?;
        Some(&self.cells[r][c])
    }

    pub fn iter_cells(&self) -> impl Iterator<Item = &TvlaCell> {
        self.cells.iter().flatten()
    }

    pub fn count(&self, label: Classification) -> usize {
        self.iter_cells()
            .filter(|c| c.classification == label)
            .count()
    }

    /// Aligned text table, classes as columns and primed classes as rows.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "channel: {}   threshold: |t| >= {}",
            self.channel, self.threshold
        );
        let _ = write!(s, "{:<10}", "Plaintext");
        for c in &self.classes {
            let _ = write!(s, "{:>16}", c.table_label());
        }
        s.push('\n');
        for row in &self.cells {
            let _ = write!(s, "{:<10}", format!("{}'", row[0].row.table_label()));
            for cell in row {
                let t = cell
                    .t
                    .map_or_else(|| "—".to_string(), |t| format!("{t:.2}"));
                let _ = write!(s, "{:>16}", format!("{t} {}", cell.classification.abbrev()));
            }
            s.push('\n');
        }
        s
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["row", "col", "t", "sample_index", "classification"])?;
        for c in self.iter_cells() {
            out.write_record([
                c.row.short_name().to_string(),
                c.col.short_name().to_string(),
                c.t.map_or_else(String::new, |t| format!("{t:?}")),
                c.sample_index.to_string(),
                c.classification.abbrev().to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

struct ClassMoments {
    full: Vec<MomentAccumulator>,
    first: Vec<MomentAccumulator>,
    second: Vec<MomentAccumulator>,
}

fn moments(records: &[TraceRecord], spt: usize) -> Result<Vec<MomentAccumulator>, StatsError> {
    let mut acc = vec![MomentAccumulator::new(); spt];
    for r in records {
        for (a, &s) in acc.iter_mut().zip(&r.samples) {
            a.push(s)?;
        }
    }
    Ok(acc)
}

fn class_moments(ts: &TraceSet, spt: usize) -> Result<ClassMoments, StatsError> {
    let half = ts.len() / 2;
    let first = moments(&ts.records[..half], spt)?;
    let second = moments(&ts.records[half..], spt)?;
    let full = first.iter().zip(&second).map(|(a, b)| a.merge(b)).collect();
    Ok(ClassMoments {
        full,
        first,
        second,
    })
}

fn score_cell(
    row: PlaintextClass,
    col: PlaintextClass,
    a: &[MomentAccumulator],
    b: &[MomentAccumulator],
    samples: &[usize],
    threshold: f64,
) -> Result<TvlaCell, TvlaError> {
    let same = row == col;
    let mut best: Option<TvlaCell> = None;
    for &k in samples {
        let (t, means_differ) = match welch_t(&a[k], &b[k]) {
            Ok(t) => (Some(t), false),
            Err(StatsError::DegenerateVariance) => (None, a[k].mean() != b[k].mean()),
            Err(e) => return Err(e.into()),
        };
        let mut cell = TvlaCell {
            row,
            col,
            t,
            sample_index: k,
            means_differ,
            classification: Classification::TrueNegative,
        };
        cell.classification = classify_cell(cell.effective_abs_t(), same, threshold);
        if best
            .as_ref()
            .is_none_or(|b| cell.effective_abs_t() > b.effective_abs_t())
        {
            best = Some(cell);
        }
    }
    Ok(best.expect("at least one sample"))
}

/// Runs TVLA over every ordered pair of the supplied classes.
///
/// With `sample_index` set only that sample is tested; otherwise every sample
/// is tested and each cell reports the one with the largest |t|.
pub fn run_tvla(
    groups: &BTreeMap<PlaintextClass, TraceSet>,
    sample_index: Option<usize>,
) -> Result<TvlaReport, TvlaError> {
    if groups.len() < 2 {
        return Err(TvlaError::TooFewClasses(groups.len()));
    }
    let spt = groups
        .values()
        .next()
        .map_or(0, TraceSet::samples_per_trace);
    for (&class, ts) in groups {
        if ts.len() < 4 {
            return Err(TvlaError::TooFewTraces(class, ts.len()));
        }
        if ts.samples_per_trace() != spt || ts.check_consistent().is_err() {
            return Err(TvlaError::SampleCountMismatch);
        }
    }
    let samples: Vec<usize> = match sample_index {
        Some(i) if i >= spt => {
            return Err(TvlaError::SampleIndexOutOfRange {
                index: i,
                available: spt,
            })
        }
        Some(i) => vec![i],
        None => (0..spt).collect(),
    };

    let classes: Vec<PlaintextClass> = groups.keys().copied().collect();
    let stats: Vec<ClassMoments> = groups
        .par_iter()
        .map(|(_, ts)| class_moments(ts, spt))
        .collect::<Result<_, _>>()?;

    let mut cells = Vec::with_capacity(classes.len());
    for (r, &row) in classes.iter().enumerate() {
        let mut line = Vec::with_capacity(classes.len());
        for (c, &col) in classes.iter().enumerate() {
            let cell = if r == c {
                score_cell(
                    row,
                    col,
                    &stats[r].first,
                    &stats[r].second,
                    &samples,
                    THRESHOLD_TVLA,
                )?
            } else {
                score_cell(
                    row,
                    col,
                    &stats[r].full,
                    &stats[c].full,
                    &samples,
                    THRESHOLD_TVLA,
                )?
            };
            line.push(cell);
        }
        cells.push(line);
    }
    let channel = groups
        .values()
        .next()
        .map(|t| t.channel_name.clone())
        .unwrap_or_default();
    Ok(TvlaReport {
        channel,
        classes,
        threshold: THRESHOLD_TVLA,
        cells,
    })
}
