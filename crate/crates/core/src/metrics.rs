//! Classification metrics, edit distance and cross-seed aggregation.
//!
//! All scores are percentages carried at full precision; rounding happens
//! only when rendering.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Rows are gold classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        ConfusionMatrix {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Self {
        let classes = rows.len();
        let mut cm = ConfusionMatrix::new(classes);
        for (g, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), classes, "confusion matrix must be square");
            cm.counts[g * classes..(g + 1) * classes].copy_from_slice(row);
        }
        cm
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, gold: usize, predicted: usize) -> u64 {
        self.counts[gold * self.classes + predicted]
    }

    pub fn add(&mut self, gold: usize, predicted: usize) {
        self.counts[gold * self.classes + predicted] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn row_sum(&self, gold: usize) -> u64 {
        (0..self.classes).map(|p| self.get(gold, p)).sum()
    }

    pub fn col_sum(&self, predicted: usize) -> u64 {
        (0..self.classes).map(|g| self.get(g, predicted)).sum()
    }
}

pub fn confusion(golds: &[usize], preds: &[usize], classes: usize) -> Result<ConfusionMatrix> {
    if golds.len() != preds.len() {
        return Err(Error::LengthMismatch {
            golds: golds.len(),
            preds: preds.len(),
        });
    }
    let mut cm = ConfusionMatrix::new(classes);
    for (&g, &p) in golds.iter().zip(preds) {
        for label in [g, p] {
            if label >= classes {
                return Err(Error::InvalidClass { label, classes });
            }
        }
        cm.add(g, p);
    }
    Ok(cm)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub strategy: String,
    pub k: usize,
    pub rng_seed: u64,
    pub macro_f1: f64,
    pub weighted_f1: f64,
    pub accuracy: f64,
    pub per_class_f1: Vec<f64>,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub support: Vec<u64>,
}

impl MetricReport {
    pub fn for_cell(mut self, strategy: impl Into<String>, k: usize, rng_seed: u64) -> Self {
        self.strategy = strategy.into();
        self.k = k;
        self.rng_seed = rng_seed;
        self
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-class precision, recall and F1, their macro and support-weighted
/// means, and accuracy. Any zero denominator yields 0.
pub fn compute_metrics(cm: &ConfusionMatrix) -> Result<MetricReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::EmptyConfusion);
    }
    let c = cm.classes();
    let mut precision = Vec::with_capacity(c);
    let mut recall = Vec::with_capacity(c);
    let mut f1 = Vec::with_capacity(c);
    let mut support = Vec::with_capacity(c);
    for k in 0..c {
        let tp = cm.get(k, k);
        let p = ratio(tp, cm.col_sum(k));
        let r = ratio(tp, cm.row_sum(k));
        precision.push(100.0 * p);
        recall.push(100.0 * r);
        f1.push(if p + r == 0.0 {
            0.0
        } else {
            100.0 * 2.0 * p * r / (p + r)
        });
        support.push(cm.row_sum(k));
    }
    let macro_f1 = f1.iter().sum::<f64>() / c as f64;
    let weighted_f1 = f1
        .iter()
        .zip(&support)
        .map(|(f, &s)| f * s as f64)
        .sum::<f64>()
        / total as f64;
    let trace: u64 = (0..c).map(|k| cm.get(k, k)).sum();
    Ok(MetricReport {
        strategy: String::new(),
        k: 0,
        rng_seed: 0,
        macro_f1,
        weighted_f1,
        accuracy: 100.0 * ratio(trace, total),
        per_class_f1: f1,
        precision,
        recall,
        support,
    })
}

/// Minimum number of insertions, deletions and substitutions turning `a`
/// into `b`.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let substitute = prev[j] + usize::from(x != y);
            cur[j + 1] = substitute.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotSummary {
    pub k: usize,
    pub seeds: usize,
    pub macro_f1: f64,
    pub weighted_f1: f64,
    pub accuracy: f64,
}

/// Mean at the largest shot count minus mean at the smallest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricDelta {
    pub from_k: usize,
    pub to_k: usize,
    pub macro_f1: f64,
    pub weighted_f1: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub strategy: String,
    /// One entry per shot count, ascending.
    pub shots: Vec<ShotSummary>,
    pub delta: Option<MetricDelta>,
}

impl AggregateReport {
    pub fn at(&self, k: usize) -> Option<&ShotSummary> {
        self.shots.iter().find(|s| s.k == k)
    }
}

/// Averages one strategy's reports over seeds for each shot count. With two
/// or more shot counts, also reports the difference of the means between the
/// largest and the smallest.
pub fn aggregate(reports: &[MetricReport]) -> Result<AggregateReport> {
    let first = reports.first().ok_or(Error::EmptyAggregate)?;
    let mut groups: BTreeMap<usize, Vec<&MetricReport>> = BTreeMap::new();
    for r in reports {
        if r.strategy != first.strategy {
            return Err(Error::MixedStrategies(
                first.strategy.clone(),
                r.strategy.clone(),
            ));
        }
        groups.entry(r.k).or_default().push(r);
    }
    let shots: Vec<ShotSummary> = groups
        .iter()
        .map(|(&k, group)| {
            let n = group.len() as f64;
            let mean = |f: fn(&MetricReport) -> f64| group.iter().map(|r| f(r)).sum::<f64>() / n;
            ShotSummary {
                k,
                seeds: group.len(),
                macro_f1: mean(|r| r.macro_f1),
                weighted_f1: mean(|r| r.weighted_f1),
                accuracy: mean(|r| r.accuracy),
            }
        })
        .collect();
    let delta = match (shots.first(), shots.last()) {
        (Some(lo), Some(hi)) if shots.len() > 1 => Some(MetricDelta {
            from_k: lo.k,
            to_k: hi.k,
            macro_f1: hi.macro_f1 - lo.macro_f1,
            weighted_f1: hi.weighted_f1 - lo.weighted_f1,
            accuracy: hi.accuracy - lo.accuracy,
        }),
        _ => None,
    };
    Ok(AggregateReport {
        strategy: first.strategy.clone(),
        shots,
        delta,
    })
}
