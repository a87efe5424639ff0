//! Time-aware filtered ranking evaluation and count exports.

use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{augment_reciprocal, group_targets, Quadruple, QueryKey, TargetIndex};
use crate::error::{Error, Result};
use crate::scoring::Model;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    Filtered,
    Raw,
}

impl fmt::Display for EvalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EvalMode::Filtered => "filtered",
            EvalMode::Raw => "raw",
        })
    }
}

impl FromStr for EvalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "filtered" => Ok(EvalMode::Filtered),
            "raw" => Ok(EvalMode::Raw),
            other => Err(Error::Config(format!("unknown eval mode `{other}` (expected filtered|raw)"))),
        }
    }
}

/// Every object known true for a `(s, p, t)` key across all splits,
/// reciprocal keys included.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FilterIndex(pub TargetIndex);

impl FilterIndex {
    /// `splits` are un-augmented; reciprocal twins are added here.
    pub fn build(splits: &[&[Quadruple]], num_relations: usize) -> Result<Self> {
        let mut all = Vec::new();
        for split in splits {
            all.extend(augment_reciprocal(split, num_relations)?);
        }
        Ok(Self(group_targets(&all)))
    }

    pub fn get(&self, key: &QueryKey) -> Option<&BTreeSet<usize>> {
        self.0.get(key)
    }
}

/// Rank of `true_o` under the mean tie policy, ignoring candidates in
/// `filter_out` (other than `true_o` itself).
pub fn rank_of(scores: &[f64], true_o: usize, filter_out: &BTreeSet<usize>) -> f64 {
    let target = scores[true_o];
    let mut higher = 0usize;
    let mut ties = 0usize;
    for (o, &s) in scores.iter().enumerate() {
        if o == true_o || filter_out.contains(&o) {
            continue;
        }
        if s > target {
            higher += 1;
        } else if s == target {
            ties += 1;
        }
    }
    1.0 + higher as f64 + ties as f64 / 2.0
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mrr: f64,
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
    pub num_queries: usize,
}

impl MetricSummary {
    /// Sums in slice order.
    pub fn from_ranks(ranks: &[f64]) -> Self {
        if ranks.is_empty() {
            return Self::default();
        }
        let n = ranks.len() as f64;
        let mut out = Self {
            num_queries: ranks.len(),
            ..Self::default()
        };
        for &r in ranks {
            out.mrr += 1.0 / r;
            out.hits1 += f64::from(u8::from(r <= 1.0));
            out.hits3 += f64::from(u8::from(r <= 3.0));
            out.hits10 += f64::from(u8::from(r <= 10.0));
        }
        out.mrr /= n;
        out.hits1 /= n;
        out.hits3 /= n;
        out.hits10 /= n;
        out
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PerDirection {
    /// `(s, p, ?, t)`
    pub tail: MetricSummary,
    /// `(?, p, o, t)`, asked as `(o, p^-1, ?, t)`.
    pub head: MetricSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingMetrics {
    pub split: String,
    pub mode: EvalMode,
    pub mrr: f64,
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
    pub num_queries: usize,
    pub per_direction: PerDirection,
}

impl RankingMetrics {
    pub fn summary(&self) -> MetricSummary {
        MetricSummary {
            mrr: self.mrr,
            hits1: self.hits1,
            hits3: self.hits3,
            hits10: self.hits10,
            num_queries: self.num_queries,
        }
    }
}

/// Ranks of every query of `quads` (un-augmented). Output order is
/// `[tail_0, head_0, tail_1, head_1, ...]`.
pub fn query_ranks(model: &Model, quads: &[Quadruple], filter: &FilterIndex, mode: EvalMode) -> Result<Vec<f64>> {
    let num_relations = model.shape.num_relations;
    let empty = BTreeSet::new();
    let per_quad: Vec<Result<[f64; 2]>> = quads
        .par_iter()
        .map(|q| {
            let tail = QueryKey { s: q.s, p: q.p, t: q.t };
            let head = QueryKey {
                s: q.o,
                p: q.p + num_relations,
                t: q.t,
            };
            let mut out = [0.0; 2];
            for (slot, (key, answer)) in out.iter_mut().zip([(tail, q.o), (head, q.s)]) {
                let known = filter.get(&key).ok_or(Error::MissingFilterKey {
                    s: key.s,
                    p: key.p,
                    t: key.t,
                })?;
                let scores = model.score_query(key)?;
                let filter_out = match mode {
                    EvalMode::Filtered => known,
                    EvalMode::Raw => &empty,
                };
                *slot = rank_of(scores.as_slice(), answer, filter_out);
            }
            Ok(out)
        })
        .collect();
    let mut ranks = Vec::with_capacity(quads.len() * 2);
    for r in per_quad {
        ranks.extend(r?);
    }
    Ok(ranks)
}

/// Filtered (or raw) MRR and Hits@{1,3,10} over both query directions.
/// Dropout is never applied and no randomness is consumed.
pub fn evaluate(
    model: &Model,
    quads: &[Quadruple],
    filter: &FilterIndex,
    mode: EvalMode,
    split: &str,
) -> Result<RankingMetrics> {
    let ranks = query_ranks(model, quads, filter, mode)?;
    let tail: Vec<f64> = ranks.iter().step_by(2).copied().collect();
    let head: Vec<f64> = ranks.iter().skip(1).step_by(2).copied().collect();
    let all = MetricSummary::from_ranks(&ranks);
    Ok(RankingMetrics {
        split: split.to_string(),
        mode,
        mrr: all.mrr,
        hits1: all.hits1,
        hits3: all.hits3,
        hits10: all.hits10,
        num_queries: all.num_queries,
        per_direction: PerDirection {
            tail: MetricSummary::from_ranks(&tail),
            head: MetricSummary::from_ranks(&head),
        },
    })
}

/// `counts[r][t]`: facts of original relation `r` at timestamp `t`.
/// Reciprocal relations are folded into their originals.
pub fn time_relation_counts(quads: &[Quadruple], num_relations: usize, num_timestamps: usize) -> Result<Vec<Vec<u64>>> {
    let mut counts = vec![vec![0u64; num_timestamps]; num_relations];
    for q in quads {
        let r = if q.p >= num_relations { q.p - num_relations } else { q.p };
        let row = counts.get_mut(r).ok_or_else(|| Error::IndexOutOfRange {
            what: "relation".into(),
            index: q.p,
            size: 2 * num_relations,
        })?;
        let cell = row.get_mut(q.t).ok_or_else(|| Error::IndexOutOfRange {
            what: "timestamp".into(),
            index: q.t,
            size: num_timestamps,
        })?;
        *cell += 1;
    }
    Ok(counts)
}

/// Per-timestamp totals (column sums of the heatmap).
pub fn time_concentration(counts: &[Vec<u64>], num_timestamps: usize) -> Vec<u64> {
    let mut totals = vec![0u64; num_timestamps];
    for row in counts {
        for (t, c) in totals.iter_mut().zip(row) {
            *t += c;
        }
    }
    totals
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::io(path, std::io::Error::other(format!("{other:?}"))),
    }
}

/// Heatmap CSV: header `relation,<label_0>,...`, one row per relation.
pub fn write_heatmap_csv<W: Write>(
    writer: W,
    counts: &[Vec<u64>],
    relation_names: &[String],
    column_labels: &[String],
) -> std::result::Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["relation".to_string()];
    header.extend(column_labels.iter().cloned());
    w.write_record(&header)?;
    for (name, row) in relation_names.iter().zip(counts) {
        let mut record = vec![name.clone()];
        record.extend(row.iter().map(u64::to_string));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

/// Concentration CSV: header `date,count`, one row per timestamp.
pub fn write_concentration_csv<W: Write>(
    writer: W,
    totals: &[u64],
    column_labels: &[String],
) -> std::result::Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["date", "count"])?;
    for (label, c) in column_labels.iter().zip(totals) {
        w.write_record([label.as_str(), &c.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn create(path: &Path) -> Result<std::fs::File> {
    std::fs::File::create(path).map_err(|e| Error::io(path, e))
}

pub fn export_time_relation_heatmap(
    path: &Path,
    quads: &[Quadruple],
    relation_names: &[String],
    column_labels: &[String],
) -> Result<Vec<Vec<u64>>> {
    let counts = time_relation_counts(quads, relation_names.len(), column_labels.len())?;
    write_heatmap_csv(create(path)?, &counts, relation_names, column_labels).map_err(|e| csv_error(path, e))?;
    Ok(counts)
}

pub fn export_time_concentration(
    path: &Path,
    quads: &[Quadruple],
    num_relations: usize,
    column_labels: &[String],
) -> Result<Vec<u64>> {
    let counts = time_relation_counts(quads, num_relations, column_labels.len())?;
    let totals = time_concentration(&counts, column_labels.len());
    write_concentration_csv(create(path)?, &totals, column_labels).map_err(|e| csv_error(path, e))?;
    Ok(totals)
}
