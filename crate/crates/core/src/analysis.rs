//! Degradation analysis between a small and a large beam.
//!
//! Every test sentence falls in exactly one category, checked in order:
//! the large beam is at least as good ([`Category::Improved`]); the large-beam
//! hypothesis is a prefix of the small-beam one, ignoring one trailing "."
//! ([`Category::Prefix`], the early-EOS case); everything else
//! ([`Category::OtherDrop`]). A category's contribution is its metric change
//! weighted by its share of the test set.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Sentence;
use crate::metrics::{corpus_wer_breakdown, MetricError, MetricKind};

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("misaligned inputs: {0}")]
    Misaligned(String),
    #[error("bucket edges must be strictly ascending and positive: {0:?}")]
    BadEdges(Vec<usize>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Improved,
    Prefix,
    OtherDrop,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::Improved, Category::Prefix, Category::OtherDrop];

    pub fn label(&self) -> &'static str {
        match self {
            Category::Improved => "improved",
            Category::Prefix => "prefix",
            Category::OtherDrop => "other_drop",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// True iff `short`, minus at most one trailing ".", is a prefix of `long`.
pub fn is_prefix_modulo_eos(short: &Sentence, long: &Sentence) -> bool {
    let mut s = short.tokens();
    if let Some((last, rest)) = s.split_last() {
        if last == "." {
            s = rest;
        }
    }
    long.tokens().starts_with(s)
}

fn check3(a: usize, b: usize, c: usize) -> Result<(), AnalysisError> {
    if a != b || b != c {
        return Err(AnalysisError::Misaligned(format!("{a} small-beam, {b} large-beam, {c} references")));
    }
    Ok(())
}

pub fn classify(
    hyps_small: &[Sentence],
    hyps_large: &[Sentence],
    refs: &[Sentence],
    metric: MetricKind,
) -> Result<Vec<Category>, AnalysisError> {
    check3(hyps_small.len(), hyps_large.len(), refs.len())?;
    hyps_small
        .iter()
        .zip(hyps_large)
        .zip(refs)
        .map(|((small, large), r)| {
            let s = metric.sentence_score(small, r)?;
            let l = metric.sentence_score(large, r)?;
            Ok(if metric.at_least_as_good(l, s) {
                Category::Improved
            } else if is_prefix_modulo_eos(large, small) {
                Category::Prefix
            } else {
                Category::OtherDrop
            })
        })
        .collect()
}

/// Metric (or length) change from the small to the large beam, weighted by
/// the category's fraction of the test set.
pub fn contribution(small: f64, large: f64, fraction: f64) -> f64 {
    (large - small) * fraction
}

fn mean_len(sents: &[&Sentence]) -> Option<f64> {
    if sents.is_empty() {
        None
    } else {
        Some(sents.iter().map(|s| s.len()).sum::<usize>() as f64 / sents.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryRow {
    pub category: Category,
    pub count: usize,
    pub fraction: f64,
    /// Share of reference tokens; the exact weight for micro-averaged WER.
    pub ref_token_fraction: f64,
    pub metric_small: Option<f64>,
    pub metric_large: Option<f64>,
    pub mean_len_small: Option<f64>,
    pub mean_len_large: Option<f64>,
    pub contribution: f64,
    pub length_contribution: f64,
    pub token_weighted_contribution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WholeTest {
    pub metric_small: f64,
    pub metric_large: f64,
    pub mean_len_small: f64,
    pub mean_len_large: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryReport {
    pub metric: MetricKind,
    pub n_sentences: usize,
    pub rows: Vec<CategoryRow>,
    pub whole: WholeTest,
}

impl CategoryReport {
    pub fn row(&self, c: Category) -> &CategoryRow {
        self.rows.iter().find(|r| r.category == c).expect("all categories present")
    }

    pub fn to_csv(&self) -> String {
        let f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = String::from(
            "category,count,fraction,metric_small,metric_large,contribution,mean_len_small,mean_len_large,length_contribution\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.category,
                r.count,
                r.fraction,
                f(r.metric_small),
                f(r.metric_large),
                r.contribution,
                f(r.mean_len_small),
                f(r.mean_len_large),
                r.length_contribution
            );
        }
        let w = &self.whole;
        let _ = writeln!(
            out,
            "whole,{},1,{},{},{},{},{},{}",
            self.n_sentences,
            w.metric_small,
            w.metric_large,
            w.metric_large - w.metric_small,
            w.mean_len_small,
            w.mean_len_large,
            w.mean_len_large - w.mean_len_small
        );
        out
    }
}

pub fn category_report(
    categories: &[Category],
    hyps_small: &[Sentence],
    hyps_large: &[Sentence],
    refs: &[Sentence],
    metric: MetricKind,
) -> Result<CategoryReport, AnalysisError> {
    check3(hyps_small.len(), hyps_large.len(), refs.len())?;
    if categories.len() != refs.len() {
        return Err(AnalysisError::Misaligned(format!("{} categories for {} sentences", categories.len(), refs.len())));
    }
    let n = refs.len();
    let total_ref_tokens: usize = refs.iter().map(Sentence::len).sum();
    let mut rows = Vec::new();
    for cat in Category::ALL {
        let idx: Vec<usize> = (0..n).filter(|&i| categories[i] == cat).collect();
        let pick = |v: &[Sentence]| -> Vec<Sentence> { idx.iter().map(|&i| v[i].clone()).collect() };
        let (small, large, r) = (pick(hyps_small), pick(hyps_large), pick(refs));
        let fraction = if n == 0 { 0.0 } else { idx.len() as f64 / n as f64 };
        let ref_tokens: usize = r.iter().map(Sentence::len).sum();
        let ref_token_fraction = if total_ref_tokens == 0 { 0.0 } else { ref_tokens as f64 / total_ref_tokens as f64 };
        let (metric_small, metric_large) = if idx.is_empty() {
            (None, None)
        } else {
            (Some(metric.corpus_score(&small, &r)?), Some(metric.corpus_score(&large, &r)?))
        };
        let ms = mean_len(&small.iter().collect::<Vec<_>>());
        let ml = mean_len(&large.iter().collect::<Vec<_>>());
        let both = |a: Option<f64>, b: Option<f64>, w: f64| match (a, b) {
            (Some(a), Some(b)) => contribution(a, b, w),
            _ => 0.0,
        };
        rows.push(CategoryRow {
            category: cat,
            count: idx.len(),
            fraction,
            ref_token_fraction,
            metric_small,
            metric_large,
            mean_len_small: ms,
            mean_len_large: ml,
            contribution: both(metric_small, metric_large, fraction),
            length_contribution: both(ms, ml, fraction),
            token_weighted_contribution: both(metric_small, metric_large, ref_token_fraction),
        });
    }
    let whole = WholeTest {
        metric_small: metric.corpus_score(hyps_small, refs)?,
        metric_large: metric.corpus_score(hyps_large, refs)?,
        mean_len_small: mean_len(&hyps_small.iter().collect::<Vec<_>>()).unwrap_or(0.0),
        mean_len_large: mean_len(&hyps_large.iter().collect::<Vec<_>>()).unwrap_or(0.0),
    };
    Ok(CategoryReport {
        metric,
        n_sentences: n,
        rows,
        whole,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    /// Exclusive lower bound on reference length.
    pub lo: usize,
    /// Inclusive upper bound; `None` for the final open bucket.
    pub hi: Option<usize>,
    pub count: usize,
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketReport {
    pub metric: MetricKind,
    pub edges: Vec<usize>,
    pub buckets: Vec<Bucket>,
}

impl BucketReport {
    /// Index of the bucket holding a reference of length `len`.
    pub fn bucket_of(edges: &[usize], len: usize) -> usize {
        edges.partition_point(|&e| e < len)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bucket_lo,bucket_hi,count,score\n");
        for b in &self.buckets {
            let hi = b.hi.map(|h| h.to_string()).unwrap_or_else(|| "inf".into());
            let score = b.score.map(|s| s.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{},{},{}", b.lo, hi, b.count, score);
        }
        out
    }
}

pub const DEFAULT_EDGES: [usize; 6] = [10, 20, 30, 40, 50, 60];

/// Corpus metric per reference-length bucket `(prev_edge, edge]`, plus a final
/// open bucket past the last edge. Empty edges give one bucket for everything.
pub fn bucket_quality(
    hyps: &[Sentence],
    refs: &[Sentence],
    edges: &[usize],
    metric: MetricKind,
) -> Result<BucketReport, AnalysisError> {
    if hyps.len() != refs.len() {
        return Err(AnalysisError::Misaligned(format!("{} hypotheses for {} references", hyps.len(), refs.len())));
    }
    if edges.first() == Some(&0) || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(AnalysisError::BadEdges(edges.to_vec()));
    }
    let mut groups: Vec<(Vec<Sentence>, Vec<Sentence>)> = vec![(Vec::new(), Vec::new()); edges.len() + 1];
    for (h, r) in hyps.iter().zip(refs) {
        let g = &mut groups[BucketReport::bucket_of(edges, r.len())];
        g.0.push(h.clone());
        g.1.push(r.clone());
    }
    let mut buckets = Vec::with_capacity(groups.len());
    for (k, (h, r)) in groups.iter().enumerate() {
        buckets.push(Bucket {
            lo: if k == 0 { 0 } else { edges[k - 1] },
            hi: edges.get(k).copied(),
            count: r.len(),
            score: if r.is_empty() { None } else { Some(metric.corpus_score(h, r)?) },
        });
    }
    Ok(BucketReport {
        metric,
        edges: edges.to_vec(),
        buckets,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthRow {
    pub beam: usize,
    pub mean_len: f64,
    pub by_category: BTreeMap<Category, Option<f64>>,
}

/// Mean hypothesis length per beam, and per category when one is supplied.
pub fn length_report(hyps_by_beam: &BTreeMap<usize, Vec<Sentence>>, categories: Option<&[Category]>) -> Result<Vec<LengthRow>, AnalysisError> {
    let mut sizes = hyps_by_beam.values().map(Vec::len);
    if let Some(first) = sizes.next() {
        if sizes.any(|s| s != first) || categories.is_some_and(|c| c.len() != first) {
            return Err(AnalysisError::Misaligned("beams decoded different test sets".into()));
        }
    }
    Ok(hyps_by_beam
        .iter()
        .map(|(&beam, hyps)| {
            let by_category = categories
                .map(|cats| {
                    Category::ALL
                        .iter()
                        .map(|&c| {
                            let sel: Vec<&Sentence> = hyps.iter().zip(cats).filter(|(_, &k)| k == c).map(|(h, _)| h).collect();
                            (c, mean_len(&sel))
                        })
                        .collect()
                })
                .unwrap_or_default();
            LengthRow {
                beam,
                mean_len: mean_len(&hyps.iter().collect::<Vec<_>>()).unwrap_or(0.0),
                by_category,
            }
        })
        .collect())
}

/// Σ over categories of ref-token-weighted WER change; equals the corpus WER
/// change (percent) exactly, since micro-averaged WER is a token-weighted mean.
pub fn token_weighted_total(report: &CategoryReport) -> f64 {
    report.rows.iter().map(|r| r.token_weighted_contribution).sum()
}

/// Corpus WER change between two hypothesis sets, in percent.
pub fn wer_delta(hyps_small: &[Sentence], hyps_large: &[Sentence], refs: &[Sentence]) -> Result<f64, AnalysisError> {
    let s = corpus_wer_breakdown(hyps_small, refs)?;
    let l = corpus_wer_breakdown(hyps_large, refs)?;
    Ok(100.0 * (l.wer - s.wer))
}
