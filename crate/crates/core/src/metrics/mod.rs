//! BLEU, WER and paired bootstrap resampling.
//!
//! Metrics consume the corpus's own whitespace tokens; there is no internal
//! retokenization, so scores are comparable only within this crate.

mod bleu;
mod bootstrap;
mod wer;

pub use bleu::{bleu_from_stats, corpus_bleu, sentence_bleu, sentence_bleu_with, BleuBreakdown, BleuStats, Smoothing, MAX_ORDER};
pub use bootstrap::{paired_bootstrap, BootstrapResult};
pub use wer::{corpus_wer, corpus_wer_breakdown, edit_distance, wer, WerBreakdown};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Sentence;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("{hyps} hypotheses but {refs} references")]
    LengthMismatch { hyps: usize, refs: usize },
    #[error("no sentences to score")]
    Empty,
    #[error("reference is empty")]
    EmptyReference,
    #[error("bootstrap needs at least 100 resamples, got {0}")]
    TooFewResamples(usize),
    #[error("unknown metric {0:?} (expected bleu or wer)")]
    Unknown(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Bleu,
    Wer,
}

impl MetricKind {
    /// True when `a` is at least as good as `b` (BLEU: ≥, WER: ≤).
    pub fn at_least_as_good(&self, a: f64, b: f64) -> bool {
        match self {
            MetricKind::Bleu => a >= b,
            MetricKind::Wer => a <= b,
        }
    }

    pub fn better(&self, a: f64, b: f64) -> bool {
        match self {
            MetricKind::Bleu => a > b,
            MetricKind::Wer => a < b,
        }
    }

    /// Corpus-level score on a 0–100 scale (WER in percent).
    pub fn corpus_score(&self, hyps: &[Sentence], refs: &[Sentence]) -> Result<f64, MetricError> {
        match self {
            MetricKind::Bleu => corpus_bleu(hyps, refs).map(|b| b.score),
            MetricKind::Wer => corpus_wer(hyps, refs).map(|w| 100.0 * w),
        }
    }

    /// Sentence-level score on the same scale as [`MetricKind::corpus_score`].
    pub fn sentence_score(&self, hyp: &Sentence, reference: &Sentence) -> Result<f64, MetricError> {
        match self {
            MetricKind::Bleu => Ok(sentence_bleu(hyp, reference)),
            MetricKind::Wer => wer(hyp, reference).map(|w| 100.0 * w.wer),
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MetricKind::Bleu => "bleu",
            MetricKind::Wer => "wer",
        })
    }
}

impl FromStr for MetricKind {
    type Err = MetricError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bleu" | "sentence_bleu" => Ok(MetricKind::Bleu),
            "wer" => Ok(MetricKind::Wer),
            _ => Err(MetricError::Unknown(s.to_string())),
        }
    }
}

pub(crate) fn check_aligned(hyps: usize, refs: usize) -> Result<(), MetricError> {
    if hyps != refs {
        return Err(MetricError::LengthMismatch { hyps, refs });
    }
    if hyps == 0 {
        return Err(MetricError::Empty);
    }
    Ok(())
}
