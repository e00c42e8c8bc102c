//! Decode output files.
//!
//! One line per (input, rank): `rank\tnormalized_score\tlogprob\ttokens`.
//! Ranks start at 1 for every input, so the rank-1 lines are the best
//! hypotheses in input order. The JSON variant carries the same fields.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{read_hypothesis_lines, CorpusError, Sentence, Vocabulary};
use crate::search::{DecodeResult, Hypothesis};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeRecord {
    pub input: usize,
    pub rank: usize,
    pub normalized_score: f64,
    pub logprob: f64,
    pub text: String,
}

impl DecodeRecord {
    fn new(input: usize, rank: usize, h: &Hypothesis, vocab: &Vocabulary) -> Self {
        Self {
            input,
            rank,
            normalized_score: h.normalized_score,
            logprob: h.logprob,
            text: vocab.decode(&h.tokens).to_string(),
        }
    }
}

/// Top-`nbest` records per input, in input order.
pub fn records(results: &[DecodeResult], vocab: &Vocabulary, nbest: usize) -> Vec<DecodeRecord> {
    results
        .iter()
        .enumerate()
        .flat_map(|(i, r)| {
            r.hypotheses
                .iter()
                .take(nbest.max(1))
                .enumerate()
                .map(move |(k, h)| DecodeRecord::new(i, k + 1, h, vocab))
        })
        .collect()
}

/// Records of the single best hypothesis per input.
pub fn best_records(best: &[Hypothesis], vocab: &Vocabulary) -> Vec<DecodeRecord> {
    best.iter().enumerate().map(|(i, h)| DecodeRecord::new(i, 1, h, vocab)).collect()
}

pub fn to_tsv(records: &[DecodeRecord]) -> String {
    let mut out = String::new();
    for r in records {
        let _ = writeln!(out, "{}\t{}\t{}\t{}", r.rank, r.normalized_score, r.logprob, r.text);
    }
    out
}

pub fn to_json(records: &[DecodeRecord]) -> String {
    let mut s = serde_json::to_string_pretty(records).expect("records serialize");
    s.push('\n');
    s
}

fn parse_tsv_line(line: &str) -> Option<(usize, &str)> {
    let mut fields = line.splitn(4, '\t');
    let rank = fields.next()?.parse::<usize>().ok()?;
    fields.next()?.parse::<f64>().ok()?;
    fields.next()?.parse::<f64>().ok()?;
    Some((rank, fields.next()?))
}

/// Reads best hypotheses from either a decode file (rank-1 lines) or plain
/// text with one hypothesis per line.
pub fn read_hypotheses(path: &Path) -> Result<Vec<Sentence>, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let lines: Vec<&str> = text.lines().collect();
    let parsed: Option<Vec<(usize, &str)>> = lines.iter().map(|l| parse_tsv_line(l)).collect();
    match parsed {
        Some(rows) if !rows.is_empty() => rows
            .into_iter()
            .filter(|(rank, _)| *rank == 1)
            .map(|(_, t)| Sentence::parse(t))
            .collect(),
        _ => read_hypothesis_lines(path),
    }
}
