//! Beam search with length normalization, and an exhaustive oracle.
//!
//! Survivors are chosen by raw log-probability; normalization only affects the
//! final ranking of finished hypotheses. At every step all expansions of the
//! live beam are ranked together. EOS expansions ranked inside the top `width`
//! are finalized, and the best `width` non-EOS expansions form the next beam.
//! Search stops once `width` hypotheses have finished or the length cap is
//! reached, in which case the live beam is finished with one EOS step.
//!
//! Ties are broken by higher log-probability, then the shorter sequence, then
//! lexicographic token ids. Beam and exact search share this order, which makes
//! them agree exactly at saturating width.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Sentence, TokenId, EOS};
use crate::model::{Distribution, TransducerModel};

#[derive(Debug, Error, PartialEq)]
pub enum SearchError {
    #[error("exhaustive search over {0} sequences exceeds the limit of {limit}", limit = EXACT_LIMIT)]
    TooLarge(u128),
    #[error("invalid normalization {0:?} (expected none, by_length:<alpha> or gnmt:<alpha>)")]
    BadNormalization(String),
    #[error("invalid beam config: {0}")]
    Config(String),
}

pub const EXACT_LIMIT: u128 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Normalization {
    #[default]
    None,
    /// logprob / length^α
    ByLength(f64),
    /// logprob · 6^α / (5 + length)^α
    Gnmt(f64),
}

impl Normalization {
    /// File-name friendly label, e.g. `by_length-1`.
    pub fn slug(&self) -> String {
        self.to_string().replace(':', "-")
    }
}

impl fmt::Display for Normalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Normalization::None => f.write_str("none"),
            Normalization::ByLength(a) => write!(f, "by_length:{a}"),
            Normalization::Gnmt(a) => write!(f, "gnmt:{a}"),
        }
    }
}

impl FromStr for Normalization {
    type Err = SearchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || SearchError::BadNormalization(s.to_string());
        let alpha = |a: &str| -> Result<f64, SearchError> {
            let v: f64 = a.parse().map_err(|_| bad())?;
            if v.is_finite() && v >= 0.0 {
                Ok(v)
            } else {
                Err(bad())
            }
        };
        match s.split_once(':') {
            None if s == "none" => Ok(Normalization::None),
            None if s == "by_length" => Ok(Normalization::ByLength(1.0)),
            Some(("by_length", a)) => Ok(Normalization::ByLength(alpha(a)?)),
            Some(("gnmt", a)) => Ok(Normalization::Gnmt(alpha(a)?)),
            _ => Err(bad()),
        }
    }
}

impl TryFrom<String> for Normalization {
    type Error = SearchError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Normalization> for String {
    fn from(n: Normalization) -> Self {
        n.to_string()
    }
}

/// `length` counts the EOS step.
pub fn normalize_score(logprob: f64, length: usize, normalization: Normalization) -> f64 {
    let len = length as f64;
    match normalization {
        Normalization::None => logprob,
        Normalization::ByLength(alpha) => logprob / len.powf(alpha),
        Normalization::Gnmt(alpha) => logprob * 6f64.powf(alpha) / (5.0 + len).powf(alpha),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamConfig {
    pub width: usize,
    #[serde(default)]
    pub normalization: Normalization,
    #[serde(default = "default_a")]
    pub max_len_a: f64,
    #[serde(default = "default_b")]
    pub max_len_b: usize,
}

fn default_a() -> f64 {
    2.0
}

fn default_b() -> usize {
    10
}

impl Default for BeamConfig {
    fn default() -> Self {
        Self {
            width: 5,
            normalization: Normalization::ByLength(1.0),
            max_len_a: default_a(),
            max_len_b: default_b(),
        }
    }
}

impl BeamConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        if self.width == 0 {
            return Err(SearchError::Config("width must be at least 1".into()));
        }
        if !(self.max_len_a.is_finite() && self.max_len_a >= 0.0) {
            return Err(SearchError::Config("max_len_a must be non-negative".into()));
        }
        if self.length_cap(1) == 0 {
            return Err(SearchError::Config("length cap must be at least 1".into()));
        }
        Ok(())
    }

    /// Maximum number of generated tokens: ⌈a·|x|⌉ + b.
    pub fn length_cap(&self, source_len: usize) -> usize {
        (self.max_len_a * source_len as f64).ceil() as usize + self.max_len_b
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    /// Target ids without the final EOS.
    pub tokens: Vec<TokenId>,
    /// Includes the EOS step once finished.
    pub logprob: f64,
    pub finished: bool,
    pub normalized_score: f64,
}

impl Hypothesis {
    fn finish(tokens: Vec<TokenId>, logprob: f64, normalization: Normalization) -> Self {
        let normalized_score = normalize_score(logprob, tokens.len() + 1, normalization);
        Self {
            tokens,
            logprob,
            finished: true,
            normalized_score,
        }
    }
}

/// Fixed tie-break: higher logprob, then shorter, then lexicographic ids.
pub fn tie_break(a_logprob: f64, a: &[TokenId], b_logprob: f64, b: &[TokenId]) -> Ordering {
    b_logprob
        .total_cmp(&a_logprob)
        .then_with(|| a.len().cmp(&b.len()))
        .then_with(|| a.cmp(b))
}

fn rank_order(a: &Hypothesis, b: &Hypothesis) -> Ordering {
    b.normalized_score
        .total_cmp(&a.normalized_score)
        .then_with(|| tie_break(a.logprob, &a.tokens, b.logprob, &b.tokens))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeResult {
    /// Finished hypotheses, best first under the configured normalization.
    pub hypotheses: Vec<Hypothesis>,
    pub width: usize,
    #[serde(skip)]
    pub elapsed: Duration,
}

impl DecodeResult {
    pub fn best(&self) -> &Hypothesis {
        &self.hypotheses[0]
    }

    /// Re-scores the finished set under another normalization. Survivor
    /// selection ignores normalization, so this equals decoding again.
    pub fn rerank(&self, normalization: Normalization) -> DecodeResult {
        let mut hypotheses: Vec<Hypothesis> = self
            .hypotheses
            .iter()
            .map(|h| Hypothesis::finish(h.tokens.clone(), h.logprob, normalization))
            .collect();
        hypotheses.sort_by(rank_order);
        DecodeResult {
            hypotheses,
            width: self.width,
            elapsed: self.elapsed,
        }
    }
}

struct Candidate {
    parent: usize,
    symbol: TokenId,
    logprob: f64,
}

/// Compares two expansions under the tie-break order without materializing
/// their token sequences. An EOS expansion's sequence is its parent's tokens.
fn candidate_order(live: &[(Vec<TokenId>, f64)], a: &Candidate, b: &Candidate) -> Ordering {
    b.logprob.total_cmp(&a.logprob).then_with(|| {
        let pa = &live[a.parent].0;
        let pb = &live[b.parent].0;
        let la = pa.len() + usize::from(a.symbol != EOS);
        let lb = pb.len() + usize::from(b.symbol != EOS);
        la.cmp(&lb).then_with(|| {
            let ia = pa.iter().copied().chain((a.symbol != EOS).then_some(a.symbol));
            let ib = pb.iter().copied().chain((b.symbol != EOS).then_some(b.symbol));
            ia.cmp(ib)
        })
    })
}

pub fn beam_search(model: &TransducerModel, source: &Sentence, config: &BeamConfig) -> DecodeResult {
    let ids = model.encode_source(source);
    beam_search_ids(model, &ids, config)
}

pub fn beam_search_ids(model: &TransducerModel, source: &[TokenId], config: &BeamConfig) -> DecodeResult {
    let start = Instant::now();
    let width = config.width.max(1);
    let cap = config.length_cap(source.len()).max(1);
    let norm = config.normalization;

    let mut live: Vec<(Vec<TokenId>, f64)> = vec![(Vec::new(), 0.0)];
    let mut finished: Vec<Hypothesis> = Vec::new();
    let mut dists: Vec<Distribution> = Vec::new();
    let mut scratch = Vec::new();
    let mut candidates: Vec<Candidate> = Vec::new();

    loop {
        if live.is_empty() {
            break;
        }
        let at_cap = live[0].0.len() >= cap;
        dists.resize_with(live.len(), Distribution::default);
        for ((tokens, _), dist) in live.iter().zip(dists.iter_mut()) {
            model.fill_for_prefix(source, tokens, &mut scratch, dist);
        }
        if at_cap {
            for ((tokens, lp), dist) in live.drain(..).zip(&dists) {
                let lp = lp + dist.prob(EOS).ln();
                finished.push(Hypothesis::finish(tokens, lp, norm));
            }
            break;
        }

        candidates.clear();
        for (parent, ((_, lp), dist)) in live.iter().zip(&dists).enumerate() {
            for (symbol, p) in dist.support() {
                candidates.push(Candidate {
                    parent,
                    symbol,
                    logprob: lp + p.ln(),
                });
            }
        }
        // At most `width` EOS expansions exist, so the top 2·width candidates
        // always contain enough non-EOS ones to refill the beam.
        let keep = (2 * width).min(candidates.len());
        if keep < candidates.len() {
            candidates.select_nth_unstable_by(keep - 1, |a, b| candidate_order(&live, a, b));
            candidates.truncate(keep);
        }
        candidates.sort_unstable_by(|a, b| candidate_order(&live, a, b));

        let mut next: Vec<(Vec<TokenId>, f64)> = Vec::with_capacity(width);
        for (rank, c) in candidates.iter().enumerate() {
            let parent = &live[c.parent].0;
            if c.symbol == EOS {
                if rank < width {
                    finished.push(Hypothesis::finish(parent.clone(), c.logprob, norm));
                }
            } else if next.len() < width {
                let mut toks = Vec::with_capacity(parent.len() + 1);
                toks.extend_from_slice(parent);
                toks.push(c.symbol);
                next.push((toks, c.logprob));
            }
        }
        live = next;
        if finished.len() >= width {
            break;
        }
    }

    finished.sort_by(rank_order);
    DecodeResult {
        hypotheses: finished,
        width,
        elapsed: start.elapsed(),
    }
}

/// Number of finished sequences with at most `max_len` tokens.
pub fn sequence_count(non_eos: usize, max_len: usize) -> u128 {
    let mut total: u128 = 0;
    let mut level: u128 = 1;
    for _ in 0..=max_len {
        total = total.saturating_add(level);
        level = level.saturating_mul(non_eos as u128);
    }
    total
}

/// Enumerates every sequence of at most `max_len` tokens and returns the
/// raw-logprob mode (normalization none).
pub fn exact_search(model: &TransducerModel, source: &Sentence, max_len: usize) -> Result<Hypothesis, SearchError> {
    let ids = model.encode_source(source);
    exact_search_ids(model, &ids, max_len)
}

pub fn exact_search_ids(model: &TransducerModel, source: &[TokenId], max_len: usize) -> Result<Hypothesis, SearchError> {
    let symbols: Vec<TokenId> = model.symbols().filter(|&y| y != EOS).collect();
    let count = sequence_count(symbols.len(), max_len);
    if count > EXACT_LIMIT {
        return Err(SearchError::TooLarge(count));
    }
    let mut best: Option<(Vec<TokenId>, f64)> = None;
    let mut prefix = Vec::with_capacity(max_len);
    let mut scratch = Vec::new();
    let mut dist = Distribution::default();
    dfs(model, source, max_len, &mut prefix, 0.0, &mut scratch, &mut dist, &mut best);
    let (tokens, logprob) = best.expect("at least the EOS-only sequence exists");
    Ok(Hypothesis::finish(tokens, logprob, Normalization::None))
}

#[allow(clippy::too_many_arguments)]
fn dfs(
    model: &TransducerModel,
    source: &[TokenId],
    max_len: usize,
    prefix: &mut Vec<TokenId>,
    logprob: f64,
    scratch: &mut Vec<TokenId>,
    dist: &mut Distribution,
    best: &mut Option<(Vec<TokenId>, f64)>,
) {
    model.fill_for_prefix(source, prefix, scratch, dist);
    let done = logprob + dist.prob(EOS).ln();
    let better = match best {
        None => true,
        Some((toks, lp)) => tie_break(done, prefix, *lp, toks) == Ordering::Less,
    };
    if better {
        *best = Some((prefix.clone(), done));
    }
    if prefix.len() == max_len {
        return;
    }
    let steps: Vec<(TokenId, f64)> = dist.support().filter(|&(y, _)| y != EOS).collect();
    for (y, p) in steps {
        prefix.push(y);
        dfs(model, source, max_len, prefix, logprob + p.ln(), scratch, dist, best);
        prefix.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ParallelCorpus, Vocabulary};
    use crate::model::{train, DecoderState, ModelConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn normalization_values() {
        assert_eq!(normalize_score(-10.0, 5, Normalization::None), -10.0);
        assert_eq!(normalize_score(-10.0, 5, Normalization::ByLength(1.0)), -2.0);
        let g = normalize_score(-10.0, 5, Normalization::Gnmt(0.6));
        let oracle = -10.0 * 0.6f64.powf(0.6);
        assert!((g - oracle).abs() < 1e-12);
        assert!((g - -7.360).abs() < 5e-4);
    }

    #[test]
    fn parse_normalizations() {
        assert_eq!("none".parse::<Normalization>().unwrap(), Normalization::None);
        assert_eq!("by_length:1".parse::<Normalization>().unwrap(), Normalization::ByLength(1.0));
        assert_eq!("gnmt:0.6".parse::<Normalization>().unwrap(), Normalization::Gnmt(0.6));
        assert!("gnmt:-1".parse::<Normalization>().is_err());
        assert!("length".parse::<Normalization>().is_err());
        assert_eq!(Normalization::ByLength(1.0).to_string(), "by_length:1");
    }

    fn random_tiny_model(rng: &mut ChaCha8Rng) -> TransducerModel {
        let n_tgt = rng.random_range(1..=4);
        let pairs: Vec<(Sentence, Sentence)> = (0..rng.random_range(1..8))
            .map(|_| {
                let s: Vec<String> = (0..rng.random_range(1..4)).map(|_| format!("a{}", rng.random_range(0..3))).collect();
                let t: Vec<String> = (0..rng.random_range(1..5)).map(|_| format!("b{}", rng.random_range(0..n_tgt))).collect();
                (Sentence::new(s).unwrap(), Sentence::new(t).unwrap())
            })
            .collect();
        let cfg = ModelConfig {
            order: rng.random_range(1..=3),
            add_k_lex: rng.random_range(0.05..1.0),
            add_k_ngram: rng.random_range(0.05..1.0),
            lambda: rng.random_range(0.0..1.0),
            min_count: 1,
        };
        train(&ParallelCorpus::from_sentences("tiny", pairs).unwrap(), &cfg).unwrap()
    }

    #[test]
    fn width_one_is_greedy() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let m = random_tiny_model(&mut rng);
            let src: Vec<TokenId> = (0..rng.random_range(1..4)).map(|_| rng.random_range(3..m.source_vocab.len() as TokenId)).collect();
            let cfg = BeamConfig {
                width: 1,
                normalization: Normalization::None,
                max_len_a: 0.0,
                max_len_b: 6,
            };
            let beam = beam_search_ids(&m, &src, &cfg);

            let mut state = DecoderState::initial(&m, src.clone());
            let (mut toks, mut lp) = (Vec::new(), 0.0);
            loop {
                let d = m.next_distribution(&state);
                if toks.len() == 6 {
                    lp += d.prob(EOS).ln();
                    break;
                }
                // argmax; ties go to EOS first, then the lowest id
                let (y, p) = d
                    .support()
                    .fold(None, |acc: Option<(TokenId, f64)>, (y, p)| match acc {
                        Some((_, bp)) if bp >= p => acc,
                        _ => Some((y, p)),
                    })
                    .unwrap();
                lp += p.ln();
                if y == EOS {
                    break;
                }
                toks.push(y);
                state.advance(y);
            }
            assert_eq!(beam.hypotheses.len(), 1);
            assert_eq!(beam.best().tokens, toks);
            assert_eq!(beam.best().logprob, lp);
        }
    }

    #[test]
    fn saturating_width_matches_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..40 {
            let m = random_tiny_model(&mut rng);
            let cap = 5;
            let src: Vec<TokenId> = (0..rng.random_range(1..4)).map(|_| rng.random_range(3..m.source_vocab.len() as TokenId)).collect();
            let exact = exact_search_ids(&m, &src, cap).unwrap();
            let width = sequence_count(m.num_symbols() - 1, cap) as usize;
            let cfg = BeamConfig {
                width,
                normalization: Normalization::None,
                max_len_a: 0.0,
                max_len_b: cap,
            };
            let beam = beam_search_ids(&m, &src, &cfg);
            assert_eq!(beam.best().tokens, exact.tokens);
            assert_eq!(beam.best().logprob, exact.logprob);
            for w in [1, 2, 3, 5, 8] {
                let small = beam_search_ids(&m, &src, &BeamConfig { width: w, ..cfg });
                assert!(small.best().logprob <= exact.logprob);
            }
        }
    }

    #[test]
    fn stored_logprobs_replay() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..20 {
            let m = random_tiny_model(&mut rng);
            let src: Vec<TokenId> = vec![3];
            for norm in [Normalization::None, Normalization::ByLength(1.0), Normalization::Gnmt(0.6)] {
                let cfg = BeamConfig {
                    width: 4,
                    normalization: norm,
                    max_len_a: 1.0,
                    max_len_b: 4,
                };
                let r = beam_search_ids(&m, &src, &cfg);
                for h in &r.hypotheses {
                    assert!((m.sequence_logprob_ids(&src, &h.tokens) - h.logprob).abs() < 1e-9);
                    assert_eq!(h.normalized_score, normalize_score(h.logprob, h.tokens.len() + 1, norm));
                    assert!(h.finished);
                }
                assert!(r.hypotheses.windows(2).all(|w| w[0].normalized_score >= w[1].normalized_score));
            }
        }
    }

    #[test]
    fn eos_dominant_model_yields_empty_mode() {
        // unigram prior with 90% of its mass on EOS, lexical part switched off
        let tv = Vocabulary::from_tokens(["x", "y"]);
        let sv = Vocabulary::from_tokens(["a"]);
        let mut m = TransducerModel::untrained(ModelConfig { lambda: 0.0, order: 1, ..ModelConfig::default() }, sv, tv).unwrap();
        m.ngram.rows.insert(vec![], {
            let mut r = crate::model::CountRow::default();
            r.counts.insert(EOS, 90);
            r.counts.insert(3, 5);
            r.counts.insert(4, 5);
            r.total = 100;
            r
        });
        let src = Sentence::parse("a").unwrap();
        let state = DecoderState::initial(&m, m.encode_source(&src));
        assert!(m.next_distribution(&state).prob(EOS) > 0.5);
        let h = exact_search(&m, &src, 4).unwrap();
        assert!(h.tokens.is_empty());
    }

    #[test]
    fn zero_max_len_returns_eos_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random_tiny_model(&mut rng);
        let h = exact_search_ids(&m, &[3], 0).unwrap();
        assert!(h.tokens.is_empty());
        assert_eq!(h.logprob, m.sequence_logprob_ids(&[3], &[]));
    }

    #[test]
    fn guard_rejects_large_instances() {
        let tv = Vocabulary::from_tokens((0..20).map(|i| format!("t{i}")));
        let m = TransducerModel::untrained(ModelConfig::default(), Vocabulary::from_tokens(["a"]), tv).unwrap();
        assert!(matches!(exact_search_ids(&m, &[3], 8), Err(SearchError::TooLarge(_))));
    }

    #[test]
    fn saturated_results_are_width_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let m = random_tiny_model(&mut rng);
        let cap = 4;
        let sat = sequence_count(m.num_symbols() - 1, cap) as usize;
        let cfg = |w| BeamConfig {
            width: w,
            normalization: Normalization::ByLength(1.0),
            max_len_a: 0.0,
            max_len_b: cap,
        };
        let a = beam_search_ids(&m, &[3], &cfg(sat));
        let b = beam_search_ids(&m, &[3], &cfg(sat * 3));
        assert_eq!(a.hypotheses, b.hypotheses);
    }

    #[test]
    fn rerank_equals_fresh_decode() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let m = random_tiny_model(&mut rng);
            let cfg = |normalization| BeamConfig {
                width: 3,
                normalization,
                max_len_a: 1.0,
                max_len_b: 3,
            };
            let plain = beam_search_ids(&m, &[3, 4], &cfg(Normalization::None));
            for norm in [Normalization::ByLength(1.0), Normalization::Gnmt(0.6)] {
                assert_eq!(plain.rerank(norm).hypotheses, beam_search_ids(&m, &[3, 4], &cfg(norm)).hypotheses);
            }
        }
    }

    #[test]
    fn cap_is_source_linear() {
        let c = BeamConfig::default();
        assert_eq!(c.length_cap(7), 24);
        let c = BeamConfig { max_len_a: 1.5, max_len_b: 0, ..c };
        assert_eq!(c.length_cap(3), 5);
        assert!(BeamConfig { width: 0, ..c }.validate().is_err());
    }
}
