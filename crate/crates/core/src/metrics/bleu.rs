use std::collections::HashMap;
use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

use super::{check_aligned, MetricError};
use crate::corpus::Sentence;

pub const MAX_ORDER: usize = 4;

/// Sufficient statistics of one or more sentence pairs. Sums are associative,
/// so corpus BLEU is the BLEU of the summed per-sentence statistics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BleuStats {
    pub matches: [u64; MAX_ORDER],
    pub totals: [u64; MAX_ORDER],
    pub hyp_len: u64,
    pub ref_len: u64,
}

impl AddAssign for BleuStats {
    fn add_assign(&mut self, rhs: Self) {
        for n in 0..MAX_ORDER {
            self.matches[n] += rhs.matches[n];
            self.totals[n] += rhs.totals[n];
        }
        self.hyp_len += rhs.hyp_len;
        self.ref_len += rhs.ref_len;
    }
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], u64> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_default() += 1;
        }
    }
    counts
}

impl BleuStats {
    pub fn from_pair(hyp: &Sentence, reference: &Sentence) -> Self {
        let (h, r) = (hyp.tokens(), reference.tokens());
        let mut s = BleuStats {
            hyp_len: h.len() as u64,
            ref_len: r.len() as u64,
            ..Default::default()
        };
        for n in 1..=MAX_ORDER {
            let hc = ngram_counts(h, n);
            let rc = ngram_counts(r, n);
            s.totals[n - 1] = h.len().saturating_sub(n - 1) as u64;
            s.matches[n - 1] = hc
                .iter()
                .map(|(g, &c)| c.min(rc.get(g).copied().unwrap_or(0)))
                .sum();
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BleuBreakdown {
    /// Modified n-gram precisions p_1..p_4 (after smoothing for sentence BLEU).
    pub precisions: [f64; MAX_ORDER],
    /// min(1, e^{1−r/c}); 0 for an empty hypothesis side.
    pub brevity_penalty: f64,
    pub hyp_len: u64,
    pub ref_len: u64,
    pub score: f64,
}

fn brevity_penalty(hyp_len: u64, ref_len: u64) -> f64 {
    if hyp_len == 0 {
        0.0
    } else if hyp_len >= ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    }
}

/// Unsmoothed BLEU: any zero precision gives 0.
pub fn bleu_from_stats(stats: &BleuStats) -> BleuBreakdown {
    let mut precisions = [0.0; MAX_ORDER];
    for n in 0..MAX_ORDER {
        if stats.totals[n] > 0 {
            precisions[n] = stats.matches[n] as f64 / stats.totals[n] as f64;
        }
    }
    let bp = brevity_penalty(stats.hyp_len, stats.ref_len);
    let score = if precisions.contains(&0.0) {
        0.0
    } else {
        let mean_log = precisions.iter().map(|p| p.ln()).sum::<f64>() / MAX_ORDER as f64;
        100.0 * bp * mean_log.exp()
    };
    BleuBreakdown {
        precisions,
        brevity_penalty: bp,
        hyp_len: stats.hyp_len,
        ref_len: stats.ref_len,
        score,
    }
}

/// Single-reference corpus BLEU, max order 4, no smoothing.
pub fn corpus_bleu(hyps: &[Sentence], refs: &[Sentence]) -> Result<BleuBreakdown, MetricError> {
    check_aligned(hyps.len(), refs.len())?;
    let mut total = BleuStats::default();
    for (h, r) in hyps.iter().zip(refs) {
        total += BleuStats::from_pair(h, r);
    }
    Ok(bleu_from_stats(&total))
}

/// Sentence-level smoothing of zero-match precisions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothing {
    /// p_n := ε / total_n when no n-gram matches.
    Floor(f64),
}

impl Default for Smoothing {
    fn default() -> Self {
        Smoothing::Floor(0.01)
    }
}

/// Sentence BLEU with the default ε = 0.01 floor.
pub fn sentence_bleu(hyp: &Sentence, reference: &Sentence) -> f64 {
    sentence_bleu_with(hyp, reference, Smoothing::default()).score
}

/// Sentence BLEU over the orders the hypothesis actually has n-grams for
/// (a 2-token hypothesis is scored on p_1 and p_2 only).
pub fn sentence_bleu_with(hyp: &Sentence, reference: &Sentence, smoothing: Smoothing) -> BleuBreakdown {
    let stats = BleuStats::from_pair(hyp, reference);
    let Smoothing::Floor(eps) = smoothing;
    let mut precisions = [0.0; MAX_ORDER];
    let mut log_sum = 0.0;
    let mut orders = 0;
    for n in 0..MAX_ORDER {
        if stats.totals[n] == 0 {
            break;
        }
        let total = stats.totals[n] as f64;
        precisions[n] = if stats.matches[n] == 0 {
            eps / total
        } else {
            stats.matches[n] as f64 / total
        };
        log_sum += precisions[n].ln();
        orders += 1;
    }
    let bp = brevity_penalty(stats.hyp_len, stats.ref_len);
    let score = if orders == 0 || reference.is_empty() {
        0.0
    } else {
        100.0 * bp * (log_sum / orders as f64).exp()
    };
    BleuBreakdown {
        precisions,
        brevity_penalty: bp,
        hyp_len: stats.hyp_len,
        ref_len: stats.ref_len,
        score,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(t: &str) -> Sentence {
        Sentence::parse(t).unwrap()
    }

    #[test]
    fn identical_corpus_scores_100() {
        let refs = vec![s("the cat sat on the mat"), s("a b c d e")];
        let b = corpus_bleu(&refs, &refs).unwrap();
        assert!((b.score - 100.0).abs() < 1e-9);
        assert_eq!(b.brevity_penalty, 1.0);
        assert_eq!(b.precisions, [1.0; 4]);
    }

    #[test]
    fn empty_hypotheses_score_zero() {
        let refs = vec![s("a b c d"), s("e f")];
        let hyps = vec![Sentence::empty(), Sentence::empty()];
        assert_eq!(corpus_bleu(&hyps, &refs).unwrap().score, 0.0);
    }

    #[test]
    fn clipped_unigrams() {
        let b = corpus_bleu(&[s("the the the the")], &[s("the cat")]).unwrap();
        assert_eq!(b.precisions[0], 0.25);
        assert_eq!(b.precisions[1], 0.0);
        assert_eq!(b.score, 0.0);
    }

    #[test]
    fn mismatched_lengths_error() {
        assert_eq!(
            corpus_bleu(&[s("a")], &[s("a"), s("b")]).unwrap_err(),
            MetricError::LengthMismatch { hyps: 1, refs: 2 }
        );
    }

    #[test]
    fn sentence_floor_smoothing() {
        let b = sentence_bleu_with(&s("a b c d"), &s("a b c e"), Smoothing::Floor(0.01));
        assert_eq!(b.precisions, [0.75, 2.0 / 3.0, 0.5, 0.01]);
        // hand arithmetic: (0.75 · 2/3 · 0.5 · 0.01)^(1/4) = 0.0025^(1/4)
        let oracle = 100.0 * 0.0025f64.powf(0.25);
        assert!((b.score - oracle).abs() < 1e-9);
        assert!((b.score - 22.360_679_774_997_898).abs() < 1e-9);
    }

    #[test]
    fn sentence_identity_and_empty() {
        assert!((sentence_bleu(&s("x y z w"), &s("x y z w")) - 100.0).abs() < 1e-9);
        assert_eq!(sentence_bleu(&Sentence::empty(), &s("x y")), 0.0);
    }

    #[test]
    fn sentence_matches_corpus_when_unsmoothed() {
        let (h, r) = (s("a b c d e f"), s("a b c d e g h"));
        let c = corpus_bleu(&[h.clone()], &[r.clone()]).unwrap();
        assert!(c.score > 0.0);
        assert!((sentence_bleu(&h, &r) - c.score).abs() < 1e-12);
    }

    #[test]
    fn brevity_penalty_short_hypothesis() {
        let b = corpus_bleu(&[s("a b c d")], &[s("a b c d e f g h")]).unwrap();
        assert!((b.brevity_penalty - (1.0f64 - 2.0).exp()).abs() < 1e-12);
        assert!((b.score - 100.0 * (-1.0f64).exp()).abs() < 1e-9);
    }
}
