//! Paired bootstrap resampling over test sentences.
//!
//! Both systems are scored on the same resampled index multiset; the p-value
//! is the fraction of resamples in which the overall winner does not win.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::bleu::{bleu_from_stats, BleuStats};
use super::{check_aligned, wer, MetricError, MetricKind};
use crate::corpus::Sentence;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub metric: MetricKind,
    pub n_resamples: usize,
    pub wins_a: usize,
    pub wins_b: usize,
    pub ties: usize,
    pub p_value: f64,
    pub seed: u64,
}

enum PerSentence {
    Bleu(Vec<BleuStats>),
    Wer(Vec<(usize, usize)>),
}

impl PerSentence {
    fn new(metric: MetricKind, hyps: &[Sentence], refs: &[Sentence]) -> Result<Self, MetricError> {
        Ok(match metric {
            MetricKind::Bleu => PerSentence::Bleu(hyps.iter().zip(refs).map(|(h, r)| BleuStats::from_pair(h, r)).collect()),
            MetricKind::Wer => PerSentence::Wer(
                hyps.iter()
                    .zip(refs)
                    .map(|(h, r)| wer(h, r).map(|w| (w.edits(), w.ref_len)))
                    .collect::<Result<_, _>>()?,
            ),
        })
    }

    fn score(&self, sample: &[usize]) -> f64 {
        match self {
            PerSentence::Bleu(stats) => {
                let mut acc = BleuStats::default();
                for &i in sample {
                    acc += stats[i];
                }
                bleu_from_stats(&acc).score
            }
            PerSentence::Wer(counts) => {
                let (e, r) = sample.iter().fold((0, 0), |(e, r), &i| (e + counts[i].0, r + counts[i].1));
                e as f64 / r as f64
            }
        }
    }
}

pub fn paired_bootstrap(
    hyps_a: &[Sentence],
    hyps_b: &[Sentence],
    refs: &[Sentence],
    metric: MetricKind,
    n_resamples: usize,
    seed: u64,
) -> Result<BootstrapResult, MetricError> {
    check_aligned(hyps_a.len(), refs.len())?;
    check_aligned(hyps_b.len(), refs.len())?;
    if n_resamples < 100 {
        return Err(MetricError::TooFewResamples(n_resamples));
    }
    let a = PerSentence::new(metric, hyps_a, refs)?;
    let b = PerSentence::new(metric, hyps_b, refs)?;
    let n = refs.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sample = vec![0usize; n];
    let (mut wins_a, mut wins_b, mut ties) = (0, 0, 0);
    for _ in 0..n_resamples {
        for slot in sample.iter_mut() {
            *slot = rng.random_range(0..n);
        }
        let (sa, sb) = (a.score(&sample), b.score(&sample));
        if metric.better(sa, sb) {
            wins_a += 1;
        } else if metric.better(sb, sa) {
            wins_b += 1;
        } else {
            ties += 1;
        }
    }
    Ok(BootstrapResult {
        metric,
        n_resamples,
        wins_a,
        wins_b,
        ties,
        p_value: 1.0 - wins_a.max(wins_b) as f64 / n_resamples as f64,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(n: usize) -> Vec<Sentence> {
        (0..n)
            .map(|i| Sentence::parse(&format!("w{} x{} y{} z{} q", i % 13, i % 7, i % 5, i % 3)).unwrap())
            .collect()
    }

    #[test]
    fn identical_systems_always_tie() {
        let refs = corpus(50);
        let hyps: Vec<Sentence> = refs.iter().map(|r| Sentence::new(r.tokens()[..3].to_vec()).unwrap()).collect();
        for metric in [MetricKind::Bleu, MetricKind::Wer] {
            let r = paired_bootstrap(&hyps, &hyps, &refs, metric, 200, 3).unwrap();
            assert_eq!(r.ties, 200);
            assert_eq!(r.p_value, 1.0);
        }
    }

    #[test]
    fn perfect_system_wins() {
        let refs = corpus(200);
        let mut worse = refs.clone();
        // every tenth sentence loses its last tokens
        for (i, h) in worse.iter_mut().enumerate() {
            if i % 10 == 0 {
                *h = Sentence::new(h.tokens()[..2].to_vec()).unwrap();
            }
        }
        let r = paired_bootstrap(&worse, &refs, &refs, MetricKind::Bleu, 1000, 9).unwrap();
        assert_eq!(r.wins_a + r.wins_b + r.ties, 1000);
        assert!(r.wins_b > r.wins_a);
        assert!(r.p_value < 0.05, "{r:?}");
        let w = paired_bootstrap(&worse, &refs, &refs, MetricKind::Wer, 1000, 9).unwrap();
        assert!(w.p_value < 0.05);
    }

    #[test]
    fn seeded_result_is_reproducible() {
        let refs = corpus(30);
        let hyps: Vec<Sentence> = refs.iter().rev().cloned().collect();
        let a = paired_bootstrap(&hyps, &refs, &refs, MetricKind::Bleu, 300, 5).unwrap();
        let b = paired_bootstrap(&hyps, &refs, &refs, MetricKind::Bleu, 300, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn input_validation() {
        let refs = corpus(5);
        assert!(matches!(
            paired_bootstrap(&refs[..4], &refs, &refs, MetricKind::Bleu, 100, 1),
            Err(MetricError::LengthMismatch { .. })
        ));
        assert_eq!(
            paired_bootstrap(&refs, &refs, &refs, MetricKind::Bleu, 99, 1).unwrap_err(),
            MetricError::TooFewResamples(99)
        );
    }
}
