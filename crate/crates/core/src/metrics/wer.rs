use serde::{Deserialize, Serialize};

use super::{check_aligned, MetricError};
use crate::corpus::Sentence;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct WerBreakdown {
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
    pub ref_len: usize,
    pub wer: f64,
}

impl WerBreakdown {
    pub fn edits(&self) -> usize {
        self.substitutions + self.insertions + self.deletions
    }
}

fn dp_table<T: PartialEq>(hyp: &[T], reference: &[T]) -> Vec<Vec<usize>> {
    let (n, m) = (reference.len(), hyp.len());
    let mut d = vec![vec![0usize; m + 1]; n + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=m {
        d[0][j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub = d[i - 1][j - 1] + usize::from(reference[i - 1] != hyp[j - 1]);
            d[i][j] = sub.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    d
}

/// Unit-cost Levenshtein distance.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    dp_table(a, b)[b.len()][a.len()]
}

/// Token-level WER. The backtrace prefers substitution (or match), then
/// deletion, then insertion, so the S/I/D split is deterministic.
pub fn wer(hyp: &Sentence, reference: &Sentence) -> Result<WerBreakdown, MetricError> {
    if reference.is_empty() {
        return Err(MetricError::EmptyReference);
    }
    let (h, r) = (hyp.tokens(), reference.tokens());
    let d = dp_table(h, r);
    let (mut i, mut j) = (r.len(), h.len());
    let mut out = WerBreakdown {
        ref_len: r.len(),
        ..Default::default()
    };
    while i > 0 || j > 0 {
        if i > 0 && j > 0 {
            let cost = usize::from(r[i - 1] != h[j - 1]);
            if d[i][j] == d[i - 1][j - 1] + cost {
                out.substitutions += cost;
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && d[i][j] == d[i - 1][j] + 1 {
            out.deletions += 1;
            i -= 1;
        } else {
            out.insertions += 1;
            j -= 1;
        }
    }
    debug_assert_eq!(out.edits(), d[r.len()][h.len()]);
    out.wer = out.edits() as f64 / r.len() as f64;
    Ok(out)
}

/// Micro-averaged breakdown: summed edits over summed reference lengths.
pub fn corpus_wer_breakdown(hyps: &[Sentence], refs: &[Sentence]) -> Result<WerBreakdown, MetricError> {
    check_aligned(hyps.len(), refs.len())?;
    let mut total = WerBreakdown::default();
    for (h, r) in hyps.iter().zip(refs) {
        let w = wer(h, r)?;
        total.substitutions += w.substitutions;
        total.insertions += w.insertions;
        total.deletions += w.deletions;
        total.ref_len += w.ref_len;
    }
    total.wer = total.edits() as f64 / total.ref_len as f64;
    Ok(total)
}

pub fn corpus_wer(hyps: &[Sentence], refs: &[Sentence]) -> Result<f64, MetricError> {
    corpus_wer_breakdown(hyps, refs).map(|b| b.wer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn s(t: &str) -> Sentence {
        Sentence::parse(t).unwrap()
    }

    #[test]
    fn identical_is_zero() {
        let w = wer(&s("a b c"), &s("a b c")).unwrap();
        assert_eq!(w.wer, 0.0);
        assert_eq!(w.edits(), 0);
    }

    #[test]
    fn empty_hypothesis_is_all_deletions() {
        let w = wer(&Sentence::empty(), &s("a b c d")).unwrap();
        assert_eq!(w.deletions, 4);
        assert_eq!(w.wer, 1.0);
    }

    #[test]
    fn one_substitution() {
        let w = wer(&s("a b c"), &s("a x c")).unwrap();
        assert_eq!((w.substitutions, w.insertions, w.deletions), (1, 0, 0));
        assert!((w.wer - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn insertions_can_exceed_one() {
        let w = wer(&s("a b c d e"), &s("a")).unwrap();
        assert_eq!(w.insertions, 4);
        assert_eq!(w.wer, 4.0);
    }

    #[test]
    fn empty_reference_rejected() {
        assert_eq!(wer(&s("a"), &Sentence::empty()).unwrap_err(), MetricError::EmptyReference);
    }

    #[test]
    fn tie_order_prefers_substitution() {
        // "a b" vs "b c": either 2 substitutions or 1 deletion + 1 insertion
        let w = wer(&s("b c"), &s("a b")).unwrap();
        assert_eq!(w.edits(), 2);
        assert_eq!(w.substitutions, 2);
    }

    #[test]
    fn corpus_micro_average() {
        let refs: Vec<Sentence> = (0..10).map(|i| s(&format!("w{i} a b c d e f g h i"))).collect();
        let mut hyps = refs.clone();
        hyps[3] = s("w3 a b c d e f g h x");
        assert!((corpus_wer(&hyps, &refs).unwrap() - 0.01).abs() < 1e-15);
        assert_eq!(corpus_wer(&refs, &refs).unwrap(), 0.0);
    }

    #[test]
    fn micro_differs_from_macro() {
        // lengths 1 and 9, one error in the short pair:
        // micro = 1/10, macro = (1/1 + 0/9)/2 = 0.5
        let refs = vec![s("a"), s("b c d e f g h i j")];
        let hyps = vec![s("z"), s("b c d e f g h i j")];
        let micro = corpus_wer(&hyps, &refs).unwrap();
        let macro_avg: f64 = hyps.iter().zip(&refs).map(|(h, r)| wer(h, r).unwrap().wer).sum::<f64>() / 2.0;
        assert!((micro - 0.1).abs() < 1e-15);
        assert!((macro_avg - 0.5).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn distance_is_symmetric(a in prop::collection::vec(0u8..4, 0..12), b in prop::collection::vec(0u8..4, 0..12)) {
            prop_assert_eq!(edit_distance(&a, &b), edit_distance(&b, &a));
        }
    }
}
