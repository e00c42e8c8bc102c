//! Multi-sentence resampling and the length-proportional resampling baseline.
//!
//! Each MSR example concatenates `n ~ U{1..N}` pairs drawn uniformly with
//! replacement from the original corpus, source to source and target to
//! target. The RNG stream is consumed in a fixed order (n, then the n pair
//! indices, example by example), so output depends only on (corpus, N, S, seed).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{ParallelCorpus, Sentence};

#[derive(Debug, Error, PartialEq)]
pub enum AugmentError {
    #[error("cannot resample an empty corpus")]
    EmptyCorpus,
    #[error("max sentences per example must be at least 1")]
    ZeroSentences,
    #[error("size multiplier must be positive and finite, got {0}")]
    BadMultiplier(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputSize {
    /// Output holds round(|D|·M) examples, halves rounded up.
    Multiplier(f64),
    Examples(usize),
}

impl OutputSize {
    pub fn resolve(&self, corpus_len: usize) -> Result<usize, AugmentError> {
        match *self {
            OutputSize::Examples(s) => Ok(s),
            OutputSize::Multiplier(m) => {
                if !(m.is_finite() && m > 0.0) {
                    return Err(AugmentError::BadMultiplier(m));
                }
                Ok((corpus_len as f64 * m + 0.5).floor() as usize)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MsrConfig {
    /// Maximum number of original pairs per example (N).
    pub max_sentences: usize,
    pub size: OutputSize,
    pub seed: u64,
}

/// A resampled corpus together with the original pair ids behind each example.
#[derive(Debug, Clone, PartialEq)]
pub struct Augmented {
    pub corpus: ParallelCorpus,
    pub provenance: Vec<Vec<usize>>,
}

impl Augmented {
    /// Sidecar text: one line per example, space-separated original ids.
    pub fn provenance_text(&self) -> String {
        let mut out = String::new();
        for ids in &self.provenance {
            let line: Vec<String> = ids.iter().map(usize::to_string).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }
}

fn build(corpus: &ParallelCorpus, name: String, provenance: Vec<Vec<usize>>) -> Augmented {
    let pairs = corpus.pairs();
    let sides = provenance.iter().map(|ids| {
        (
            Sentence::concat(ids.iter().map(|&i| &pairs[i].source)),
            Sentence::concat(ids.iter().map(|&i| &pairs[i].target)),
        )
    });
    let corpus = ParallelCorpus::from_sentences(name, sides).expect("concatenations of non-empty pairs");
    Augmented { corpus, provenance }
}

pub fn msr(corpus: &ParallelCorpus, config: &MsrConfig) -> Result<Augmented, AugmentError> {
    if corpus.is_empty() {
        return Err(AugmentError::EmptyCorpus);
    }
    if config.max_sentences == 0 {
        return Err(AugmentError::ZeroSentences);
    }
    let size = config.size.resolve(corpus.len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let d = corpus.len();
    let provenance: Vec<Vec<usize>> = (0..size)
        .map(|_| {
            let n = rng.random_range(1..=config.max_sentences);
            (0..n).map(|_| rng.random_range(0..d)).collect()
        })
        .collect();
    Ok(build(
        corpus,
        format!("{}.msr{}", corpus.name, config.max_sentences),
        provenance,
    ))
}

/// Draws `size` pairs with replacement, P(i) ∝ target length of pair i.
pub fn simple_resample(corpus: &ParallelCorpus, size: usize, seed: u64) -> Result<Augmented, AugmentError> {
    if corpus.is_empty() {
        return Err(AugmentError::EmptyCorpus);
    }
    let mut cumulative = Vec::with_capacity(corpus.len());
    let mut acc = 0u64;
    for p in corpus.pairs() {
        acc += p.target.len() as u64;
        cumulative.push(acc);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let provenance = (0..size)
        .map(|_| {
            let u = rng.random_range(0..acc);
            vec![cumulative.partition_point(|&c| c <= u)]
        })
        .collect();
    Ok(build(corpus, format!("{}.resample", corpus.name), provenance))
}

/// Mean example length after MSR for a corpus of mean length `mean_len`:
/// each n in 1..N is equally likely, so the mean is L·(N+1)/2.
pub fn expected_mean_length(mean_len: f64, max_sentences: usize) -> f64 {
    mean_len * (max_sentences as f64 + 1.0) / 2.0
}
