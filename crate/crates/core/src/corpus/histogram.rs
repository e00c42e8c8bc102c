use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{ParallelCorpus, Sentence, Side};

/// Sentence-length histogram. `counts[k]` holds lengths in `[k·w, (k+1)·w)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthHistogram {
    pub bucket_width: usize,
    pub counts: Vec<usize>,
    /// Exact arithmetic mean of the lengths, not a bucket-midpoint estimate.
    pub mean: f64,
    pub total: usize,
}

impl LengthHistogram {
    pub fn from_lengths(lengths: impl IntoIterator<Item = usize>, bucket_width: usize) -> Self {
        assert!(bucket_width >= 1, "bucket width must be at least 1");
        let mut counts: Vec<usize> = Vec::new();
        let (mut sum, mut total) = (0usize, 0usize);
        for len in lengths {
            let k = len / bucket_width;
            if k >= counts.len() {
                counts.resize(k + 1, 0);
            }
            counts[k] += 1;
            sum += len;
            total += 1;
        }
        let mean = if total == 0 { 0.0 } else { sum as f64 / total as f64 };
        Self {
            bucket_width,
            counts,
            mean,
            total,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bucket_start,bucket_end,count\n");
        for (k, c) in self.counts.iter().enumerate() {
            let start = k * self.bucket_width;
            let _ = writeln!(out, "{},{},{}", start, start + self.bucket_width, c);
        }
        let _ = writeln!(out, "# mean={} total={}", self.mean, self.total);
        out
    }
}

pub fn length_histogram(corpus: &ParallelCorpus, side: Side, bucket_width: usize) -> LengthHistogram {
    LengthHistogram::from_lengths(corpus.side(side).map(Sentence::len), bucket_width)
}
