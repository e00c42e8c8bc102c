use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::analysis::BucketReport;

/// CSV body prefixed with a `# config_sha256=` line.
pub fn tagged_csv(hash: &str, body: &str) -> String {
    format!("# config_sha256={hash}\n{body}")
}

#[derive(Serialize)]
struct Tagged<'a, T: Serialize> {
    config_hash: &'a str,
    #[serde(flatten)]
    data: &'a T,
}

/// Pretty JSON with a top-level `config_hash` field. `data` must serialize
/// as a map.
pub fn tagged_json<T: Serialize>(hash: &str, data: &T) -> String {
    let mut s = serde_json::to_string_pretty(&Tagged { config_hash: hash, data }).expect("report serializes");
    s.push('\n');
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketComparison {
    pub lo: usize,
    pub hi: Option<usize>,
    pub count: usize,
    pub score_small: Option<f64>,
    pub score_large: Option<f64>,
    /// small − large; positive means the large beam is worse.
    pub deficit: Option<f64>,
}

pub fn compare_buckets(small: &BucketReport, large: &BucketReport) -> Vec<BucketComparison> {
    small
        .buckets
        .iter()
        .zip(&large.buckets)
        .map(|(s, l)| BucketComparison {
            lo: s.lo,
            hi: s.hi,
            count: s.count,
            score_small: s.score,
            score_large: l.score,
            deficit: s.score.zip(l.score).map(|(a, b)| a - b),
        })
        .collect()
}

pub fn buckets_csv(rows: &[BucketComparison]) -> String {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut out = String::from("bucket_lo,bucket_hi,count,score_small,score_large,deficit\n");
    for r in rows {
        let hi = r.hi.map(|h| h.to_string()).unwrap_or_else(|| "inf".into());
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.lo,
            hi,
            r.count,
            opt(r.score_small),
            opt(r.score_large),
            opt(r.deficit)
        );
    }
    out
}
