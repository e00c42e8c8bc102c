//! Count-based conditional model: a monotone lexical transducer interpolated
//! with a target-side n-gram prior.
//!
//! Target position t (1-based) is aligned to source position min(t, |x|), so
//! every step past the end of the source, the EOS step included, conditions on
//! the final source token. Both components are add-k smoothed over the output
//! symbol set V' (target tokens plus EOS, never BOS):
//!
//! ```text
//! p(y) = λ·(c_lex(x_a(t), y) + k_lex) / (T_x + k_lex·|V'|)
//!      + (1−λ)·(c_ng(ctx, y) + k_ng) / (C_ctx + k_ng·|V'|)
//! ```
//!
//! UNK belongs to V' only when the training targets produced UNK events.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{build_vocabulary, ParallelCorpus, Sentence, Side, TokenId, Vocabulary, BOS, EOS, UNK};
use crate::io::write_atomic;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "beamlab-model";

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("cannot train on an empty corpus")]
    EmptyCorpus,
    #[error("invalid hyperparameters: {0}")]
    Hyper(String),
    #[error("models with different vocabularies or hyperparameters cannot be merged")]
    Incompatible,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: corrupt model file: {reason}")]
    Corrupt { path: PathBuf, reason: String },
    #[error("{path}: model format version {found} is not supported (expected {expected})")]
    Version { path: PathBuf, found: u32, expected: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// n-gram order (context holds n−1 target ids).
    pub order: usize,
    pub add_k_lex: f64,
    pub add_k_ngram: f64,
    /// Weight of the lexical component.
    pub lambda: f64,
    /// Minimum token frequency for the vocabularies built by [`train`].
    #[serde(default = "one")]
    pub min_count: usize,
}

fn one() -> usize {
    1
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            order: 3,
            add_k_lex: 0.1,
            add_k_ngram: 0.1,
            lambda: 0.6,
            min_count: 1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::Hyper(m.to_string()));
        if self.order == 0 {
            return bad("order must be at least 1");
        }
        if !(self.add_k_lex > 0.0 && self.add_k_lex.is_finite()) || !(self.add_k_ngram > 0.0 && self.add_k_ngram.is_finite()) {
            return bad("add-k constants must be positive");
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad("lambda must lie in [0, 1]");
        }
        Ok(())
    }
}

/// Target-symbol counts under one conditioning event.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountRow {
    pub counts: BTreeMap<TokenId, u64>,
    pub total: u64,
}

impl CountRow {
    fn add(&mut self, y: TokenId, n: u64) {
        *self.counts.entry(y).or_default() += n;
        self.total += n;
    }

    fn absorb(&mut self, other: &CountRow) {
        for (&y, &c) in &other.counts {
            self.add(y, c);
        }
    }

    pub fn count(&self, y: TokenId) -> u64 {
        self.counts.get(&y).copied().unwrap_or(0)
    }
}

/// Source id → target-symbol counts.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LexTable {
    pub rows: BTreeMap<TokenId, CountRow>,
}

impl LexTable {
    pub fn row(&self, x: TokenId) -> Option<&CountRow> {
        self.rows.get(&x)
    }

    pub fn total(&self) -> u64 {
        self.rows.values().map(|r| r.total).sum()
    }
}

/// Context of n−1 target ids → next-symbol counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NGramTable {
    pub order: usize,
    pub rows: HashMap<Vec<TokenId>, CountRow>,
}

impl NGramTable {
    fn new(order: usize) -> Self {
        Self {
            order,
            rows: HashMap::new(),
        }
    }

    pub fn row(&self, context: &[TokenId]) -> Option<&CountRow> {
        self.rows.get(context)
    }

    pub fn total(&self) -> u64 {
        self.rows.values().map(|r| r.total).sum()
    }
}

/// Probability vector indexed by target id. BOS (and UNK when it is not an
/// output symbol) hold probability 0 and are excluded from [`Distribution::support`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Distribution {
    probs: Vec<f64>,
    emit_unk: bool,
}

impl Distribution {
    pub fn prob(&self, y: TokenId) -> f64 {
        self.probs.get(y as usize).copied().unwrap_or(0.0)
    }

    pub fn support(&self) -> impl Iterator<Item = (TokenId, f64)> + '_ {
        let emit_unk = self.emit_unk;
        self.probs
            .iter()
            .enumerate()
            .skip(1)
            .filter(move |&(i, _)| emit_unk || i as TokenId != UNK)
            .map(|(i, &p)| (i as TokenId, p))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }
}

/// Decoder-side conditioning: source ids, BOS-padded target context and the
/// 1-based position of the next target token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecoderState {
    pub source: Vec<TokenId>,
    pub context: Vec<TokenId>,
    pub position: usize,
}

impl DecoderState {
    pub fn initial(model: &TransducerModel, source: Vec<TokenId>) -> Self {
        Self {
            source,
            context: vec![BOS; model.config.order - 1],
            position: 1,
        }
    }

    pub fn advance(&mut self, y: TokenId) {
        if !self.context.is_empty() {
            self.context.remove(0);
            self.context.push(y);
        }
        self.position += 1;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransducerModel {
    pub config: ModelConfig,
    pub source_vocab: Vocabulary,
    pub target_vocab: Vocabulary,
    pub emit_unk: bool,
    pub lex: LexTable,
    pub ngram: NGramTable,
}

impl TransducerModel {
    /// A model with all counts zero.
    pub fn untrained(config: ModelConfig, source_vocab: Vocabulary, target_vocab: Vocabulary) -> Result<Self, ModelError> {
        config.validate()?;
        Ok(Self {
            ngram: NGramTable::new(config.order),
            config,
            source_vocab,
            target_vocab,
            emit_unk: false,
            lex: LexTable::default(),
        })
    }

    /// |V'|: target tokens plus EOS, minus BOS, minus UNK unless it is emitted.
    pub fn num_symbols(&self) -> usize {
        self.target_vocab.len() - 2 + usize::from(self.emit_unk)
    }

    /// Output symbols in id order.
    pub fn symbols(&self) -> impl Iterator<Item = TokenId> + '_ {
        (1..self.target_vocab.len() as TokenId).filter(move |&y| self.emit_unk || y != UNK)
    }

    fn count_pair(&mut self, x: &[TokenId], y: &[TokenId]) {
        let n = self.config.order;
        let mut padded = vec![BOS; n - 1];
        padded.extend_from_slice(y);
        padded.push(EOS);
        for t in 1..=y.len() + 1 {
            let sym = padded[n - 1 + t - 1];
            if sym == UNK {
                self.emit_unk = true;
            }
            if !x.is_empty() {
                let a = t.min(x.len());
                self.lex.rows.entry(x[a - 1]).or_default().add(sym, 1);
            }
            let ctx = &padded[t - 1..t - 1 + n - 1];
            match self.ngram.rows.get_mut(ctx) {
                Some(row) => row.add(sym, 1),
                None => {
                    let mut row = CountRow::default();
                    row.add(sym, 1);
                    self.ngram.rows.insert(ctx.to_vec(), row);
                }
            }
        }
    }

    /// Adds the counts of another model trained with identical vocabularies
    /// and hyperparameters.
    pub fn absorb(&mut self, other: &TransducerModel) -> Result<(), ModelError> {
        if self.config != other.config
            || self.source_vocab != other.source_vocab
            || self.target_vocab != other.target_vocab
        {
            return Err(ModelError::Incompatible);
        }
        self.emit_unk |= other.emit_unk;
        for (x, row) in &other.lex.rows {
            self.lex.rows.entry(*x).or_default().absorb(row);
        }
        for (ctx, row) in &other.ngram.rows {
            self.ngram.rows.entry(ctx.clone()).or_default().absorb(row);
        }
        Ok(())
    }

    fn context_into(&self, generated: &[TokenId], out: &mut Vec<TokenId>) {
        let need = self.config.order - 1;
        out.clear();
        let have = generated.len().min(need);
        out.extend(std::iter::repeat_n(BOS, need - have));
        out.extend_from_slice(&generated[generated.len() - have..]);
    }

    /// Fills `out` with p(· | source, position, context).
    pub fn fill_distribution(&self, source: &[TokenId], position: usize, context: &[TokenId], out: &mut Distribution) {
        let v = self.num_symbols() as f64;
        let (kl, kn, lam) = (self.config.add_k_lex, self.config.add_k_ngram, self.config.lambda);
        let lex_row = if source.is_empty() {
            None
        } else {
            self.lex.row(source[position.min(source.len()) - 1])
        };
        let ng_row = self.ngram.row(context);
        let lex_den = lex_row.map_or(0, |r| r.total) as f64 + kl * v;
        let ng_den = ng_row.map_or(0, |r| r.total) as f64 + kn * v;

        let len = self.target_vocab.len();
        out.emit_unk = self.emit_unk;
        out.probs.clear();
        out.probs.resize(len, 0.0);
        for y in self.symbols() {
            let cl = lex_row.map_or(0, |r| r.count(y)) as f64;
            let cn = ng_row.map_or(0, |r| r.count(y)) as f64;
            out.probs[y as usize] = lam * ((cl + kl) / lex_den) + (1.0 - lam) * ((cn + kn) / ng_den);
        }
    }

    /// Distribution given a prefix of generated target ids.
    pub fn fill_for_prefix(&self, source: &[TokenId], generated: &[TokenId], scratch: &mut Vec<TokenId>, out: &mut Distribution) {
        self.context_into(generated, scratch);
        self.fill_distribution(source, generated.len() + 1, scratch, out);
    }

    pub fn next_distribution(&self, state: &DecoderState) -> Distribution {
        let mut out = Distribution::default();
        self.fill_distribution(&state.source, state.position, &state.context, &mut out);
        out
    }

    pub fn encode_source(&self, source: &Sentence) -> Vec<TokenId> {
        self.source_vocab.encode(source)
    }

    /// Σ log p(y_t | state_t) over the target tokens followed by EOS.
    pub fn sequence_logprob_ids(&self, source: &[TokenId], target: &[TokenId]) -> f64 {
        let mut dist = Distribution::default();
        let mut scratch = Vec::new();
        let mut logprob = 0.0;
        for t in 0..=target.len() {
            self.fill_for_prefix(source, &target[..t], &mut scratch, &mut dist);
            let y = if t < target.len() { target[t] } else { EOS };
            logprob += dist.prob(y).ln();
        }
        logprob
    }

    pub fn sequence_logprob(&self, source: &Sentence, target: &Sentence) -> f64 {
        let x = self.encode_source(source);
        let y = self.target_vocab.encode(target);
        self.sequence_logprob_ids(&x, &y)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let file = ModelFile::from(self);
        let mut text = format!("{MAGIC} {FORMAT_VERSION}\n");
        text.push_str(&serde_json::to_string(&file).expect("model serializes"));
        text.push('\n');
        write_atomic(path, text.as_bytes()).map_err(|source| ModelError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let bytes = fs::read(path).map_err(|source| ModelError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let corrupt = |reason: String| ModelError::Corrupt {
            path: path.to_path_buf(),
            reason,
        };
        let text = String::from_utf8(bytes).map_err(|e| corrupt(e.to_string()))?;
        let (header, body) = text.split_once('\n').ok_or_else(|| corrupt("missing header".into()))?;
        let version = header
            .strip_prefix(MAGIC)
            .and_then(|v| v.trim().parse::<u32>().ok())
            .ok_or_else(|| corrupt(format!("bad header {header:?}")))?;
        if version != FORMAT_VERSION {
            return Err(ModelError::Version {
                path: path.to_path_buf(),
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let file: ModelFile = serde_json::from_str(body).map_err(|e| corrupt(e.to_string()))?;
        file.into_model().map_err(corrupt)
    }
}

pub fn train(corpus: &ParallelCorpus, config: &ModelConfig) -> Result<TransducerModel, ModelError> {
    if corpus.is_empty() {
        return Err(ModelError::EmptyCorpus);
    }
    let sv = build_vocabulary(corpus, Side::Source, config.min_count);
    let tv = build_vocabulary(corpus, Side::Target, config.min_count);
    train_with_vocab(corpus, config, sv, tv)
}

/// Trains with fixed vocabularies; tokens outside them count as UNK.
pub fn train_with_vocab(
    corpus: &ParallelCorpus,
    config: &ModelConfig,
    source_vocab: Vocabulary,
    target_vocab: Vocabulary,
) -> Result<TransducerModel, ModelError> {
    if corpus.is_empty() {
        return Err(ModelError::EmptyCorpus);
    }
    let mut model = TransducerModel::untrained(*config, source_vocab, target_vocab)?;
    for pair in corpus.pairs() {
        let x = model.source_vocab.encode(&pair.source);
        let y = model.target_vocab.encode(&pair.target);
        model.count_pair(&x, &y);
    }
    Ok(model)
}

/// Counts `shards` contiguous slices in parallel and merges them in order.
/// Counts are integers, so the result equals sequential training exactly.
pub fn train_sharded(corpus: &ParallelCorpus, config: &ModelConfig, shards: usize) -> Result<TransducerModel, ModelError> {
    if corpus.is_empty() {
        return Err(ModelError::EmptyCorpus);
    }
    let sv = build_vocabulary(corpus, Side::Source, config.min_count);
    let tv = build_vocabulary(corpus, Side::Target, config.min_count);
    let chunk = corpus.len().div_ceil(shards.max(1));
    let parts: Vec<TransducerModel> = corpus
        .pairs()
        .par_chunks(chunk)
        .map(|pairs| {
            let mut m = TransducerModel::untrained(*config, sv.clone(), tv.clone())?;
            for p in pairs {
                let x = m.source_vocab.encode(&p.source);
                let y = m.target_vocab.encode(&p.target);
                m.count_pair(&x, &y);
            }
            Ok(m)
        })
        .collect::<Result<_, ModelError>>()?;
    let mut model = TransducerModel::untrained(*config, sv, tv)?;
    for part in &parts {
        model.absorb(part)?;
    }
    Ok(model)
}

type SparseRow = Vec<(TokenId, u64)>;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format_version: u32,
    order: usize,
    add_k_lex: f64,
    add_k_ngram: f64,
    lambda: f64,
    min_count: usize,
    emit_unk: bool,
    source_vocab: Vocabulary,
    target_vocab: Vocabulary,
    lex: Vec<(TokenId, SparseRow)>,
    ngram: Vec<(Vec<TokenId>, SparseRow)>,
}

fn sparse(row: &CountRow) -> SparseRow {
    row.counts.iter().map(|(&y, &c)| (y, c)).collect()
}

fn dense(entries: SparseRow) -> CountRow {
    let mut row = CountRow::default();
    for (y, c) in entries {
        row.add(y, c);
    }
    row
}

impl From<&TransducerModel> for ModelFile {
    fn from(m: &TransducerModel) -> Self {
        let mut ngram: Vec<_> = m.ngram.rows.iter().map(|(k, r)| (k.clone(), sparse(r))).collect();
        ngram.sort_by(|a, b| a.0.cmp(&b.0));
        Self {
            format_version: FORMAT_VERSION,
            order: m.config.order,
            add_k_lex: m.config.add_k_lex,
            add_k_ngram: m.config.add_k_ngram,
            lambda: m.config.lambda,
            min_count: m.config.min_count,
            emit_unk: m.emit_unk,
            source_vocab: m.source_vocab.clone(),
            target_vocab: m.target_vocab.clone(),
            lex: m.lex.rows.iter().map(|(&x, r)| (x, sparse(r))).collect(),
            ngram,
        }
    }
}

impl ModelFile {
    fn into_model(self) -> Result<TransducerModel, String> {
        if self.format_version != FORMAT_VERSION {
            return Err(format!("body declares format version {}", self.format_version));
        }
        let config = ModelConfig {
            order: self.order,
            add_k_lex: self.add_k_lex,
            add_k_ngram: self.add_k_ngram,
            lambda: self.lambda,
            min_count: self.min_count,
        };
        let mut model = TransducerModel::untrained(config, self.source_vocab, self.target_vocab).map_err(|e| e.to_string())?;
        model.emit_unk = self.emit_unk;
        let tlen = model.target_vocab.len() as TokenId;
        let slen = model.source_vocab.len() as TokenId;
        let valid = |row: &SparseRow| row.iter().all(|&(y, _)| y != BOS && y < tlen);
        for (x, row) in self.lex {
            if x >= slen || !valid(&row) {
                return Err("lexical row references unknown ids".into());
            }
            model.lex.rows.insert(x, dense(row));
        }
        for (ctx, row) in self.ngram {
            if ctx.len() != config.order - 1 || ctx.iter().any(|&c| c >= tlen) || !valid(&row) {
                return Err("n-gram row is malformed".into());
            }
            model.ngram.rows.insert(ctx, dense(row));
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Sentence;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pair_corpus(pairs: &[(&str, &str)]) -> ParallelCorpus {
        ParallelCorpus::from_sentences(
            "m",
            pairs
                .iter()
                .map(|(s, t)| (Sentence::parse(s).unwrap(), Sentence::parse(t).unwrap())),
        )
        .unwrap()
    }

    fn cfg(order: usize, k: f64, lambda: f64) -> ModelConfig {
        ModelConfig {
            order,
            add_k_lex: k,
            add_k_ngram: k,
            lambda,
            min_count: 1,
        }
    }

    #[test]
    fn single_pair_counts() {
        let m = train(&pair_corpus(&[("a", "x")]), &cfg(2, 1.0, 0.5)).unwrap();
        let a = m.source_vocab.id("a").unwrap();
        let x = m.target_vocab.id("x").unwrap();
        let row = m.lex.row(a).unwrap();
        assert_eq!(row.count(x), 1);
        assert_eq!(row.count(EOS), 1);
        assert_eq!(m.ngram.row(&[BOS]).unwrap().count(x), 1);
        assert_eq!(m.ngram.row(&[x]).unwrap().count(EOS), 1);
        assert_eq!(m.num_symbols(), 2);
    }

    #[test]
    fn hand_computed_probability() {
        let m = train(&pair_corpus(&[("a", "x")]), &cfg(2, 1.0, 0.5)).unwrap();
        let state = DecoderState::initial(&m, m.encode_source(&Sentence::parse("a").unwrap()));
        let d = m.next_distribution(&state);
        let x = m.target_vocab.id("x").unwrap();
        // 0.5·(1+1)/(2+2) + 0.5·(1+1)/(1+2)
        assert!((d.prob(x) - 0.583_333_333_333_333_4).abs() < 1e-12);
        assert!((d.prob(EOS) - (0.5 * 2.0 / 4.0 + 0.5 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn untrained_is_uniform() {
        let tv = Vocabulary::from_tokens(["p", "q", "r"]);
        let m = TransducerModel::untrained(cfg(3, 0.1, 0.6), Vocabulary::from_tokens(["a"]), tv).unwrap();
        assert_eq!(m.num_symbols(), 4);
        let d = m.next_distribution(&DecoderState::initial(&m, vec![3]));
        for (_, p) in d.support() {
            assert!((p - 0.25).abs() < 1e-15);
        }
        let target = Sentence::parse("p q").unwrap();
        let lp = m.sequence_logprob(&Sentence::parse("a").unwrap(), &target);
        assert!((lp - 3.0 * 0.25f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn duplicated_corpus_doubles_counts() {
        let pairs = [("a b c", "x y z"), ("b", "y"), ("c a", "z z x")];
        let once = train(&pair_corpus(&pairs), &cfg(3, 0.1, 0.6)).unwrap();
        let doubled: Vec<_> = pairs.iter().chain(pairs.iter()).copied().collect();
        let twice = train(&pair_corpus(&doubled), &cfg(3, 0.1, 0.6)).unwrap();
        for (x, row) in &once.lex.rows {
            let r2 = &twice.lex.rows[x];
            assert_eq!(r2.total, 2 * row.total);
            for (y, c) in &row.counts {
                assert_eq!(r2.counts[y], 2 * c);
            }
        }
        for (ctx, row) in &once.ngram.rows {
            assert_eq!(twice.ngram.rows[ctx].total, 2 * row.total);
        }
    }

    #[test]
    fn total_lex_events() {
        let pairs = [("a b c", "x y z w"), ("b", "y"), ("c a", "z")];
        let m = train(&pair_corpus(&pairs), &ModelConfig::default()).unwrap();
        assert_eq!(m.lex.total(), (4 + 1) + (1 + 1) + (1 + 1));
        assert_eq!(m.ngram.total(), m.lex.total());
    }

    #[test]
    fn post_source_targets_hit_final_row() {
        let short = train(&pair_corpus(&[("a b", "x y")]), &ModelConfig::default()).unwrap();
        let long = train_with_vocab(
            &pair_corpus(&[("a b", "x y y y")]),
            &ModelConfig::default(),
            short.source_vocab.clone(),
            short.target_vocab.clone(),
        )
        .unwrap();
        let a = short.source_vocab.id("a").unwrap();
        let b = short.source_vocab.id("b").unwrap();
        assert_eq!(short.lex.rows[&a], long.lex.rows[&a]);
        assert_eq!(long.lex.rows[&b].total, short.lex.rows[&b].total + 2);
    }

    #[test]
    fn sharded_training_matches_sequential() {
        let pairs: Vec<(String, String)> = (0..57)
            .map(|i| (format!("a{} b{} c", i % 5, i % 3), format!("x{} y", i % 7)))
            .collect();
        let refs: Vec<(&str, &str)> = pairs.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        let c = pair_corpus(&refs);
        let seq = train(&c, &ModelConfig::default()).unwrap();
        for shards in [1, 2, 7, 64] {
            assert_eq!(train_sharded(&c, &ModelConfig::default(), shards).unwrap(), seq);
        }
    }

    #[test]
    fn unk_symbol_only_when_observed() {
        let c = pair_corpus(&[("a", "x y"), ("b", "x")]);
        let m = train(&c, &ModelConfig { min_count: 2, ..ModelConfig::default() }).unwrap();
        assert!(m.emit_unk);
        assert_eq!(m.num_symbols(), 3);
        let d = m.next_distribution(&DecoderState::initial(&m, vec![UNK]));
        assert!(d.prob(UNK) > 0.0);
        let plain = train(&c, &ModelConfig::default()).unwrap();
        assert!(!plain.emit_unk);
        assert_eq!(plain.num_symbols(), 3);
    }

    fn random_model(seed: u64) -> TransducerModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pairs: Vec<(String, String)> = (0..30)
            .map(|_| {
                let n = rng.random_range(1..6);
                let m = rng.random_range(1..7);
                let s: Vec<String> = (0..n).map(|_| format!("s{}", rng.random_range(0..6))).collect();
                let t: Vec<String> = (0..m).map(|_| format!("t{}", rng.random_range(0..8))).collect();
                (s.join(" "), t.join(" "))
            })
            .collect();
        let refs: Vec<(&str, &str)> = pairs.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        train(&pair_corpus(&refs), &cfg(1 + (seed as usize % 3), 0.05 + (seed % 4) as f64 * 0.3, 0.1 + (seed % 8) as f64 * 0.1)).unwrap()
    }

    #[test]
    fn distributions_normalize() {
        for seed in 0..20 {
            let m = random_model(seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            let symbols: Vec<TokenId> = m.symbols().filter(|&y| y != EOS).collect();
            for _ in 0..50 {
                let src: Vec<TokenId> = (0..rng.random_range(1..6))
                    .map(|_| rng.random_range(0..m.source_vocab.len() as TokenId))
                    .collect();
                let prefix: Vec<TokenId> = (0..rng.random_range(0..9))
                    .map(|_| symbols[rng.random_range(0..symbols.len())])
                    .collect();
                let mut d = Distribution::default();
                m.fill_for_prefix(&src, &prefix, &mut Vec::new(), &mut d);
                let sum: f64 = d.support().map(|(_, p)| p).sum();
                assert!((sum - 1.0).abs() < 1e-9, "sum {sum}");
                assert!(d.support().all(|(_, p)| p > 0.0));
                assert_eq!(d.prob(BOS), 0.0);
            }
        }
    }

    #[test]
    fn logprob_replays_stepwise() {
        let m = random_model(3);
        let src = m.encode_source(&Sentence::parse("s1 s2 s3").unwrap());
        let tgt = m.target_vocab.encode(&Sentence::parse("t1 t0 t5 t5").unwrap());
        let mut state = DecoderState::initial(&m, src.clone());
        let mut manual = 0.0;
        for &y in tgt.iter().chain(std::iter::once(&EOS)) {
            manual += m.next_distribution(&state).prob(y).ln();
            state.advance(y);
        }
        assert!((manual - m.sequence_logprob_ids(&src, &tgt)).abs() < 1e-12);
        assert!(manual <= 0.0);
    }

    #[test]
    fn save_load_round_trip_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.model");
        let m = random_model(5);
        m.save(&path).unwrap();
        let back = TransducerModel::load(&path).unwrap();
        assert_eq!(back, m);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let src: Vec<TokenId> = (0..rng.random_range(1..5)).map(|_| rng.random_range(3..m.source_vocab.len() as TokenId)).collect();
            let prefix: Vec<TokenId> = (0..rng.random_range(0..5)).map(|_| rng.random_range(3..m.target_vocab.len() as TokenId)).collect();
            let (mut d1, mut d2) = (Distribution::default(), Distribution::default());
            m.fill_for_prefix(&src, &prefix, &mut Vec::new(), &mut d1);
            back.fill_for_prefix(&src, &prefix, &mut Vec::new(), &mut d2);
            assert_eq!(d1.as_slice(), d2.as_slice());
        }
    }

    #[test]
    fn truncated_file_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.model");
        random_model(2).save(&path).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(TransducerModel::load(&path), Err(ModelError::Corrupt { .. })));
    }

    #[test]
    fn bumped_version_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.model");
        random_model(2).save(&path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        fs::write(&path, text.replacen("beamlab-model 1", "beamlab-model 2", 1)).unwrap();
        match TransducerModel::load(&path) {
            Err(ModelError::Version { found, expected, .. }) => assert_eq!((found, expected), (2, 1)),
            other => panic!("expected version error, got {other:?}"),
        }
    }

    #[test]
    fn bad_hyperparameters() {
        let c = pair_corpus(&[("a", "x")]);
        assert!(train(&c, &cfg(0, 0.1, 0.5)).is_err());
        assert!(train(&c, &cfg(2, 0.0, 0.5)).is_err());
        assert!(train(&c, &cfg(2, 0.1, 1.5)).is_err());
        assert!(matches!(train(&ParallelCorpus::default(), &ModelConfig::default()), Err(ModelError::EmptyCorpus)));
    }
}
