//! Parallel text: sentences, aligned pairs, plain-text I/O and length statistics.
//!
//! Text is assumed to be pre-tokenized. A line is split on runs of whitespace
//! and written back with single spaces, so `load(save(c)) == c` holds for any
//! corpus whose tokens satisfy the [`Sentence`] invariants.

mod histogram;
mod synth;
mod vocab;

pub use histogram::{length_histogram, LengthHistogram};
pub use synth::{dictionary_image, generate_synthetic, LengthLaw, SynthConfig, SynthSplits};
pub use vocab::{build_vocabulary, TokenId, Vocabulary, BOS, BOS_TOKEN, EOS, EOS_TOKEN, UNK, UNK_TOKEN};

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::write_atomic;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line count mismatch: {source_path} has {source_lines} lines, {target_path} has {target_lines}")]
    Alignment {
        source_path: PathBuf,
        source_lines: usize,
        target_path: PathBuf,
        target_lines: usize,
    },
    #[error("{path}:{line}: blank line")]
    BlankLine { path: PathBuf, line: usize },
    #[error("invalid token {token:?}: {reason}")]
    InvalidToken { token: String, reason: &'static str },
    #[error("sentence pair {id} has an empty side")]
    EmptySide { id: usize },
    #[error("corpus is empty")]
    Empty,
    #[error("invalid synthetic config: {0}")]
    Config(String),
}

/// Which side of a parallel corpus an operation looks at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Source,
    Target,
}

/// An ordered list of whitespace-free tokens.
///
/// `Sentence` never contains the BOS/EOS markers; those live only inside the
/// model and the decoder. The empty sentence is a valid value (it is what an
/// EOS-only hypothesis decodes to) but corpora reject it.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Sentence(Vec<String>);

impl Sentence {
    pub fn new<I, S>(tokens: I) -> Result<Self, CorpusError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let tokens: Vec<String> = tokens.into_iter().map(Into::into).collect();
        for tok in &tokens {
            check_token(tok)?;
        }
        Ok(Self(tokens))
    }

    /// Splits a line on runs of whitespace.
    pub fn parse(line: &str) -> Result<Self, CorpusError> {
        Self::new(line.split_whitespace())
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }

    /// Token-sequence concatenation, no separator.
    pub fn concat<'a>(parts: impl IntoIterator<Item = &'a Sentence>) -> Sentence {
        Sentence(parts.into_iter().flat_map(|s| s.0.iter().cloned()).collect())
    }

    pub fn into_tokens(self) -> Vec<String> {
        self.0
    }
}

fn check_token(tok: &str) -> Result<(), CorpusError> {
    let reason = if tok.is_empty() {
        "empty token"
    } else if tok.chars().any(char::is_whitespace) {
        "contains whitespace"
    } else if tok == BOS_TOKEN || tok == EOS_TOKEN {
        "reserved marker"
    } else {
        return Ok(());
    };
    Err(CorpusError::InvalidToken {
        token: tok.to_string(),
        reason,
    })
}

impl TryFrom<Vec<String>> for Sentence {
    type Error = CorpusError;

    fn try_from(tokens: Vec<String>) -> Result<Self, Self::Error> {
        Sentence::new(tokens)
    }
}

impl From<Sentence> for Vec<String> {
    fn from(s: Sentence) -> Self {
        s.0
    }
}

impl fmt::Display for Sentence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join(" "))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentencePair {
    pub id: usize,
    pub source: Sentence,
    pub target: Sentence,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ParallelCorpus {
    pub name: String,
    pairs: Vec<SentencePair>,
}

impl ParallelCorpus {
    /// Builds a corpus and assigns ids `0..n` in order.
    pub fn from_sentences(
        name: impl Into<String>,
        sides: impl IntoIterator<Item = (Sentence, Sentence)>,
    ) -> Result<Self, CorpusError> {
        let mut pairs = Vec::new();
        for (id, (source, target)) in sides.into_iter().enumerate() {
            if source.is_empty() || target.is_empty() {
                return Err(CorpusError::EmptySide { id });
            }
            pairs.push(SentencePair { id, source, target });
        }
        Ok(Self {
            name: name.into(),
            pairs,
        })
    }

    pub fn pairs(&self) -> &[SentencePair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn side(&self, side: Side) -> impl Iterator<Item = &Sentence> {
        self.pairs.iter().map(move |p| match side {
            Side::Source => &p.source,
            Side::Target => &p.target,
        })
    }

    pub fn sources(&self) -> Vec<Sentence> {
        self.side(Side::Source).cloned().collect()
    }

    pub fn targets(&self) -> Vec<Sentence> {
        self.side(Side::Target).cloned().collect()
    }

    pub fn mean_length(&self, side: Side) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let total: usize = self.side(side).map(Sentence::len).sum();
        total as f64 / self.len() as f64
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>, CorpusError> {
    let io_err = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::open(path).map_err(io_err)?;
    BufReader::new(file)
        .lines()
        .collect::<Result<Vec<_>, _>>()
        .map_err(io_err)
}

/// Reads one sentence per line; blank lines are rejected.
pub fn read_sentences(path: &Path) -> Result<Vec<Sentence>, CorpusError> {
    read_lines(path)?
        .iter()
        .enumerate()
        .map(|(i, line)| {
            let s = Sentence::parse(line)?;
            if s.is_empty() {
                return Err(CorpusError::BlankLine {
                    path: path.to_path_buf(),
                    line: i + 1,
                });
            }
            Ok(s)
        })
        .collect()
}

/// Reads one sentence per line where blank lines are empty hypotheses.
pub fn read_hypothesis_lines(path: &Path) -> Result<Vec<Sentence>, CorpusError> {
    read_lines(path)?.iter().map(|l| Sentence::parse(l)).collect()
}

pub fn load_corpus(source_path: &Path, target_path: &Path) -> Result<ParallelCorpus, CorpusError> {
    let src = read_sentences(source_path)?;
    let tgt = read_sentences(target_path)?;
    if src.len() != tgt.len() {
        return Err(CorpusError::Alignment {
            source_path: source_path.to_path_buf(),
            source_lines: src.len(),
            target_path: target_path.to_path_buf(),
            target_lines: tgt.len(),
        });
    }
    let name = source_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    ParallelCorpus::from_sentences(name, src.into_iter().zip(tgt))
}

pub fn sentences_to_text<'a>(sentences: impl IntoIterator<Item = &'a Sentence>) -> String {
    let mut out = String::new();
    for s in sentences {
        out.push_str(&s.to_string());
        out.push('\n');
    }
    out
}

pub fn save_corpus(corpus: &ParallelCorpus, source_path: &Path, target_path: &Path) -> Result<(), CorpusError> {
    for (side, path) in [(Side::Source, source_path), (Side::Target, target_path)] {
        write_atomic(path, sentences_to_text(corpus.side(side)).as_bytes()).map_err(|source| {
            CorpusError::Io {
                path: path.to_path_buf(),
                source,
            }
        })?;
    }
    Ok(())
}
