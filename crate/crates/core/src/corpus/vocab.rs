use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{ParallelCorpus, Sentence, Side};

pub type TokenId = u32;

pub const BOS: TokenId = 0;
pub const EOS: TokenId = 1;
pub const UNK: TokenId = 2;

pub const BOS_TOKEN: &str = "<s>";
pub const EOS_TOKEN: &str = "</s>";
pub const UNK_TOKEN: &str = "<unk>";

const RESERVED: [&str; 3] = [BOS_TOKEN, EOS_TOKEN, UNK_TOKEN];

/// Token ↔ id map with fixed reserved ids (BOS=0, EOS=1, UNK=2).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, TokenId>,
}

impl Vocabulary {
    /// A vocabulary holding only the reserved symbols.
    pub fn reserved_only() -> Self {
        Self::from_tokens(std::iter::empty::<String>())
    }

    /// Appends the given non-reserved tokens after the reserved ones, in order.
    /// Duplicates and reserved strings are skipped.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Vocabulary {
            tokens: RESERVED.iter().map(|s| s.to_string()).collect(),
            index: HashMap::new(),
        };
        for (i, t) in RESERVED.iter().enumerate() {
            v.index.insert(t.to_string(), i as TokenId);
        }
        for tok in tokens {
            let tok = tok.into();
            if !v.index.contains_key(&tok) {
                v.index.insert(tok.clone(), v.tokens.len() as TokenId);
                v.tokens.push(tok);
            }
        }
        v
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    /// Never true: the reserved symbols are always present.
    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    /// Unknown tokens map to UNK.
    pub fn id_or_unk(&self, token: &str) -> TokenId {
        self.id(token).unwrap_or(UNK)
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn encode(&self, sentence: &Sentence) -> Vec<TokenId> {
        sentence.iter().map(|t| self.id_or_unk(t)).collect()
    }

    /// Decodes ids back to a sentence. Reserved BOS/EOS ids are dropped.
    pub fn decode(&self, ids: &[TokenId]) -> Sentence {
        let toks: Vec<String> = ids
            .iter()
            .filter(|&&id| id != BOS && id != EOS)
            .map(|&id| self.token(id).unwrap_or(UNK_TOKEN).to_string())
            .collect();
        Sentence::new(toks).expect("vocabulary tokens are valid sentence tokens")
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

impl TryFrom<Vec<String>> for Vocabulary {
    type Error = String;

    fn try_from(tokens: Vec<String>) -> Result<Self, Self::Error> {
        if tokens.len() < RESERVED.len() || tokens[..RESERVED.len()] != RESERVED {
            return Err("vocabulary does not start with the reserved symbols".into());
        }
        let n = tokens.len();
        let v = Vocabulary::from_tokens(tokens.into_iter().skip(RESERVED.len()));
        if v.len() != n {
            return Err("vocabulary contains duplicate tokens".into());
        }
        Ok(v)
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

/// Tokens with frequency ≥ `min_count`, ordered by descending frequency and
/// then lexicographically.
pub fn build_vocabulary(corpus: &ParallelCorpus, side: Side, min_count: usize) -> Vocabulary {
    let mut freq: HashMap<&str, usize> = HashMap::new();
    for sent in corpus.side(side) {
        for tok in sent.iter() {
            *freq.entry(tok).or_default() += 1;
        }
    }
    let mut entries: Vec<(&str, usize)> = freq
        .into_iter()
        .filter(|&(t, c)| c >= min_count.max(1) && !RESERVED.contains(&t))
        .collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    Vocabulary::from_tokens(entries.into_iter().map(|(t, _)| t))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(targets: &[&str]) -> ParallelCorpus {
        ParallelCorpus::from_sentences(
            "t",
            targets
                .iter()
                .map(|t| (Sentence::parse("s").unwrap(), Sentence::parse(t).unwrap())),
        )
        .unwrap()
    }

    #[test]
    fn reserved_ids_fixed() {
        let v = Vocabulary::reserved_only();
        assert_eq!(v.id(BOS_TOKEN), Some(BOS));
        assert_eq!(v.id(EOS_TOKEN), Some(EOS));
        assert_eq!(v.id(UNK_TOKEN), Some(UNK));
        assert_eq!(v.len(), 3);
    }

    #[test]
    fn frequency_order() {
        let v = build_vocabulary(&corpus(&["a b", "a"]), Side::Target, 1);
        assert_eq!(v.id("a"), Some(3));
        assert_eq!(v.id("b"), Some(4));
    }

    #[test]
    fn min_count_prunes() {
        let v = build_vocabulary(&corpus(&["a b", "a"]), Side::Target, 2);
        assert_eq!(v.len(), 4);
        assert_eq!(v.id("b"), None);
        assert_eq!(v.id_or_unk("b"), UNK);
    }

    #[test]
    fn ties_are_lexicographic() {
        let v = build_vocabulary(&corpus(&["zeta alpha mid"]), Side::Target, 1);
        assert_eq!(&v.tokens()[3..], ["alpha", "mid", "zeta"]);
    }

    #[test]
    fn encode_decode() {
        let v = Vocabulary::from_tokens(["x", "y"]);
        let s = Sentence::parse("y q x").unwrap();
        let ids = v.encode(&s);
        assert_eq!(ids, vec![4, UNK, 3]);
        assert_eq!(v.decode(&ids).to_string(), "y <unk> x");
    }

    #[test]
    fn serde_rejects_missing_reserved() {
        let bad: Result<Vocabulary, _> = serde_json::from_str(r#"["a","b","c"]"#);
        assert!(bad.is_err());
        let good: Vocabulary = serde_json::from_str(r#"["<s>","</s>","<unk>","a"]"#).unwrap();
        assert_eq!(good.id("a"), Some(3));
    }
}
