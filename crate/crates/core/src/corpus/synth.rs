//! Synthetic length-biased translation task.
//!
//! Source tokens are drawn i.i.d. from a Zipf law over `vocab_size` types and
//! translated token-by-token through a fixed random bijection. Each split draws
//! its lengths independently, and the test split may use its own length law,
//! which is how a train/test length mismatch is set up.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Geometric, Poisson};
use serde::{Deserialize, Serialize};

use super::{CorpusError, ParallelCorpus, Sentence};

/// Distribution of sentence lengths in tokens (terminator included). Every law
/// has support on lengths ≥ 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum LengthLaw {
    /// Number of Bernoulli(p) trials up to and including the first success; mean 1/p.
    Geometric { p: f64 },
    /// 1 + failures before the r-th success; mean 1 + r(1−p)/p.
    NegativeBinomial { r: f64, p: f64 },
    /// Uniform on `lo..=hi`.
    Uniform { lo: usize, hi: usize },
}

impl LengthLaw {
    fn validate(&self) -> Result<(), CorpusError> {
        let ok = match *self {
            LengthLaw::Geometric { p } => p > 0.0 && p <= 1.0,
            LengthLaw::NegativeBinomial { r, p } => r > 0.0 && r.is_finite() && p > 0.0 && p <= 1.0,
            LengthLaw::Uniform { lo, hi } => lo >= 1 && lo <= hi,
        };
        if ok {
            Ok(())
        } else {
            Err(CorpusError::Config(format!("invalid length law {self:?}")))
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            LengthLaw::Geometric { p } => 1.0 / p,
            LengthLaw::NegativeBinomial { r, p } => 1.0 + r * (1.0 - p) / p,
            LengthLaw::Uniform { lo, hi } => (lo + hi) as f64 / 2.0,
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        match *self {
            LengthLaw::Geometric { p } => {
                1 + Geometric::new(p).expect("validated").sample(rng) as usize
            }
            LengthLaw::NegativeBinomial { r, p } => {
                if p >= 1.0 {
                    return 1;
                }
                let rate = Gamma::new(r, (1.0 - p) / p).expect("validated").sample(rng);
                if rate <= 0.0 {
                    return 1;
                }
                1 + Poisson::new(rate).expect("positive rate").sample(rng) as usize
            }
            LengthLaw::Uniform { lo, hi } => rng.random_range(lo..=hi),
        }
    }
}

fn default_terminator() -> Option<String> {
    Some(".".to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub vocab_size: usize,
    pub zipf_exponent: f64,
    pub length_law: LengthLaw,
    /// Overrides `length_law` for the test split only.
    #[serde(default)]
    pub test_length_law: Option<LengthLaw>,
    pub noise_prob: f64,
    pub train_size: usize,
    pub dev_size: usize,
    pub test_size: usize,
    pub seed: u64,
    /// Sentence-final token shared by both sides (maps to itself). It is the
    /// last of the `length` tokens; `None` disables it.
    #[serde(default = "default_terminator")]
    pub terminator: Option<String>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            vocab_size: 50,
            zipf_exponent: 1.1,
            length_law: LengthLaw::Geometric { p: 0.1 },
            test_length_law: None,
            noise_prob: 0.05,
            train_size: 2000,
            dev_size: 200,
            test_size: 500,
            seed: 1,
            terminator: default_terminator(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let bad = |m: &str| Err(CorpusError::Config(m.to_string()));
        if self.vocab_size < 2 {
            return bad("vocab_size must be at least 2");
        }
        if !(self.zipf_exponent.is_finite() && self.zipf_exponent >= 0.0) {
            return bad("zipf_exponent must be finite and non-negative");
        }
        if !(0.0..=1.0).contains(&self.noise_prob) {
            return bad("noise_prob must lie in [0, 1]");
        }
        if self.train_size == 0 || self.dev_size == 0 || self.test_size == 0 {
            return bad("split sizes must be at least 1");
        }
        if let Some(t) = &self.terminator {
            Sentence::new([t.as_str()])?;
            if is_generated_name(t) {
                return bad("terminator collides with generated token names");
            }
        }
        self.length_law.validate()?;
        if let Some(law) = &self.test_length_law {
            law.validate()?;
        }
        Ok(())
    }
}

fn is_generated_name(t: &str) -> bool {
    let mut chars = t.chars();
    matches!(chars.next(), Some('s') | Some('t')) && chars.as_str().parse::<usize>().is_ok()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSplits {
    pub train: ParallelCorpus,
    pub dev: ParallelCorpus,
    pub test: ParallelCorpus,
}

/// Fixed task shared by all splits: token names, Zipf CDF and dictionary.
struct Task {
    source: Vec<String>,
    target: Vec<String>,
    /// `dictionary[i]` is the target index that source type `i` translates to.
    dictionary: Vec<usize>,
    cdf: Vec<f64>,
}

impl Task {
    fn new(config: &SynthConfig) -> Self {
        let v = config.vocab_size;
        let mut cdf = Vec::with_capacity(v);
        let mut acc = 0.0;
        for rank in 1..=v {
            acc += (rank as f64).powf(-config.zipf_exponent);
            cdf.push(acc);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(0);
        let mut dictionary: Vec<usize> = (0..v).collect();
        dictionary.shuffle(&mut rng);
        Self {
            source: (0..v).map(|i| format!("s{i}")).collect(),
            target: (0..v).map(|i| format!("t{i}")).collect(),
            dictionary,
            cdf,
        }
    }

    fn draw_type<R: Rng>(&self, rng: &mut R) -> usize {
        let u = rng.random::<f64>() * self.cdf[self.cdf.len() - 1];
        self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1)
    }
}

fn generate_split(
    task: &Task,
    config: &SynthConfig,
    name: &str,
    size: usize,
    law: &LengthLaw,
    stream: u64,
) -> ParallelCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(stream);
    let v = config.vocab_size;
    let mut sides = Vec::with_capacity(size);
    for _ in 0..size {
        let len = law.sample(&mut rng);
        let content = if config.terminator.is_some() { len - 1 } else { len };
        let mut src = Vec::with_capacity(len);
        let mut tgt = Vec::with_capacity(len);
        for _ in 0..content {
            let ty = task.draw_type(&mut rng);
            src.push(task.source[ty].clone());
            let mut out = task.dictionary[ty];
            if config.noise_prob > 0.0 && rng.random::<f64>() < config.noise_prob {
                out = rng.random_range(0..v);
            }
            tgt.push(task.target[out].clone());
        }
        if let Some(term) = &config.terminator {
            src.push(term.clone());
            tgt.push(term.clone());
        }
        sides.push((
            Sentence::new(src).expect("generated tokens are valid"),
            Sentence::new(tgt).expect("generated tokens are valid"),
        ));
    }
    ParallelCorpus::from_sentences(name, sides).expect("generated sentences are non-empty")
}

/// Generates train/dev/test splits; a pure function of `config`.
pub fn generate_synthetic(config: &SynthConfig) -> Result<SynthSplits, CorpusError> {
    config.validate()?;
    let task = Task::new(config);
    let test_law = config.test_length_law.unwrap_or(config.length_law);
    Ok(SynthSplits {
        train: generate_split(&task, config, "train", config.train_size, &config.length_law, 1),
        dev: generate_split(&task, config, "dev", config.dev_size, &config.length_law, 2),
        test: generate_split(&task, config, "test", config.test_size, &test_law, 3),
    })
}

/// Maps a source sentence through the noise-free dictionary of `config`.
pub fn dictionary_image(config: &SynthConfig, source: &Sentence) -> Sentence {
    let task = Task::new(config);
    let toks: Vec<String> = source
        .iter()
        .map(|tok| {
            tok.strip_prefix('s')
                .and_then(|n| n.parse::<usize>().ok())
                .filter(|&i| i < task.source.len())
                .map(|i| task.target[task.dictionary[i]].clone())
                .unwrap_or_else(|| tok.to_string())
        })
        .collect();
    Sentence::new(toks).expect("valid tokens")
}
