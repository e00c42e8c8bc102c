use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::DEFAULT_EDGES;
use crate::corpus::SynthConfig;
use crate::metrics::MetricKind;
use crate::model::ModelConfig;
use crate::search::Normalization;

use super::ExperimentError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum System {
    Baseline,
    Msr,
    Resample,
}

impl System {
    pub fn label(&self) -> &'static str {
        match self {
            System::Baseline => "baseline",
            System::Msr => "msr",
            System::Resample => "resample",
        }
    }
}

impl fmt::Display for System {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for System {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "baseline" => Ok(System::Baseline),
            "msr" => Ok(System::Msr),
            "resample" => Ok(System::Resample),
            _ => Err(format!("unknown system {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MsrSection {
    #[serde(default = "default_n")]
    pub max_sentences: usize,
    /// Output size as a multiple of the train split; ignored when `size` is set.
    #[serde(default = "default_multiplier")]
    pub multiplier: f64,
    #[serde(default)]
    pub size: Option<usize>,
    /// Extra MSR systems with these N, decoded under every normalization.
    #[serde(default)]
    pub sweep: Vec<usize>,
}

fn default_n() -> usize {
    4
}

fn default_multiplier() -> f64 {
    10.0
}

impl Default for MsrSection {
    fn default() -> Self {
        Self {
            max_sentences: default_n(),
            multiplier: default_multiplier(),
            size: None,
            sweep: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSection {
    #[serde(default = "default_widths")]
    pub widths: Vec<usize>,
    #[serde(default = "default_norms")]
    pub normalizations: Vec<Normalization>,
    #[serde(default = "default_a")]
    pub max_len_a: f64,
    #[serde(default = "default_b")]
    pub max_len_b: usize,
}

fn default_widths() -> Vec<usize> {
    vec![1, 2, 4, 8, 16, 32, 64, 128, 200]
}

fn default_norms() -> Vec<Normalization> {
    vec![Normalization::None, Normalization::ByLength(1.0)]
}

fn default_a() -> f64 {
    2.0
}

fn default_b() -> usize {
    10
}

impl Default for SearchSection {
    fn default() -> Self {
        Self {
            widths: default_widths(),
            normalizations: default_norms(),
            max_len_a: default_a(),
            max_len_b: default_b(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    #[serde(default = "default_metric")]
    pub metric: MetricKind,
    #[serde(default = "default_small")]
    pub small_width: usize,
    #[serde(default = "default_large")]
    pub large_width: usize,
    #[serde(default = "default_edges")]
    pub bucket_edges: Vec<usize>,
    #[serde(default = "default_hist")]
    pub histogram_bucket: usize,
}

fn default_metric() -> MetricKind {
    MetricKind::Bleu
}

fn default_small() -> usize {
    4
}

fn default_large() -> usize {
    200
}

fn default_edges() -> Vec<usize> {
    DEFAULT_EDGES.to_vec()
}

fn default_hist() -> usize {
    5
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            metric: default_metric(),
            small_width: default_small(),
            large_width: default_large(),
            bucket_edges: default_edges(),
            histogram_bucket: default_hist(),
        }
    }
}

/// Declarative description of one experiment. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Seeds resampling; the synthetic corpus has its own seed under `[synth]`.
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default = "default_systems")]
    pub systems: Vec<System>,
    #[serde(default)]
    pub synth: SynthConfig,
    #[serde(default)]
    pub msr: MsrSection,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub search: SearchSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
}

fn default_seed() -> u64 {
    1
}

fn default_systems() -> Vec<System> {
    vec![System::Baseline, System::Msr, System::Resample]
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: default_seed(),
            out: None,
            systems: default_systems(),
            synth: SynthConfig::default(),
            msr: MsrSection::default(),
            model: ModelConfig::default(),
            search: SearchSection::default(),
            analysis: AnalysisSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ExperimentError> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        let w = &self.search.widths;
        if w.is_empty() || w[0] == 0 || w.windows(2).any(|p| p[0] >= p[1]) {
            return bad(format!("search.widths must be strictly ascending and at least 1, got {w:?}"));
        }
        if self.search.normalizations.is_empty() {
            return bad("search.normalizations is empty".into());
        }
        if self.systems.is_empty() {
            return bad("systems is empty".into());
        }
        let mut seen = self.systems.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.systems.len() {
            return bad("systems lists a system twice".into());
        }
        for width in [self.analysis.small_width, self.analysis.large_width] {
            if !w.contains(&width) {
                return bad(format!("analysis width {width} is not among search.widths"));
            }
        }
        if self.analysis.small_width >= self.analysis.large_width {
            return bad("analysis.small_width must be below analysis.large_width".into());
        }
        if self.analysis.histogram_bucket == 0 {
            return bad("analysis.histogram_bucket must be at least 1".into());
        }
        let e = &self.analysis.bucket_edges;
        if e.first() == Some(&0) || e.windows(2).any(|p| p[0] >= p[1]) {
            return bad(format!("analysis.bucket_edges must be strictly ascending and positive, got {e:?}"));
        }
        if self.msr.max_sentences == 0 || self.msr.sweep.contains(&0) {
            return bad("MSR needs at least one sentence per example".into());
        }
        if self.msr.size.is_none() && !(self.msr.multiplier.is_finite() && self.msr.multiplier > 0.0) {
            return bad("msr.multiplier must be positive".into());
        }
        self.synth.validate().map_err(|e| ExperimentError::Config(e.to_string()))?;
        self.model.validate().map_err(|e| ExperimentError::Config(e.to_string()))?;
        Ok(())
    }
}

/// Hex SHA-256 of the raw config text.
pub fn config_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}
