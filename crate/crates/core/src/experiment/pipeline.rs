use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{bucket_quality, category_report, classify, length_report, Category, CategoryReport, LengthRow};
use crate::augment::{msr, simple_resample, Augmented, MsrConfig, OutputSize};
use crate::corpus::{
    build_vocabulary, generate_synthetic, length_histogram, sentences_to_text, ParallelCorpus, Sentence, Side,
};
use crate::decoded;
use crate::io::write_atomic;
use crate::metrics::{corpus_bleu, corpus_wer};
use crate::model::{train_with_vocab, TransducerModel};
use crate::search::{beam_search_ids, BeamConfig, Hypothesis, Normalization};

use super::config::{config_hash, ExperimentConfig, System};
use super::report::{buckets_csv, compare_buckets, tagged_csv, tagged_json, BucketComparison};
use super::ExperimentError;

/// One trained system of the experiment grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub label: String,
    pub kind: System,
    /// MSR's N, for MSR systems.
    pub max_sentences: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub system: String,
    pub normalization: Normalization,
    pub width: usize,
    pub bleu: f64,
    pub wer: f64,
    pub mean_len: f64,
    pub empty_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryEntry {
    pub system: String,
    pub normalization: Normalization,
    pub small_width: usize,
    pub large_width: usize,
    pub report: CategoryReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketEntry {
    pub system: String,
    pub normalization: Normalization,
    pub small_width: usize,
    pub large_width: usize,
    pub buckets: Vec<BucketComparison>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSet {
    pub name: String,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifacts {
    pub corpora: Vec<CorpusSet>,
    pub models: Vec<String>,
    pub decodes: Vec<String>,
    pub reports: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    /// The input config text, verbatim.
    pub config: String,
    pub jobs: usize,
    pub started_unix: u64,
    pub finished_unix: u64,
    /// Paths relative to the output directory.
    pub artifacts: Artifacts,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub out_dir: PathBuf,
    pub config: ExperimentConfig,
    pub systems: Vec<SystemSpec>,
    pub curves: Vec<CurvePoint>,
    pub categories: Vec<CategoryEntry>,
    pub buckets: Vec<BucketEntry>,
    /// Most frequent train target length (smallest on ties).
    pub train_length_mode: usize,
    pub manifest: ExperimentManifest,
}

impl ExperimentOutcome {
    pub fn curve(&self, system: &str, normalization: Normalization, width: usize) -> Option<&CurvePoint> {
        self.curves
            .iter()
            .find(|c| c.system == system && c.normalization == normalization && c.width == width)
    }

    pub fn category(&self, system: &str, normalization: Normalization) -> Option<&CategoryEntry> {
        self.categories
            .iter()
            .find(|c| c.system == system && c.normalization == normalization)
    }

    pub fn bucket(&self, system: &str, normalization: Normalization) -> Option<&BucketEntry> {
        self.buckets
            .iter()
            .find(|c| c.system == system && c.normalization == normalization)
    }
}

fn now_unix() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn stage<T, E: std::fmt::Display>(name: &'static str, r: Result<T, E>) -> Result<T, ExperimentError> {
    r.map_err(|e| ExperimentError::Stage {
        stage: name,
        message: e.to_string(),
    })
}

struct Writer<'a> {
    root: &'a Path,
}

impl Writer<'_> {
    fn put(&self, rel: &str, text: &str) -> Result<String, std::io::Error> {
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        write_atomic(&path, text.as_bytes())?;
        Ok(rel.to_string())
    }
}

fn system_specs(config: &ExperimentConfig) -> Vec<SystemSpec> {
    let mut specs: Vec<SystemSpec> = config
        .systems
        .iter()
        .map(|&kind| SystemSpec {
            label: kind.label().to_string(),
            kind,
            max_sentences: (kind == System::Msr).then_some(config.msr.max_sentences),
        })
        .collect();
    for &n in &config.msr.sweep {
        specs.push(SystemSpec {
            label: format!("msr_n{n}"),
            kind: System::Msr,
            max_sentences: Some(n),
        });
    }
    specs
}

fn mode(lengths: impl Iterator<Item = usize>) -> usize {
    let mut counts = BTreeMap::new();
    for l in lengths {
        *counts.entry(l).or_insert(0usize) += 1;
    }
    let best = counts.values().copied().max().unwrap_or(0);
    counts.into_iter().find(|&(_, c)| c == best).map_or(0, |(l, _)| l)
}

fn curves_csv(points: &[CurvePoint]) -> String {
    let mut out = String::from("system,normalization,width,bleu,wer,mean_len,empty_fraction\n");
    for p in points {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            p.system, p.normalization, p.width, p.bleu, p.wer, p.mean_len, p.empty_fraction
        );
    }
    out
}

fn sweep_csv(points: &[CurvePoint], specs: &[SystemSpec]) -> String {
    let mut out = String::from("max_sentences,normalization,width,bleu,wer,mean_len\n");
    for spec in specs.iter().filter(|s| s.label.starts_with("msr_n")) {
        for p in points.iter().filter(|p| p.system == spec.label) {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                spec.max_sentences.unwrap_or(0),
                p.normalization,
                p.width,
                p.bleu,
                p.wer,
                p.mean_len
            );
        }
    }
    out
}

fn lengths_csv(rows: &[LengthRow]) -> String {
    let mut out = String::from("width,mean_len,improved,prefix,other_drop\n");
    for r in rows {
        let c = |k: Category| r.by_category.get(&k).copied().flatten().map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.beam,
            r.mean_len,
            c(Category::Improved),
            c(Category::Prefix),
            c(Category::OtherDrop)
        );
    }
    out
}

#[derive(Serialize)]
struct Rows<'a, T: Serialize> {
    rows: &'a [T],
}

/// Runs the whole grid and writes every artifact under `out_dir`. `jobs`
/// bounds worker threads (0 picks the number of cores); outputs do not depend
/// on it. On a stage failure a `failed/reason.json` marker is written next to
/// the partial outputs.
pub fn run_experiment(config_text: &str, out_dir: &Path, jobs: usize) -> Result<ExperimentOutcome, ExperimentError> {
    let config = ExperimentConfig::parse(config_text)?;
    std::fs::create_dir_all(out_dir).map_err(|source| ExperimentError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| ExperimentError::Config(e.to_string()))?;
    let result = pool.install(|| run_stages(&config, config_text, out_dir, jobs));
    if let Err(ExperimentError::Stage { stage, message }) = &result {
        let marker = serde_json::json!({ "stage": stage, "error": message });
        let w = Writer { root: out_dir };
        let _ = w.put("failed/reason.json", &format!("{marker:#}\n"));
    }
    result
}

fn run_stages(config: &ExperimentConfig, config_text: &str, out_dir: &Path, jobs: usize) -> Result<ExperimentOutcome, ExperimentError> {
    let started_unix = now_unix();
    let hash = config_hash(config_text);
    let w = Writer { root: out_dir };
    let specs = system_specs(config);
    let mut artifacts = Artifacts {
        corpora: Vec::new(),
        models: Vec::new(),
        decodes: Vec::new(),
        reports: Vec::new(),
    };
    let hb = config.analysis.histogram_bucket;

    // generate
    let splits = stage("generate", generate_synthetic(&config.synth))?;
    let mut files = Vec::new();
    for (name, corpus) in [("train", &splits.train), ("dev", &splits.dev), ("test", &splits.test)] {
        files.push(stage("generate", w.put(&format!("corpus/{name}.src"), &sentences_to_text(corpus.side(Side::Source))))?);
        files.push(stage("generate", w.put(&format!("corpus/{name}.tgt"), &sentences_to_text(corpus.side(Side::Target))))?);
    }
    artifacts.corpora.push(CorpusSet {
        name: "synthetic".into(),
        files,
    });
    for (name, corpus) in [("train", &splits.train), ("test", &splits.test)] {
        let h = length_histogram(corpus, Side::Target, hb);
        artifacts
            .reports
            .push(stage("generate", w.put(&format!("reports/histogram.{name}.csv"), &tagged_csv(&hash, &h.to_csv())))?);
    }
    let train_length_mode = mode(splits.train.side(Side::Target).map(Sentence::len));

    // augment
    let msr_size = match config.msr.size {
        Some(s) => OutputSize::Examples(s),
        None => OutputSize::Multiplier(config.msr.multiplier),
    };
    let resolved = stage("augment", msr_size.resolve(splits.train.len()))?;
    let mut train_sets: Vec<Option<Augmented>> = Vec::new();
    for spec in &specs {
        let aug = match spec.kind {
            System::Baseline => None,
            System::Msr => Some(stage(
                "augment",
                msr(
                    &splits.train,
                    &MsrConfig {
                        max_sentences: spec.max_sentences.unwrap_or(config.msr.max_sentences),
                        size: msr_size,
                        seed: config.seed,
                    },
                ),
            )?),
            System::Resample => Some(stage("augment", simple_resample(&splits.train, resolved, config.seed.wrapping_add(1)))?),
        };
        if let Some(a) = &aug {
            let base = format!("corpus/train.{}", spec.label);
            let files = vec![
                stage("augment", w.put(&format!("{base}.src"), &sentences_to_text(a.corpus.side(Side::Source))))?,
                stage("augment", w.put(&format!("{base}.tgt"), &sentences_to_text(a.corpus.side(Side::Target))))?,
                stage("augment", w.put(&format!("{base}.prov"), &a.provenance_text()))?,
            ];
            artifacts.corpora.push(CorpusSet {
                name: format!("train.{}", spec.label),
                files,
            });
            let h = length_histogram(&a.corpus, Side::Target, hb);
            artifacts.reports.push(stage(
                "augment",
                w.put(&format!("reports/histogram.train.{}.csv", spec.label), &tagged_csv(&hash, &h.to_csv())),
            )?);
        }
        train_sets.push(aug);
    }

    // train
    let sv = build_vocabulary(&splits.train, Side::Source, config.model.min_count);
    let tv = build_vocabulary(&splits.train, Side::Target, config.model.min_count);
    let models: Vec<TransducerModel> = stage(
        "train",
        train_sets
            .par_iter()
            .map(|aug| {
                let corpus: &ParallelCorpus = aug.as_ref().map_or(&splits.train, |a| &a.corpus);
                train_with_vocab(corpus, &config.model, sv.clone(), tv.clone())
            })
            .collect::<Result<Vec<_>, _>>(),
    )?;
    stage("train", std::fs::create_dir_all(out_dir.join("models")))?;
    for (spec, model) in specs.iter().zip(&models) {
        let rel = format!("models/{}.model", spec.label);
        stage("train", model.save(&out_dir.join(&rel)))?;
        artifacts.models.push(rel);
    }

    // decode: one beam run per (system, width, sentence), re-ranked per normalization
    let sources: Vec<Vec<u32>> = splits.test.pairs().iter().map(|p| sv.encode(&p.source)).collect();
    let refs: Vec<Sentence> = splits.test.targets();
    let widths = &config.search.widths;
    let norms = &config.search.normalizations;
    let n_sent = sources.len();
    let jobs_flat: Vec<(usize, usize, usize)> = (0..specs.len())
        .flat_map(|s| (0..widths.len()).flat_map(move |wi| (0..n_sent).map(move |i| (s, wi, i))))
        .collect();
    let best: Vec<Vec<Hypothesis>> = jobs_flat
        .par_iter()
        .map(|&(s, wi, i)| {
            let cfg = BeamConfig {
                width: widths[wi],
                normalization: Normalization::None,
                max_len_a: config.search.max_len_a,
                max_len_b: config.search.max_len_b,
            };
            let result = beam_search_ids(&models[s], &sources[i], &cfg);
            norms.iter().map(|&n| result.rerank(n).best().clone()).collect()
        })
        .collect();
    // hyps[s][norm][width] -> best hypotheses in test order
    let mut hyps: Vec<Vec<Vec<Vec<Sentence>>>> = vec![vec![vec![Vec::with_capacity(n_sent); widths.len()]; norms.len()]; specs.len()];
    let mut best_h: Vec<Vec<Vec<Vec<Hypothesis>>>> = vec![vec![vec![Vec::with_capacity(n_sent); widths.len()]; norms.len()]; specs.len()];
    for (&(s, wi, _), per_norm) in jobs_flat.iter().zip(best) {
        for (ni, h) in per_norm.into_iter().enumerate() {
            hyps[s][ni][wi].push(tv.decode(&h.tokens));
            best_h[s][ni][wi].push(h);
        }
    }
    for (s, spec) in specs.iter().enumerate() {
        for (ni, norm) in norms.iter().enumerate() {
            for (wi, width) in widths.iter().enumerate() {
                let rel = format!("decode/{}.{}.b{}.tsv", spec.label, norm.slug(), width);
                let text = decoded::to_tsv(&decoded::best_records(&best_h[s][ni][wi], &tv));
                artifacts.decodes.push(stage("decode", w.put(&rel, &text))?);
            }
        }
    }

    // evaluate
    let mut curves = Vec::new();
    for (s, spec) in specs.iter().enumerate() {
        for (ni, &normalization) in norms.iter().enumerate() {
            for (wi, &width) in widths.iter().enumerate() {
                let h = &hyps[s][ni][wi];
                curves.push(CurvePoint {
                    system: spec.label.clone(),
                    normalization,
                    width,
                    bleu: stage("evaluate", corpus_bleu(h, &refs))?.score,
                    wer: 100.0 * stage("evaluate", corpus_wer(h, &refs))?,
                    mean_len: h.iter().map(Sentence::len).sum::<usize>() as f64 / n_sent as f64,
                    empty_fraction: h.iter().filter(|x| x.is_empty()).count() as f64 / n_sent as f64,
                });
            }
        }
    }
    artifacts.reports.push(stage("evaluate", w.put("reports/curves.csv", &tagged_csv(&hash, &curves_csv(&curves))))?);
    artifacts
        .reports
        .push(stage("evaluate", w.put("reports/curves.json", &tagged_json(&hash, &Rows { rows: &curves })))?);
    if !config.msr.sweep.is_empty() {
        artifacts
            .reports
            .push(stage("evaluate", w.put("reports/sweep.csv", &tagged_csv(&hash, &sweep_csv(&curves, &specs))))?);
    }

    // analyze
    let a = &config.analysis;
    let si = widths.iter().position(|&x| x == a.small_width).expect("validated");
    let li = widths.iter().position(|&x| x == a.large_width).expect("validated");
    let mut categories = Vec::new();
    let mut buckets = Vec::new();
    for (s, spec) in specs.iter().enumerate() {
        for (ni, &normalization) in norms.iter().enumerate() {
            let tag = format!("{}.{}", spec.label, normalization.slug());
            let (small, large) = (&hyps[s][ni][si], &hyps[s][ni][li]);
            let cats = stage("analyze", classify(small, large, &refs, a.metric))?;
            let report = stage("analyze", category_report(&cats, small, large, &refs, a.metric))?;
            let entry = CategoryEntry {
                system: spec.label.clone(),
                normalization,
                small_width: a.small_width,
                large_width: a.large_width,
                report,
            };
            artifacts.reports.push(stage(
                "analyze",
                w.put(&format!("reports/categories.{tag}.csv"), &tagged_csv(&hash, &entry.report.to_csv())),
            )?);
            artifacts
                .reports
                .push(stage("analyze", w.put(&format!("reports/categories.{tag}.json"), &tagged_json(&hash, &entry)))?);
            categories.push(entry);

            let bs = stage("analyze", bucket_quality(small, &refs, &a.bucket_edges, a.metric))?;
            let bl = stage("analyze", bucket_quality(large, &refs, &a.bucket_edges, a.metric))?;
            let entry = BucketEntry {
                system: spec.label.clone(),
                normalization,
                small_width: a.small_width,
                large_width: a.large_width,
                buckets: compare_buckets(&bs, &bl),
            };
            artifacts.reports.push(stage(
                "analyze",
                w.put(&format!("reports/buckets.{tag}.csv"), &tagged_csv(&hash, &buckets_csv(&entry.buckets))),
            )?);
            artifacts
                .reports
                .push(stage("analyze", w.put(&format!("reports/buckets.{tag}.json"), &tagged_json(&hash, &entry)))?);
            buckets.push(entry);

            let by_beam: BTreeMap<usize, Vec<Sentence>> =
                widths.iter().enumerate().map(|(wi, &width)| (width, hyps[s][ni][wi].clone())).collect();
            let rows = stage("analyze", length_report(&by_beam, Some(&cats)))?;
            artifacts.reports.push(stage(
                "analyze",
                w.put(&format!("reports/lengths.{tag}.csv"), &tagged_csv(&hash, &lengths_csv(&rows))),
            )?);
        }
    }

    let manifest = ExperimentManifest {
        tool: "beamlab".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_hash: hash,
        config: config_text.to_string(),
        jobs,
        started_unix,
        finished_unix: now_unix(),
        artifacts,
    };
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    stage("manifest", w.put("manifest.json", &text))?;

    Ok(ExperimentOutcome {
        out_dir: out_dir.to_path_buf(),
        config: config.clone(),
        systems: specs,
        curves,
        categories,
        buckets,
        train_length_mode,
        manifest,
    })
}
