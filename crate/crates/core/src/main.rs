use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use beamlab::analysis::{bucket_quality, category_report, classify, length_report, DEFAULT_EDGES};
use beamlab::augment::{msr, simple_resample, Augmented, MsrConfig, OutputSize};
use beamlab::corpus::{generate_synthetic, load_corpus, read_sentences, save_corpus, LengthHistogram, Sentence, SynthConfig};
use beamlab::decoded;
use beamlab::experiment::{run_experiment, ExperimentConfig, ExperimentError};
use beamlab::io::write_atomic;
use beamlab::metrics::{corpus_bleu, corpus_wer_breakdown, paired_bootstrap, MetricKind};
use beamlab::model::{train_sharded, ModelConfig, TransducerModel};
use beamlab::search::{beam_search_ids, BeamConfig, Normalization};

#[derive(Parser)]
#[command(name = "beamlab", version, about = "Beam-search length-bias experiments on synthetic translation tasks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Seed for every random step of the command.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores). Outputs do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Output directory.
    #[arg(long, global = true, env = "BEAMLAB_OUT")]
    out: Option<PathBuf>,
    /// TOML config file (synthetic task, model or experiment, per command).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic parallel task (train/dev/test splits).
    GenSynth,
    /// Resample a parallel corpus.
    Augment {
        #[command(subcommand)]
        method: AugmentMethod,
    },
    /// Train a count transducer.
    Train(TrainArgs),
    /// Beam-search decode a source file.
    Decode(DecodeArgs),
    /// Score hypotheses against references.
    Evaluate {
        #[command(subcommand)]
        what: EvaluateCommand,
    },
    /// Category, bucket, length and histogram analyses.
    Analyze {
        #[command(subcommand)]
        what: AnalyzeCommand,
    },
    /// Run a full experiment from `--config`.
    Experiment,
}

#[derive(Args)]
struct CorpusArgs {
    #[arg(long)]
    src: PathBuf,
    #[arg(long)]
    tgt: PathBuf,
}

#[derive(Args)]
struct SizeArgs {
    /// Output size as a multiple of the input size.
    #[arg(long, conflicts_with = "size")]
    multiplier: Option<f64>,
    /// Exact number of output examples.
    #[arg(long)]
    size: Option<usize>,
}

impl SizeArgs {
    fn output_size(&self) -> OutputSize {
        match (self.size, self.multiplier) {
            (Some(s), _) => OutputSize::Examples(s),
            (None, Some(m)) => OutputSize::Multiplier(m),
            (None, None) => OutputSize::Multiplier(1.0),
        }
    }
}

#[derive(Subcommand)]
enum AugmentMethod {
    /// Multi-sentence resampling.
    Msr {
        #[command(flatten)]
        corpus: CorpusArgs,
        /// Maximum number of pairs per example.
        #[arg(long, default_value_t = 4)]
        n: usize,
        #[command(flatten)]
        size: SizeArgs,
    },
    /// Resampling with probability proportional to target length.
    Resample {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        size: SizeArgs,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long)]
    order: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    add_k_lex: Option<f64>,
    #[arg(long)]
    add_k_ngram: Option<f64>,
    #[arg(long)]
    min_count: Option<usize>,
    /// Model file name inside the output directory.
    #[arg(long, default_value = "model.bin")]
    name: String,
}

#[derive(Args)]
struct DecodeArgs {
    #[arg(long)]
    model: PathBuf,
    /// Source sentences, one per line.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 5)]
    beam: usize,
    /// none, by_length:<alpha> or gnmt:<alpha>
    #[arg(long, default_value = "by_length:1")]
    norm: Normalization,
    #[arg(long, default_value_t = 1)]
    nbest: usize,
    #[arg(long, default_value_t = 2.0)]
    max_len_a: f64,
    #[arg(long, default_value_t = 10)]
    max_len_b: usize,
    /// Also write the JSON variant next to the TSV file.
    #[arg(long)]
    json: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Bleu,
    Wer,
}

impl From<MetricArg> for MetricKind {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Bleu => MetricKind::Bleu,
            MetricArg::Wer => MetricKind::Wer,
        }
    }
}

#[derive(Args)]
struct ScoreArgs {
    /// Hypotheses: plain text or a decode file.
    #[arg(long)]
    hyps: PathBuf,
    #[arg(long)]
    refs: PathBuf,
    /// Also write the report to this file.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum EvaluateCommand {
    Bleu(ScoreArgs),
    Wer(ScoreArgs),
    /// Paired bootstrap significance of system A against system B.
    Bootstrap {
        #[arg(long)]
        hyps_a: PathBuf,
        #[arg(long)]
        hyps_b: PathBuf,
        #[arg(long)]
        refs: PathBuf,
        #[arg(long, value_enum, default_value = "bleu")]
        metric: MetricArg,
        #[arg(long, default_value_t = 1000)]
        resamples: usize,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum AnalyzeCommand {
    /// Improved / prefix / other-drop breakdown between two beams.
    Categories {
        #[arg(long)]
        small: PathBuf,
        #[arg(long)]
        large: PathBuf,
        #[arg(long)]
        refs: PathBuf,
        #[arg(long, value_enum, default_value = "bleu")]
        metric: MetricArg,
        #[arg(long)]
        csv: bool,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Corpus metric per reference-length bucket.
    Buckets {
        #[arg(long)]
        hyps: PathBuf,
        #[arg(long)]
        refs: PathBuf,
        /// Comma-separated ascending edges.
        #[arg(long, value_delimiter = ',')]
        edges: Option<Vec<usize>>,
        #[arg(long, value_enum, default_value = "bleu")]
        metric: MetricArg,
        #[arg(long)]
        csv: bool,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Mean hypothesis length per beam, e.g. `--hyps 4=b4.tsv --hyps 200=b200.tsv`.
    Lengths {
        #[arg(long, value_parser = parse_beam_file, required = true)]
        hyps: Vec<(usize, PathBuf)>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Length histogram of a text file.
    Histogram {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 5)]
        bucket: usize,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn parse_beam_file(s: &str) -> Result<(usize, PathBuf), String> {
    let (w, p) = s.split_once('=').ok_or("expected WIDTH=PATH")?;
    let w = w.parse::<usize>().map_err(|e| format!("bad width {w:?}: {e}"))?;
    Ok((w, PathBuf::from(p)))
}

enum Failure {
    Usage(String),
    Data(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Data(e)
    }
}

type Outcome = Result<(), Failure>;

fn usage<T>(msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure::Usage(msg.into()))
}

fn out_dir(cli: &Cli) -> anyhow::Result<PathBuf> {
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
    Ok(dir)
}

fn put(path: &Path, text: &str) -> anyhow::Result<()> {
    write_atomic(path, text.as_bytes()).with_context(|| format!("cannot write {}", path.display()))
}

/// Prints to stdout and, when asked, writes the same text to `output`.
fn emit(text: &str, output: &Option<PathBuf>) -> anyhow::Result<()> {
    print!("{text}");
    if let Some(p) = output {
        put(p, text)?;
    }
    Ok(())
}

fn json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn read_config(cli: &Cli) -> Result<Option<String>, Failure> {
    match &cli.config {
        None => Ok(None),
        Some(p) => std::fs::read_to_string(p)
            .map(Some)
            .map_err(|e| Failure::Data(anyhow!("cannot read config {}: {e}", p.display()))),
    }
}

fn pool(jobs: usize) -> anyhow::Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new().num_threads(jobs).build().map_err(|e| anyhow!(e))
}

fn hyps(path: &Path) -> anyhow::Result<Vec<Sentence>> {
    decoded::read_hypotheses(path).map_err(|e| anyhow!(e))
}

fn refs(path: &Path) -> anyhow::Result<Vec<Sentence>> {
    read_sentences(path).map_err(|e| anyhow!(e))
}

fn cmd_gen_synth(cli: &Cli) -> Outcome {
    let mut config = match read_config(cli)? {
        None => SynthConfig::default(),
        Some(text) => match toml::from_str::<SynthConfig>(&text) {
            Ok(c) => c,
            Err(e) => return usage(format!("invalid synthetic config: {e}")),
        },
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Err(e) = config.validate() {
        return usage(e.to_string());
    }
    let splits = generate_synthetic(&config).map_err(|e| anyhow!(e))?;
    let dir = out_dir(cli)?;
    for (name, corpus) in [("train", &splits.train), ("dev", &splits.dev), ("test", &splits.test)] {
        save_corpus(corpus, &dir.join(format!("{name}.src")), &dir.join(format!("{name}.tgt"))).map_err(|e| anyhow!(e))?;
    }
    Ok(())
}

fn write_augmented(cli: &Cli, aug: &Augmented) -> Outcome {
    let dir = out_dir(cli)?;
    let base = dir.join(&aug.corpus.name);
    let with = |ext: &str| PathBuf::from(format!("{}.{ext}", base.display()));
    save_corpus(&aug.corpus, &with("src"), &with("tgt")).map_err(|e| anyhow!(e))?;
    put(&with("prov"), &aug.provenance_text())?;
    eprintln!("wrote {} examples to {}.{{src,tgt,prov}}", aug.corpus.len(), base.display());
    Ok(())
}

fn cmd_augment(cli: &Cli, method: &AugmentMethod) -> Outcome {
    let seed = cli.seed.unwrap_or(1);
    match method {
        AugmentMethod::Msr { corpus, n, size } => {
            if *n == 0 {
                return usage("--n must be at least 1");
            }
            let c = load_corpus(&corpus.src, &corpus.tgt).map_err(|e| anyhow!(e))?;
            let cfg = MsrConfig {
                max_sentences: *n,
                size: size.output_size(),
                seed,
            };
            if let Err(e) = cfg.size.resolve(c.len()) {
                return usage(e.to_string());
            }
            let aug = msr(&c, &cfg).map_err(|e| anyhow!(e))?;
            write_augmented(cli, &aug)
        }
        AugmentMethod::Resample { corpus, size } => {
            let c = load_corpus(&corpus.src, &corpus.tgt).map_err(|e| anyhow!(e))?;
            let s = match size.output_size().resolve(c.len()) {
                Ok(s) => s,
                Err(e) => return usage(e.to_string()),
            };
            let aug = simple_resample(&c, s, seed).map_err(|e| anyhow!(e))?;
            write_augmented(cli, &aug)
        }
    }
}

fn cmd_train(cli: &Cli, args: &TrainArgs) -> Outcome {
    let mut config = match read_config(cli)? {
        None => ModelConfig::default(),
        Some(text) => match toml::from_str::<ModelConfig>(&text) {
            Ok(c) => c,
            Err(e) => return usage(format!("invalid model config: {e}")),
        },
    };
    config.order = args.order.unwrap_or(config.order);
    config.lambda = args.lambda.unwrap_or(config.lambda);
    config.add_k_lex = args.add_k_lex.unwrap_or(config.add_k_lex);
    config.add_k_ngram = args.add_k_ngram.unwrap_or(config.add_k_ngram);
    config.min_count = args.min_count.unwrap_or(config.min_count);
    if let Err(e) = config.validate() {
        return usage(e.to_string());
    }
    let corpus = load_corpus(&args.corpus.src, &args.corpus.tgt).map_err(|e| anyhow!(e))?;
    let jobs = cli.jobs.max(1);
    let model = pool(cli.jobs)?.install(|| train_sharded(&corpus, &config, jobs)).map_err(|e| anyhow!(e))?;
    let path = out_dir(cli)?.join(&args.name);
    model.save(&path).map_err(|e| anyhow!(e))?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn cmd_decode(cli: &Cli, args: &DecodeArgs) -> Outcome {
    let cfg = BeamConfig {
        width: args.beam,
        normalization: args.norm,
        max_len_a: args.max_len_a,
        max_len_b: args.max_len_b,
    };
    if let Err(e) = cfg.validate() {
        return usage(e.to_string());
    }
    let model = TransducerModel::load(&args.model).map_err(|e| anyhow!(e))?;
    let sources = read_sentences(&args.input).map_err(|e| anyhow!(e))?;
    let ids: Vec<Vec<u32>> = sources.iter().map(|s| model.encode_source(s)).collect();
    let results: Vec<_> = pool(cli.jobs)?.install(|| ids.par_iter().map(|x| beam_search_ids(&model, x, &cfg)).collect());
    let records = decoded::records(&results, &model.target_vocab, args.nbest);
    let dir = out_dir(cli)?;
    let stem = args.input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let base = dir.join(format!("{stem}.b{}.{}", args.beam, args.norm.slug()));
    let tsv = PathBuf::from(format!("{}.tsv", base.display()));
    put(&tsv, &decoded::to_tsv(&records))?;
    if args.json {
        put(&PathBuf::from(format!("{}.json", base.display())), &decoded::to_json(&records))?;
    }
    eprintln!("wrote {}", tsv.display());
    Ok(())
}

#[derive(Serialize)]
struct ScoreReport<B: Serialize> {
    metric: MetricKind,
    score: f64,
    breakdown: B,
    n_sentences: usize,
}

fn cmd_evaluate(cli: &Cli, what: &EvaluateCommand) -> Outcome {
    match what {
        EvaluateCommand::Bleu(a) => {
            let (h, r) = (hyps(&a.hyps)?, refs(&a.refs)?);
            let b = corpus_bleu(&h, &r).map_err(|e| anyhow!(e))?;
            let report = ScoreReport {
                metric: MetricKind::Bleu,
                score: b.score,
                n_sentences: r.len(),
                breakdown: b,
            };
            emit(&json(&report), &a.output)?;
        }
        EvaluateCommand::Wer(a) => {
            let (h, r) = (hyps(&a.hyps)?, refs(&a.refs)?);
            let b = corpus_wer_breakdown(&h, &r).map_err(|e| anyhow!(e))?;
            let report = ScoreReport {
                metric: MetricKind::Wer,
                score: 100.0 * b.wer,
                n_sentences: r.len(),
                breakdown: b,
            };
            emit(&json(&report), &a.output)?;
        }
        EvaluateCommand::Bootstrap {
            hyps_a,
            hyps_b,
            refs: r,
            metric,
            resamples,
            output,
        } => {
            let (a, b, r) = (hyps(hyps_a)?, hyps(hyps_b)?, refs(r)?);
            let metric = MetricKind::from(*metric);
            let res = match paired_bootstrap(&a, &b, &r, metric, *resamples, cli.seed.unwrap_or(1)) {
                Err(beamlab::metrics::MetricError::TooFewResamples(n)) => {
                    return usage(format!("--resamples must be at least 100, got {n}"))
                }
                other => other.map_err(|e| anyhow!(e))?,
            };
            let report = serde_json::json!({
                "metric": metric,
                "score_a": metric.corpus_score(&a, &r).map_err(|e| anyhow!(e))?,
                "score_b": metric.corpus_score(&b, &r).map_err(|e| anyhow!(e))?,
                "n_sentences": r.len(),
                "p_value": res.p_value,
                "wins_a": res.wins_a,
                "wins_b": res.wins_b,
                "ties": res.ties,
                "n_resamples": res.n_resamples,
                "seed": res.seed,
            });
            emit(&json(&report), output)?;
        }
    }
    Ok(())
}

fn cmd_analyze(what: &AnalyzeCommand) -> Outcome {
    match what {
        AnalyzeCommand::Categories {
            small,
            large,
            refs: r,
            metric,
            csv,
            output,
        } => {
            let (s, l, r) = (hyps(small)?, hyps(large)?, refs(r)?);
            let metric = MetricKind::from(*metric);
            let cats = classify(&s, &l, &r, metric).map_err(|e| anyhow!(e))?;
            let report = category_report(&cats, &s, &l, &r, metric).map_err(|e| anyhow!(e))?;
            let labelled = serde_json::json!({
                "small": small.display().to_string(),
                "large": large.display().to_string(),
                "report": report,
            });
            emit(&if *csv { report.to_csv() } else { json(&labelled) }, output)?;
        }
        AnalyzeCommand::Buckets {
            hyps: h,
            refs: r,
            edges,
            metric,
            csv,
            output,
        } => {
            let (h, r) = (hyps(h)?, refs(r)?);
            let edges = edges.clone().unwrap_or_else(|| DEFAULT_EDGES.to_vec());
            let report = match bucket_quality(&h, &r, &edges, (*metric).into()) {
                Err(beamlab::analysis::AnalysisError::BadEdges(e)) => {
                    return usage(format!("--edges must be strictly ascending and positive, got {e:?}"))
                }
                other => other.map_err(|e| anyhow!(e))?,
            };
            emit(&if *csv { report.to_csv() } else { json(&report) }, output)?;
        }
        AnalyzeCommand::Lengths { hyps: files, output } => {
            let mut by_beam = BTreeMap::new();
            for (w, p) in files {
                by_beam.insert(*w, hyps(p)?);
            }
            let rows = length_report(&by_beam, None).map_err(|e| anyhow!(e))?;
            emit(&json(&rows), output)?;
        }
        AnalyzeCommand::Histogram { input, bucket, output } => {
            if *bucket == 0 {
                return usage("--bucket must be at least 1");
            }
            let lines = hyps(input)?;
            emit(&LengthHistogram::from_lengths(lines.iter().map(Sentence::len), *bucket).to_csv(), output)?;
        }
    }
    Ok(())
}

fn cmd_experiment(cli: &Cli) -> Outcome {
    let Some(path) = &cli.config else {
        return usage("experiment needs --config <file>");
    };
    if cli.seed.is_some() {
        return usage("experiment seeds come from the config file; drop --seed");
    }
    let text = read_config(cli)?.expect("config path given");
    let config = match ExperimentConfig::parse(&text) {
        Ok(c) => c,
        Err(e) => return usage(e.to_string()),
    };
    let dir = match (&cli.out, &config.out) {
        (Some(d), _) => d.clone(),
        (None, Some(d)) => d.clone(),
        (None, None) => PathBuf::from("runs").join(path.file_stem().unwrap_or_default()),
    };
    match run_experiment(&text, &dir, cli.jobs) {
        Ok(out) => {
            for c in &out.curves {
                eprintln!("{:<10} {:<12} width {:>4}  bleu {:6.2}  len {:6.2}", c.system, c.normalization.to_string(), c.width, c.bleu, c.mean_len);
            }
            eprintln!("wrote {}", dir.join("manifest.json").display());
            Ok(())
        }
        Err(ExperimentError::Config(m)) => usage(m),
        Err(e) => Err(Failure::Data(anyhow!(e))),
    }
}

fn run(cli: &Cli) -> Outcome {
    match &cli.command {
        Command::GenSynth => cmd_gen_synth(cli),
        Command::Augment { method } => cmd_augment(cli, method),
        Command::Train(a) => cmd_train(cli, a),
        Command::Decode(a) => cmd_decode(cli, a),
        Command::Evaluate { what } => cmd_evaluate(cli, what),
        Command::Analyze { what } => cmd_analyze(what),
        Command::Experiment => cmd_experiment(cli),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
