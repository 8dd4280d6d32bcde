use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use embalign_core::config::Config;
use embalign_core::corpus::{factorize_ppmi, train_sgns_corpus, CoocMatrix, Corpus, SgnsConfig};
use embalign_core::embedding::{load_embeddings, save_embeddings, EmbeddingSpace, Normalization};
use embalign_core::experiment::{
    apply_gan_config, apply_refine_config, apply_sgns_config, export_loss_curves, identity_lexicon,
    run_grid, run_learning_curve, ExperimentPlan,
};
use embalign_core::gan::{refine, train_gan, GanConfig, RefineConfig, TrainingLog};
use embalign_core::geometry::{centroid_cosine, geometry_report};
use embalign_core::linalg::{random_orthogonal, TruncatedSvdOptions};
use embalign_core::procrustes::{build_seed_dictionary, procrustes_solve_with, ProcrustesOptions};
use embalign_core::retrieval::{precision_at_ks, EvalLexicon, RetrievalIndex, Scorer};
use embalign_core::synth::{generate_corpus, gaussian_space_with, rotated_copy, SynthCorpusConfig};
use embalign_core::{seed, AlignmentMap, SeedDictionary};

#[derive(Parser)]
#[command(name = "embalign", version, about = "Align word-embedding spaces with GANs and Procrustes")]
struct Cli {
    /// Default directory for outputs whose path is not given.
    #[arg(long, global = true, env = "EMBALIGN_OUTPUT_ROOT", default_value = "embalign-out")]
    output_root: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Lowercase, strip non-letters and spell out digits, one document per line.
    Preprocess(PreprocessArgs),
    /// Train skip-gram with negative sampling on a text corpus.
    TrainSgns(TrainSgnsArgs),
    /// Factorize the positive PMI matrix of a text corpus.
    TrainPpmiSvd(TrainPpmiArgs),
    /// Mean-vector statistics of one space, or of two spaces and their centroids.
    Geometry(GeometryArgs),
    /// Orthogonal Procrustes from a seed dictionary.
    AlignSupervised(AlignSupervisedArgs),
    /// Adversarial alignment, optionally followed by Procrustes refinement.
    AlignGan(AlignGanArgs),
    /// Word-translation precision of an alignment.
    Evaluate(EvaluateArgs),
    /// Run an alignment grid over algorithms and corpus splits.
    Grid(PlanArgs),
    /// Alignment quality as a function of corpus size.
    LearningCurve(PlanArgs),
    /// Merge GAN training logs into one long-format CSV.
    ExportLosses(ExportLossesArgs),
    /// Write a synthetic topic-model text corpus.
    SynthCorpus(SynthCorpusArgs),
    /// Write a synthetic Gaussian space and a randomly rotated copy.
    SynthSpaces(SynthSpacesArgs),
}

/// A `--config` file plus `--set key=value` overrides. Explicit flags
/// override both.
#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra `key=value` setting; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<Config> {
        let mut cfg = match &self.config {
            Some(p) => Config::load(p).with_context(|| format!("reading {}", p.display()))?,
            None => Config::default(),
        };
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .with_context(|| format!("--set expects KEY=VALUE, got '{kv}'"))?;
            cfg.set(k.trim(), v.trim());
        }
        Ok(cfg)
    }
}

fn put<T: ToString>(cfg: &mut Config, key: &str, value: &Option<T>) {
    if let Some(v) = value {
        cfg.set(key, v.to_string());
    }
}

fn warn_unused(cfg: &Config) {
    for k in cfg.unused_keys() {
        log::warn!("configuration key '{k}' was not used");
    }
}

fn resolve(explicit: &Option<PathBuf>, root: &Path, default: &str) -> PathBuf {
    explicit.clone().unwrap_or_else(|| root.join(default))
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(())
}

/// Output file, or stdout when `None`.
fn sink(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => {
            ensure_parent(p)?;
            Box::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)
        }
        None => Box::new(io::stdout().lock()),
    })
}

fn load_space(path: &Path, limit: Option<usize>) -> Result<EmbeddingSpace> {
    load_embeddings(path, limit).with_context(|| format!("loading {}", path.display()))
}

fn parse_normalization(s: &Option<String>) -> Result<Vec<Normalization>> {
    Ok(match s {
        Some(s) => Normalization::parse_list(s)?,
        None => Vec::new(),
    })
}

#[derive(Args)]
struct PreprocessArgs {
    /// Raw UTF-8 text.
    input: PathBuf,
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Also write `word,count` for words seen at least this often.
    #[arg(long)]
    vocab_min_count: Option<u64>,
    #[arg(long, requires = "vocab_min_count")]
    vocab_output: Option<PathBuf>,
}

fn preprocess(args: &PreprocessArgs, root: &Path) -> Result<()> {
    let corpus = Corpus::from_file(&args.input)
        .with_context(|| format!("reading {}", args.input.display()))?;
    let out = resolve(&args.output, root, "corpus.txt");
    ensure_parent(&out)?;
    corpus.write_documents(File::create(&out)?)?;
    info!("{} tokens in {} documents -> {}", corpus.len(), corpus.n_documents(), out.display());
    if let Some(min) = args.vocab_min_count {
        let stats = corpus.stats(min);
        let mut w = csv::Writer::from_writer(sink(&args.vocab_output)?);
        w.write_record(["word", "count"])?;
        for (word, count) in stats.vocab.words().iter().zip(stats.vocab.frequencies()) {
            w.write_record([word.as_str(), &count.to_string()])?;
        }
        w.flush()?;
    }
    Ok(())
}

#[derive(Args)]
struct TrainSgnsArgs {
    /// Preprocessed or raw text, one document per line.
    corpus: PathBuf,
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Write the context vectors too.
    #[arg(long)]
    contexts_output: Option<PathBuf>,
    /// Per-epoch mean loss as CSV `epoch,loss`.
    #[arg(long)]
    loss_output: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    negatives: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    min_rate_fraction: Option<f64>,
    /// Subsampling threshold, or `none`.
    #[arg(long)]
    subsample: Option<String>,
    #[arg(long)]
    context_smoothing: Option<f64>,
    #[arg(long)]
    dynamic_window: Option<bool>,
    #[arg(long)]
    min_count: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
}

fn train_sgns(args: &TrainSgnsArgs, root: &Path) -> Result<()> {
    let mut cfg = args.config.load()?;
    put(&mut cfg, "sgns.dim", &args.dim);
    put(&mut cfg, "sgns.window", &args.window);
    put(&mut cfg, "sgns.negatives", &args.negatives);
    put(&mut cfg, "sgns.epochs", &args.epochs);
    put(&mut cfg, "sgns.learning_rate", &args.learning_rate);
    put(&mut cfg, "sgns.min_rate_fraction", &args.min_rate_fraction);
    put(&mut cfg, "sgns.subsample", &args.subsample);
    put(&mut cfg, "sgns.context_smoothing", &args.context_smoothing);
    put(&mut cfg, "sgns.dynamic_window", &args.dynamic_window);
    put(&mut cfg, "sgns.min_count", &args.min_count);
    put(&mut cfg, "sgns.seed", &args.seed);
    let mut sgns = SgnsConfig::default();
    apply_sgns_config(&cfg, "sgns.", &mut sgns)?;
    warn_unused(&cfg);
    sgns.validate()?;

    let corpus = Corpus::from_file(&args.corpus)
        .with_context(|| format!("reading {}", args.corpus.display()))?;
    info!("training SGNS on {} tokens", corpus.len());
    let model = train_sgns_corpus(&corpus, &sgns)?;
    let out = resolve(&args.output, root, "sgns.vec");
    ensure_parent(&out)?;
    save_embeddings(&model.words, &out)?;
    info!("{} vectors -> {}", model.words.len(), out.display());
    if let Some(p) = &args.contexts_output {
        ensure_parent(p)?;
        save_embeddings(&model.words.with_vectors(model.contexts.clone())?, p)?;
    }
    if let Some(p) = &args.loss_output {
        let mut w = csv::Writer::from_writer(sink(&Some(p.clone()))?);
        w.write_record(["epoch", "loss"])?;
        for (i, l) in model.epoch_losses.iter().enumerate() {
            w.write_record([(i + 1).to_string(), l.to_string()])?;
        }
        w.flush()?;
    }
    Ok(())
}

#[derive(Args)]
struct TrainPpmiArgs {
    corpus: PathBuf,
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long)]
    contexts_output: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    min_count: Option<u64>,
    /// Exponent applied to the singular values.
    #[arg(long)]
    eig_exponent: Option<f64>,
    #[arg(long)]
    power_iterations: Option<usize>,
    #[arg(long)]
    oversample: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

fn train_ppmi(args: &TrainPpmiArgs, root: &Path) -> Result<()> {
    let mut cfg = args.config.load()?;
    put(&mut cfg, "ppmi.dim", &args.dim);
    put(&mut cfg, "ppmi.window", &args.window);
    put(&mut cfg, "ppmi.min_count", &args.min_count);
    put(&mut cfg, "ppmi.eig_exponent", &args.eig_exponent);
    put(&mut cfg, "ppmi.power_iterations", &args.power_iterations);
    put(&mut cfg, "ppmi.oversample", &args.oversample);
    put(&mut cfg, "ppmi.seed", &args.seed);
    let mut dim = 300usize;
    let mut window = 2usize;
    let mut min_count = 100u64;
    let mut eig = 0.5f64;
    let mut opts = TruncatedSvdOptions::default();
    cfg.apply("ppmi.dim", &mut dim)?;
    cfg.apply("ppmi.window", &mut window)?;
    cfg.apply("ppmi.min_count", &mut min_count)?;
    cfg.apply("ppmi.eig_exponent", &mut eig)?;
    cfg.apply("ppmi.power_iterations", &mut opts.power_iterations)?;
    cfg.apply("ppmi.oversample", &mut opts.oversample)?;
    cfg.apply("ppmi.seed", &mut opts.seed)?;
    warn_unused(&cfg);

    let corpus = Corpus::from_file(&args.corpus)
        .with_context(|| format!("reading {}", args.corpus.display()))?;
    info!("counting co-occurrences in {} tokens", corpus.len());
    let cooc = CoocMatrix::from_corpus(&corpus, window, min_count)?;
    drop(corpus);
    let result = factorize_ppmi(&cooc, dim, eig, opts)?;
    let out = resolve(&args.output, root, "ppmi-svd.vec");
    ensure_parent(&out)?;
    save_embeddings(&result.words, &out)?;
    info!("{} vectors -> {}", result.words.len(), out.display());
    if let Some(p) = &args.contexts_output {
        ensure_parent(p)?;
        save_embeddings(&result.words.with_vectors(result.contexts.clone())?, p)?;
    }
    Ok(())
}

#[derive(Args)]
struct GeometryArgs {
    /// One or two embedding files.
    #[arg(required = true, num_args = 1..=2)]
    embeddings: Vec<PathBuf>,
    /// Only read the first N vectors.
    #[arg(long)]
    max_vocab: Option<usize>,
    /// CSV destination; stdout by default.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Print a readable summary to stderr as well.
    #[arg(long)]
    summary: bool,
}

fn geometry(args: &GeometryArgs) -> Result<()> {
    let spaces = args
        .embeddings
        .iter()
        .map(|p| load_space(p, args.max_vocab))
        .collect::<Result<Vec<_>>>()?;
    let mut rows: Vec<(String, f64)> = Vec::new();
    for (i, space) in spaces.iter().enumerate() {
        let report = geometry_report(space)?;
        if args.summary {
            eprint!("{}", report.to_text());
        }
        let prefix = match (spaces.len(), i) {
            (1, _) => "",
            (_, 0) => "source_",
            _ => "target_",
        };
        rows.extend(report.rows().into_iter().map(|(k, v)| (format!("{prefix}{k}"), v)));
    }
    if let [a, b] = &spaces[..] {
        let c = centroid_cosine(a, b)?;
        rows.push(("centroid_cosine".into(), c.value));
        rows.push(("centroid_cosine_degenerate".into(), f64::from(u8::from(c.degenerate))));
    }
    let mut w = csv::Writer::from_writer(sink(&args.output)?);
    w.write_record(["statistic", "value"])?;
    for (k, v) in rows {
        w.write_record([k, v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Args)]
struct PairArgs {
    /// Source embeddings (word2vec text format).
    source: PathBuf,
    /// Target embeddings.
    target: PathBuf,
    /// Only read the first N vectors of each file.
    #[arg(long)]
    max_vocab: Option<usize>,
    /// Normalization steps for the source, e.g. `center,unit`.
    #[arg(long)]
    normalize_source: Option<String>,
    #[arg(long)]
    normalize_target: Option<String>,
}

impl PairArgs {
    fn load(&self) -> Result<(EmbeddingSpace, EmbeddingSpace)> {
        let src = load_space(&self.source, self.max_vocab)?
            .normalized(&parse_normalization(&self.normalize_source)?)?;
        let tgt = load_space(&self.target, self.max_vocab)?
            .normalized(&parse_normalization(&self.normalize_target)?)?;
        Ok((src, tgt))
    }
}

#[derive(Args)]
struct AlignSupervisedArgs {
    #[command(flatten)]
    pair: PairArgs,
    /// Seed dictionary, two whitespace-separated tokens per line. Without
    /// it the most frequent shared words are paired with themselves.
    #[arg(long)]
    dictionary: Option<PathBuf>,
    /// Size of the identity dictionary.
    #[arg(long, default_value_t = 5000)]
    seed_words: usize,
    /// Unit-normalize the dictionary rows before solving.
    #[arg(long)]
    normalize_rows: bool,
    /// Matrix destination.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

fn align_supervised(args: &AlignSupervisedArgs, root: &Path) -> Result<()> {
    let (src, tgt) = args.pair.load()?;
    let dict = match &args.dictionary {
        Some(p) => SeedDictionary::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => build_seed_dictionary(&src, &tgt, args.seed_words)?,
    };
    let opts = ProcrustesOptions {
        normalize_rows: args.normalize_rows,
    };
    let map = procrustes_solve_with(&src, &tgt, &dict, opts)?;
    let out = resolve(&args.output, root, "procrustes_map.txt");
    ensure_parent(&out)?;
    map.save(&out)?;
    info!("{} seed pairs -> {}", dict.len(), out.display());
    Ok(())
}

#[derive(Args)]
struct AlignGanArgs {
    #[command(flatten)]
    pair: PairArgs,
    /// Directory for `map.txt`, `gan_log.csv` and `summary.json`.
    #[arg(short, long)]
    output_dir: Option<PathBuf>,
    /// Evaluation lexicon for the final precision.
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Evaluate on an identity lexicon over the N most frequent shared words.
    #[arg(long, conflicts_with = "lexicon")]
    identity_lexicon: Option<usize>,
    /// Scorer for the final precision.
    #[arg(long, default_value = "csls")]
    scorer: Scorer,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    iterations_per_epoch: Option<usize>,
    #[arg(long)]
    dis_steps: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    dis_hidden: Option<usize>,
    #[arg(long)]
    sample_pool: Option<usize>,
    #[arg(long)]
    dis_learning_rate: Option<f64>,
    #[arg(long)]
    gen_learning_rate: Option<f64>,
    #[arg(long)]
    lr_decay: Option<f64>,
    #[arg(long)]
    label_smoothing: Option<f64>,
    #[arg(long)]
    input_dropout: Option<f64>,
    #[arg(long)]
    leaky_slope: Option<f64>,
    #[arg(long)]
    ortho_beta: Option<f64>,
    #[arg(long)]
    ortho_tolerance: Option<f64>,
    #[arg(long)]
    eval_interval: Option<usize>,
    #[arg(long)]
    log_interval: Option<usize>,
    #[arg(long)]
    val_words: Option<usize>,
    #[arg(long)]
    val_scorer: Option<Scorer>,
    #[arg(long)]
    seed: Option<u64>,
    /// Procrustes refinement rounds after adversarial training.
    #[arg(long)]
    refine_rounds: Option<usize>,
    #[arg(long)]
    refine_max_rank: Option<usize>,
    #[arg(long)]
    refine_scorer: Option<Scorer>,
}

#[derive(serde::Serialize)]
struct GanRunSummary {
    version: &'static str,
    config: GanConfig,
    refine: Option<RefineConfig>,
    best_iteration: usize,
    best_val_metric: f64,
    final_dis_loss: Option<f64>,
    refine_rounds_run: Option<usize>,
    orthogonality_error: f64,
    precision: Vec<embalign_core::retrieval::PrecisionReport>,
    seconds: f64,
}

fn align_gan(args: &AlignGanArgs, root: &Path) -> Result<()> {
    let mut cfg = args.config.load()?;
    put(&mut cfg, "gan.epochs", &args.epochs);
    put(&mut cfg, "gan.iterations_per_epoch", &args.iterations_per_epoch);
    put(&mut cfg, "gan.dis_steps", &args.dis_steps);
    put(&mut cfg, "gan.batch_size", &args.batch_size);
    put(&mut cfg, "gan.dis_hidden", &args.dis_hidden);
    put(&mut cfg, "gan.sample_pool", &args.sample_pool);
    put(&mut cfg, "gan.dis_learning_rate", &args.dis_learning_rate);
    put(&mut cfg, "gan.gen_learning_rate", &args.gen_learning_rate);
    put(&mut cfg, "gan.lr_decay", &args.lr_decay);
    put(&mut cfg, "gan.label_smoothing", &args.label_smoothing);
    put(&mut cfg, "gan.input_dropout", &args.input_dropout);
    put(&mut cfg, "gan.leaky_slope", &args.leaky_slope);
    put(&mut cfg, "gan.ortho_beta", &args.ortho_beta);
    put(&mut cfg, "gan.ortho_tolerance", &args.ortho_tolerance);
    put(&mut cfg, "gan.eval_interval", &args.eval_interval);
    put(&mut cfg, "gan.log_interval", &args.log_interval);
    put(&mut cfg, "gan.val_words", &args.val_words);
    put(&mut cfg, "gan.val_scorer", &args.val_scorer);
    put(&mut cfg, "gan.seed", &args.seed);
    put(&mut cfg, "refine.rounds", &args.refine_rounds);
    put(&mut cfg, "refine.max_rank", &args.refine_max_rank);
    put(&mut cfg, "refine.scorer", &args.refine_scorer);
    let mut gan = GanConfig::default();
    apply_gan_config(&cfg, "gan.", &mut gan)?;
    let mut refine_cfg = RefineConfig {
        rounds: 0,
        ..RefineConfig::default()
    };
    apply_refine_config(&cfg, "refine.", &mut refine_cfg)?;
    warn_unused(&cfg);
    gan.validate()?;

    let (src, tgt) = args.pair.load()?;
    let dir = resolve(&args.output_dir, root, "align-gan");
    fs::create_dir_all(&dir)?;
    let start = std::time::Instant::now();
    let result = train_gan(&src, &tgt, &gan)?;
    let mut map = result.best;
    let mut rounds_run = None;
    if refine_cfg.rounds > 0 {
        let r = refine(&src, &tgt, &map, &refine_cfg)?;
        info!("refinement: {:?} after {} rounds", r.outcome, r.rounds_run);
        rounds_run = Some(r.rounds_run);
        map = r.map;
    }
    let seconds = start.elapsed().as_secs_f64();
    map.save(dir.join("map.txt"))?;
    result.log.save_csv(dir.join("gan_log.csv"))?;

    let lexicon = match (&args.lexicon, args.identity_lexicon) {
        (Some(p), _) => Some(EvalLexicon::load(p)?),
        (None, Some(n)) => Some(identity_lexicon(&src, &tgt, n)?),
        (None, None) => None,
    };
    let precision = match &lexicon {
        Some(lex) => {
            let index = RetrievalIndex::new(&src, &tgt, &map, args.scorer)?;
            precision_at_ks(&index, &src, &tgt, lex, &[1])?
        }
        None => Vec::new(),
    };
    if let Some(p) = precision.first() {
        println!("p_at_1,{}", p.precision);
    }
    let summary = GanRunSummary {
        version: embalign_core::VERSION,
        config: gan,
        refine: (refine_cfg.rounds > 0).then_some(refine_cfg),
        best_iteration: result.log.best_iteration,
        best_val_metric: result.log.best_val_metric,
        final_dis_loss: result.log.last_dis_loss(),
        refine_rounds_run: rounds_run,
        orthogonality_error: map.orthogonality_error(),
        precision,
        seconds,
    };
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    info!("outputs in {}", dir.display());
    Ok(())
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    pair: PairArgs,
    /// Alignment matrix; identity when omitted.
    #[arg(long)]
    map: Option<PathBuf>,
    /// Lexicon file; identity pairs over the most frequent shared words
    /// when omitted.
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    lexicon_size: usize,
    /// Cut-offs, comma-separated.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    k: Vec<usize>,
    #[arg(long, default_value = "csls")]
    scorer: Scorer,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let (src, tgt) = args.pair.load()?;
    let map = match &args.map {
        Some(p) => AlignmentMap::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => AlignmentMap::identity(src.dim()),
    };
    let lexicon = match &args.lexicon {
        Some(p) => EvalLexicon::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => identity_lexicon(&src, &tgt, args.lexicon_size)?,
    };
    let index = RetrievalIndex::new(&src, &tgt, &map, args.scorer)?;
    let reports = precision_at_ks(&index, &src, &tgt, &lexicon, &args.k)?;
    let mut w = csv::Writer::from_writer(sink(&args.output)?);
    w.write_record(["k", "scorer", "precision", "n_evaluated", "n_skipped"])?;
    for r in reports {
        w.write_record([
            r.k.to_string(),
            r.scorer.to_string(),
            r.precision.to_string(),
            r.n_evaluated.to_string(),
            r.n_skipped.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Args)]
struct PlanArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Text corpus, one document per line.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Comma-separated: `sgns`, `ppmi-svd`, or `name=first.vec+second.vec`.
    #[arg(long)]
    algorithms: Option<String>,
    /// `halves`, `documents` or `same`.
    #[arg(long)]
    split: Option<String>,
    /// `gan`, `gan+refine` or `supervised`.
    #[arg(long)]
    method: Option<String>,
    /// Learning-curve sample fractions, comma-separated.
    #[arg(long)]
    fractions: Option<String>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    min_count: Option<u64>,
    #[arg(long)]
    max_vocab: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(short, long)]
    output_dir: Option<PathBuf>,
}

impl PlanArgs {
    fn plan(&self, root: &Path, default_dir: &str) -> Result<ExperimentPlan> {
        let mut cfg = self.config.load()?;
        put(&mut cfg, "corpus", &self.corpus.as_ref().map(|p| p.display()));
        put(&mut cfg, "algorithms", &self.algorithms);
        put(&mut cfg, "split", &self.split);
        put(&mut cfg, "method", &self.method);
        put(&mut cfg, "fractions", &self.fractions);
        put(&mut cfg, "dim", &self.dim);
        put(&mut cfg, "window", &self.window);
        put(&mut cfg, "min_count", &self.min_count);
        put(&mut cfg, "max_vocab", &self.max_vocab);
        put(&mut cfg, "seed", &self.seed);
        put(&mut cfg, "output_dir", &self.output_dir.as_ref().map(|p| p.display()));
        if !cfg.contains("output_dir") {
            cfg.set("output_dir", root.join(default_dir).display().to_string());
        }
        let plan = ExperimentPlan::from_config(&cfg)?;
        warn_unused(&cfg);
        Ok(plan)
    }
}

fn grid(args: &PlanArgs, root: &Path) -> Result<()> {
    let plan = args.plan(root, "grid")?;
    let records = run_grid(&plan)?;
    let failed = records.iter().filter(|r| r.error.is_some()).count();
    for r in &records {
        match (&r.error, r.precision_at(1)) {
            (Some(e), _) => eprintln!("{:<48} error: {e}", r.cell_id),
            (None, Some(p)) => eprintln!("{:<48} P@1 {p:.3}", r.cell_id),
            (None, None) => eprintln!("{:<48} no precision", r.cell_id),
        }
    }
    println!("{}", plan.output_dir.join("results.csv").display());
    if failed == records.len() {
        bail!("all {failed} cells failed");
    }
    Ok(())
}

fn learning_curve(args: &PlanArgs, root: &Path) -> Result<()> {
    let plan = args.plan(root, "learning-curve")?;
    let points = run_learning_curve(&plan)?;
    for p in &points {
        match p.p_at_1 {
            Some(v) => eprintln!("{:>12} tokens  P@1 {v:.3}", p.tokens),
            None => eprintln!("{:>12} tokens  failed", p.tokens),
        }
    }
    println!("{}", plan.output_dir.join("learning_curve").join("learning_curve.csv").display());
    Ok(())
}

#[derive(Args)]
struct ExportLossesArgs {
    /// Logs as `run_id=path.csv` (or a bare path, named after the file).
    #[arg(required = true)]
    logs: Vec<String>,
    #[arg(short, long)]
    output_dir: Option<PathBuf>,
}

fn export_losses(args: &ExportLossesArgs, root: &Path) -> Result<()> {
    let mut logs: Vec<(String, TrainingLog)> = Vec::new();
    for spec in &args.logs {
        let (id, path) = match spec.split_once('=') {
            Some((id, p)) => (id.to_string(), PathBuf::from(p)),
            None => {
                let p = PathBuf::from(spec);
                let id = p
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| spec.clone());
                (id, p)
            }
        };
        let log = TrainingLog::read_csv(File::open(&path).with_context(|| format!("opening {}", path.display()))?)?;
        logs.push((id, log));
    }
    let dir = resolve(&args.output_dir, root, "loss_curves");
    let paths = export_loss_curves(&logs, &dir)?;
    println!("{}", paths.last().expect("merged path").display());
    Ok(())
}

#[derive(Args)]
struct SynthCorpusArgs {
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Approximate size in bytes.
    #[arg(long, default_value_t = 50_000_000)]
    bytes: u64,
    #[arg(long)]
    vocab_size: Option<usize>,
    #[arg(long)]
    topics: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

fn synth_corpus(args: &SynthCorpusArgs, root: &Path) -> Result<()> {
    let mut config = SynthCorpusConfig {
        target_bytes: args.bytes,
        seed: args.seed,
        ..Default::default()
    };
    if let Some(v) = args.vocab_size {
        config.vocab_size = v;
    }
    if let Some(t) = args.topics {
        config.n_topics = t;
    }
    let out = resolve(&args.output, root, "synth_corpus.txt");
    ensure_parent(&out)?;
    let written = generate_corpus(&config, io::BufWriter::new(File::create(&out)?))?;
    info!("{written} bytes -> {}", out.display());
    Ok(())
}

#[derive(Args)]
struct SynthSpacesArgs {
    #[arg(long, default_value_t = 5000)]
    words: usize,
    #[arg(long, default_value_t = 50)]
    dim: usize,
    /// Ratio between the standard deviations of consecutive axes.
    #[arg(long, default_value_t = embalign_core::synth::DEFAULT_DECAY)]
    decay: f64,
    #[arg(long, default_value_t = embalign_core::synth::DEFAULT_MEAN_SCALE)]
    mean_scale: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Directory for `source.vec`, `target.vec` and the true map `rotation.txt`.
    #[arg(short, long)]
    output_dir: Option<PathBuf>,
}

fn synth_spaces(args: &SynthSpacesArgs, root: &Path) -> Result<()> {
    let src = gaussian_space_with(
        args.words,
        args.dim,
        args.decay,
        args.mean_scale,
        &mut seed::derive_rng(args.seed, "synth/space"),
    );
    let q = random_orthogonal(args.dim, &mut seed::derive_rng(args.seed, "synth/rotation"));
    let tgt = rotated_copy(&src, &q);
    let dir = resolve(&args.output_dir, root, "synth");
    fs::create_dir_all(&dir)?;
    save_embeddings(&src, dir.join("source.vec"))?;
    save_embeddings(&tgt, dir.join("target.vec"))?;
    AlignmentMap::new(q)?.save(dir.join("rotation.txt"))?;
    println!("{}", dir.display());
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let root = cli.output_root.as_path();
    match &cli.command {
        Command::Preprocess(a) => preprocess(a, root),
        Command::TrainSgns(a) => train_sgns(a, root),
        Command::TrainPpmiSvd(a) => train_ppmi(a, root),
        Command::Geometry(a) => geometry(a),
        Command::AlignSupervised(a) => align_supervised(a, root),
        Command::AlignGan(a) => align_gan(a, root),
        Command::Evaluate(a) => evaluate(a),
        Command::Grid(a) => grid(a, root),
        Command::LearningCurve(a) => learning_curve(a, root),
        Command::ExportLosses(a) => export_losses(a, root),
        Command::SynthCorpus(a) => synth_corpus(a, root),
        Command::SynthSpaces(a) => synth_spaces(a, root),
    }
}
