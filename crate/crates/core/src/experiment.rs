//! Experiment harnesses.
//!
//! [`run_grid`] trains (or loads) one embedding space per algorithm and
//! corpus split, aligns every cell of the algorithm grid and writes a
//! results table. Diagonal cells pair the same algorithm on two different
//! splits; off-diagonal cells pair two algorithms on the same split. When
//! the plan's method is unsupervised, each off-diagonal cell also gets a
//! supervised Procrustes control.
//!
//! [`run_learning_curve`] repeats a same-algorithm alignment on nested
//! samples of increasing size, and [`export_loss_curves`] writes training
//! logs side by side.
//!
//! All randomness comes from the plan seed through [`seed::derive_seed`],
//! keyed by stage and cell names, so a cell can be rerun on its own.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;

use crate::config::Config;
use crate::corpus::{factorize_ppmi, train_sgns_corpus, CoocMatrix, Corpus, SgnsConfig};
use crate::embedding::{
    load_embeddings, save_embeddings, shared_vocabulary, EmbeddingSpace, Normalization,
    SeedDictionary,
};
use crate::error::{Error, Result};
use crate::gan::{refine, train_gan, GanConfig, RefineConfig, RefineOutcome, TrainingLog};
use crate::linalg::TruncatedSvdOptions;
use crate::procrustes::{procrustes_solve, AlignmentMap};
use crate::retrieval::{precision_at_ks, EvalLexicon, PrecisionReport, RetrievalIndex, Scorer};
use crate::seed;

/// How an embedding space is produced.
#[derive(Clone, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Sgns,
    PpmiSvd,
    /// Pre-trained embeddings, one file per split.
    External {
        name: String,
        first: PathBuf,
        second: PathBuf,
    },
}

impl Algorithm {
    pub fn name(&self) -> &str {
        match self {
            Algorithm::Sgns => "sgns",
            Algorithm::PpmiSvd => "ppmi-svd",
            Algorithm::External { name, .. } => name,
        }
    }

    fn needs_corpus(&self) -> bool {
        !matches!(self, Algorithm::External { .. })
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    /// `sgns`, `ppmi-svd`, or `name=first.vec+second.vec` for external
    /// files.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "sgns" => Ok(Algorithm::Sgns),
            "ppmi-svd" | "svd" => Ok(Algorithm::PpmiSvd),
            other => {
                let (name, paths) = other.split_once('=').ok_or_else(|| {
                    Error::InvalidConfig(format!(
                        "unknown algorithm '{other}' (use sgns, ppmi-svd or name=a.vec+b.vec)"
                    ))
                })?;
                let (a, b) = paths.split_once('+').unwrap_or((paths, paths));
                if name.is_empty() || name.contains(['/', '\\', ' ']) {
                    return Err(Error::InvalidConfig(format!("bad algorithm name '{name}'")));
                }
                Ok(Algorithm::External {
                    name: name.to_string(),
                    first: PathBuf::from(a.trim()),
                    second: PathBuf::from(b.trim()),
                })
            }
        }
    }
}

/// How the corpus is divided into the two splits `A` and `B`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitStrategy {
    /// First and second half of the token stream.
    ContiguousHalves,
    /// Documents (lines) shuffled with the plan seed, then halved.
    RandomDocuments,
    /// Both splits are the whole corpus.
    SameSplit,
}

impl FromStr for SplitStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "halves" | "contiguous-halves" => Ok(SplitStrategy::ContiguousHalves),
            "documents" | "random-documents" => Ok(SplitStrategy::RandomDocuments),
            "same" | "same-split" => Ok(SplitStrategy::SameSplit),
            other => Err(Error::InvalidConfig(format!("unknown split strategy '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Gan,
    GanRefine,
    Supervised,
}

impl Method {
    pub fn is_unsupervised(self) -> bool {
        !matches!(self, Method::Supervised)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Gan => "gan",
            Method::GanRefine => "gan+refine",
            Method::Supervised => "supervised",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "gan" => Ok(Method::Gan),
            "gan+refine" | "gan-refine" => Ok(Method::GanRefine),
            "supervised" | "procrustes" => Ok(Method::Supervised),
            other => Err(Error::InvalidConfig(format!("unknown method '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EvalSettings {
    /// Size of the generated identity lexicon (most frequent shared words).
    pub lexicon_size: usize,
    /// A lexicon file replacing the generated one.
    pub lexicon: Option<PathBuf>,
    pub ks: Vec<usize>,
    pub scorer: Scorer,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            lexicon_size: 1000,
            lexicon: None,
            ks: vec![1, 10],
            scorer: Scorer::CSLS_DEFAULT,
        }
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ExperimentPlan {
    /// Raw text, one document per line; needed unless every algorithm is
    /// external.
    pub corpus: Option<PathBuf>,
    pub algorithms: Vec<Algorithm>,
    pub split: SplitStrategy,
    /// Sample sizes of the learning curve as fractions of each split.
    pub sample_fractions: Vec<f64>,
    pub normalize_source: Vec<Normalization>,
    pub normalize_target: Vec<Normalization>,
    pub method: Method,
    pub dim: usize,
    pub window: usize,
    pub min_count: u64,
    /// Keep only this many most frequent rows of every space.
    pub max_vocab: Option<usize>,
    /// Trainer settings; `dim`, `window`, `min_count` and `seed` are taken
    /// from the plan.
    pub sgns: SgnsConfig,
    pub ppmi_eig_exponent: f64,
    pub svd: TruncatedSvdOptions,
    /// GAN settings; `seed` is derived per cell.
    pub gan: GanConfig,
    pub refine: RefineConfig,
    /// Size of the supervised seed dictionary. Evaluation words are
    /// excluded from it.
    pub seed_words: usize,
    pub eval: EvalSettings,
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        ExperimentPlan {
            corpus: None,
            algorithms: vec![Algorithm::Sgns, Algorithm::PpmiSvd],
            split: SplitStrategy::ContiguousHalves,
            sample_fractions: vec![0.01, 0.1, 1.0],
            normalize_source: Vec::new(),
            normalize_target: Vec::new(),
            method: Method::GanRefine,
            dim: 300,
            window: 2,
            min_count: 100,
            max_vocab: None,
            sgns: SgnsConfig::default(),
            ppmi_eig_exponent: 0.5,
            svd: TruncatedSvdOptions::default(),
            gan: GanConfig::default(),
            refine: RefineConfig::default(),
            seed_words: 5000,
            eval: EvalSettings::default(),
            output_dir: PathBuf::from("embalign-out"),
            seed: 1,
        }
    }
}

/// Reads `prefix.*` keys into a GAN configuration.
pub fn apply_gan_config(cfg: &Config, prefix: &str, gan: &mut GanConfig) -> Result<()> {
    let k = |name: &str| format!("{prefix}{name}");
    cfg.apply(&k("epochs"), &mut gan.epochs)?;
    cfg.apply(&k("iterations_per_epoch"), &mut gan.iterations_per_epoch)?;
    cfg.apply(&k("dis_steps"), &mut gan.dis_steps)?;
    cfg.apply(&k("batch_size"), &mut gan.batch_size)?;
    cfg.apply(&k("dis_hidden"), &mut gan.dis_hidden)?;
    cfg.apply(&k("sample_pool"), &mut gan.sample_pool)?;
    cfg.apply(&k("dis_learning_rate"), &mut gan.dis_learning_rate)?;
    cfg.apply(&k("gen_learning_rate"), &mut gan.gen_learning_rate)?;
    cfg.apply(&k("lr_decay"), &mut gan.lr_decay)?;
    cfg.apply(&k("label_smoothing"), &mut gan.label_smoothing)?;
    cfg.apply(&k("input_dropout"), &mut gan.input_dropout)?;
    cfg.apply(&k("leaky_slope"), &mut gan.leaky_slope)?;
    cfg.apply(&k("ortho_beta"), &mut gan.ortho_beta)?;
    cfg.apply(&k("ortho_tolerance"), &mut gan.ortho_tolerance)?;
    cfg.apply(&k("eval_interval"), &mut gan.eval_interval)?;
    cfg.apply(&k("log_interval"), &mut gan.log_interval)?;
    cfg.apply(&k("val_words"), &mut gan.val_words)?;
    cfg.apply(&k("val_scorer"), &mut gan.val_scorer)?;
    cfg.apply(&k("seed"), &mut gan.seed)?;
    Ok(())
}

/// Reads `prefix.*` keys into an SGNS configuration.
pub fn apply_sgns_config(cfg: &Config, prefix: &str, sgns: &mut SgnsConfig) -> Result<()> {
    let k = |name: &str| format!("{prefix}{name}");
    cfg.apply(&k("dim"), &mut sgns.dim)?;
    cfg.apply(&k("window"), &mut sgns.window)?;
    cfg.apply(&k("negatives"), &mut sgns.negatives)?;
    cfg.apply(&k("epochs"), &mut sgns.epochs)?;
    cfg.apply(&k("learning_rate"), &mut sgns.learning_rate)?;
    cfg.apply(&k("min_rate_fraction"), &mut sgns.min_rate_fraction)?;
    if let Some(v) = cfg.get_str(&k("subsample")) {
        sgns.subsample_threshold = match v {
            "none" | "off" | "" => None,
            t => Some(t.parse().map_err(|e| {
                Error::InvalidConfig(format!("{}: '{t}': {e}", k("subsample")))
            })?),
        };
    }
    cfg.apply(&k("context_smoothing"), &mut sgns.context_smoothing)?;
    cfg.apply(&k("dynamic_window"), &mut sgns.dynamic_window)?;
    cfg.apply(&k("min_count"), &mut sgns.min_count)?;
    cfg.apply(&k("seed"), &mut sgns.seed)?;
    Ok(())
}

/// Reads `prefix.*` keys into a refinement configuration.
pub fn apply_refine_config(cfg: &Config, prefix: &str, r: &mut RefineConfig) -> Result<()> {
    cfg.apply(&format!("{prefix}rounds"), &mut r.rounds)?;
    cfg.apply(&format!("{prefix}max_rank"), &mut r.max_rank)?;
    cfg.apply(&format!("{prefix}scorer"), &mut r.scorer)?;
    Ok(())
}

impl ExperimentPlan {
    /// Builds a plan from defaults overridden by `cfg`.
    ///
    /// Top-level keys: `corpus`, `algorithms`, `split`, `fractions`,
    /// `method`, `dim`, `window`, `min_count`, `max_vocab`, `seed`,
    /// `output_dir`, `seed_words`, `normalize.source`,
    /// `normalize.target`. Sections: `sgns.*`, `ppmi.eig_exponent`,
    /// `ppmi.power_iterations`, `ppmi.oversample`, `gan.*`, `refine.*`,
    /// `eval.lexicon_size`, `eval.lexicon`, `eval.ks`, `eval.scorer`.
    pub fn from_config(cfg: &Config) -> Result<Self> {
        let mut p = ExperimentPlan::default();
        if let Some(c) = cfg.get_str("corpus") {
            p.corpus = Some(PathBuf::from(c));
        }
        if let Some(a) = cfg.get_list::<Algorithm>("algorithms")? {
            p.algorithms = a;
        }
        cfg.apply("split", &mut p.split)?;
        if let Some(f) = cfg.get_list::<f64>("fractions")? {
            p.sample_fractions = f;
        }
        cfg.apply("method", &mut p.method)?;
        cfg.apply("dim", &mut p.dim)?;
        cfg.apply("window", &mut p.window)?;
        cfg.apply("min_count", &mut p.min_count)?;
        if let Some(v) = cfg.get::<usize>("max_vocab")? {
            p.max_vocab = Some(v);
        }
        cfg.apply("seed", &mut p.seed)?;
        if let Some(o) = cfg.get_str("output_dir") {
            p.output_dir = PathBuf::from(o);
        }
        cfg.apply("seed_words", &mut p.seed_words)?;
        if let Some(n) = cfg.get_str("normalize.source") {
            p.normalize_source = Normalization::parse_list(n)?;
        }
        if let Some(n) = cfg.get_str("normalize.target") {
            p.normalize_target = Normalization::parse_list(n)?;
        }
        apply_sgns_config(cfg, "sgns.", &mut p.sgns)?;
        cfg.apply("ppmi.eig_exponent", &mut p.ppmi_eig_exponent)?;
        cfg.apply("ppmi.power_iterations", &mut p.svd.power_iterations)?;
        cfg.apply("ppmi.oversample", &mut p.svd.oversample)?;
        apply_gan_config(cfg, "gan.", &mut p.gan)?;
        apply_refine_config(cfg, "refine.", &mut p.refine)?;
        cfg.apply("eval.lexicon_size", &mut p.eval.lexicon_size)?;
        if let Some(l) = cfg.get_str("eval.lexicon") {
            p.eval.lexicon = Some(PathBuf::from(l));
        }
        if let Some(ks) = cfg.get_list::<usize>("eval.ks")? {
            p.eval.ks = ks;
        }
        cfg.apply("eval.scorer", &mut p.eval.scorer)?;
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.algorithms.is_empty() {
            return bad("at least one algorithm is required".into());
        }
        let mut names = HashSet::new();
        for a in &self.algorithms {
            if !names.insert(a.name()) {
                return bad(format!("algorithm '{a}' listed twice"));
            }
        }
        if self.algorithms.iter().any(Algorithm::needs_corpus) && self.corpus.is_none() {
            return bad("a corpus is required to train embeddings".into());
        }
        if let Some(f) = self
            .sample_fractions
            .iter()
            .find(|f| !(**f > 0.0 && **f <= 1.0))
        {
            return bad(format!("sample fraction {f} is outside (0, 1]"));
        }
        if self.dim == 0 || self.window == 0 {
            return bad("dim and window must be positive".into());
        }
        if self.eval.ks.is_empty() || self.eval.ks.contains(&0) {
            return bad("eval.ks must list positive cut-offs".into());
        }
        if self.eval.lexicon.is_none() && self.eval.lexicon_size == 0 {
            return bad("eval.lexicon_size must be positive".into());
        }
        self.gan.validate()?;
        self.sgns_config("check").validate()
    }

    fn sgns_config(&self, label: &str) -> SgnsConfig {
        SgnsConfig {
            dim: self.dim,
            window: self.window,
            min_count: self.min_count,
            seed: seed::derive_seed(self.seed, label),
            ..self.sgns.clone()
        }
    }
}

/// One of the two corpus splits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum Split {
    A,
    B,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::A => "A",
            Split::B => "B",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Block {
    Unsupervised,
    Supervised,
}

impl fmt::Display for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Block::Unsupervised => "unsupervised",
            Block::Supervised => "supervised",
        })
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Side {
    pub algorithm: String,
    pub split: Split,
}

/// One alignment to run.
#[derive(Clone, Debug, PartialEq)]
pub struct CellSpec {
    pub id: String,
    pub block: Block,
    pub method: Method,
    /// Indices into the plan's algorithm list.
    pub source: (usize, Split),
    pub target: (usize, Split),
}

/// The cells of a grid, in output order: all diagonal cells, then the
/// off-diagonal cells, then their supervised controls.
pub fn grid_cells(plan: &ExperimentPlan) -> Vec<CellSpec> {
    let n = plan.algorithms.len();
    let block = if plan.method.is_unsupervised() {
        Block::Unsupervised
    } else {
        Block::Supervised
    };
    let make = |block: Block, method: Method, s: (usize, Split), t: (usize, Split)| CellSpec {
        id: format!(
            "{block}-{}-{}-{}-{}",
            plan.algorithms[s.0], s.1, plan.algorithms[t.0], t.1
        ),
        block,
        method,
        source: s,
        target: t,
    };
    let mut cells = Vec::new();
    for i in 0..n {
        cells.push(make(block, plan.method, (i, Split::A), (i, Split::B)));
    }
    for i in 0..n {
        for j in i + 1..n {
            cells.push(make(block, plan.method, (i, Split::A), (j, Split::A)));
        }
    }
    if plan.method.is_unsupervised() {
        for i in 0..n {
            for j in i + 1..n {
                cells.push(make(
                    Block::Supervised,
                    Method::Supervised,
                    (i, Split::A),
                    (j, Split::A),
                ));
            }
        }
    }
    cells
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GanSummary {
    pub best_iteration: usize,
    pub best_val_metric: f64,
    pub final_dis_loss: Option<f64>,
    pub final_gen_loss: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RefineSummary {
    pub outcome: String,
    pub rounds_run: usize,
    pub dictionary_sizes: Vec<usize>,
}

/// Everything known about one finished (or failed) cell.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RunRecord {
    pub cell_id: String,
    pub block: Block,
    pub method: String,
    pub source: Side,
    pub target: Side,
    pub version: String,
    pub plan: ExperimentPlan,
    pub gan_seed: Option<u64>,
    pub precision: Vec<PrecisionReport>,
    pub gan: Option<GanSummary>,
    pub refine: Option<RefineSummary>,
    pub seed_dictionary_size: Option<usize>,
    /// Wall-clock seconds per stage.
    pub timings: BTreeMap<String, f64>,
    pub paths: BTreeMap<String, PathBuf>,
    pub error: Option<String>,
}

impl RunRecord {
    pub fn precision_at(&self, k: usize) -> Option<f64> {
        self.precision.iter().find(|r| r.k == k).map(|r| r.precision)
    }
}

/// Splits a corpus according to the strategy.
pub fn split_corpus(corpus: &Corpus, strategy: SplitStrategy, root_seed: u64) -> (Corpus, Corpus) {
    match strategy {
        SplitStrategy::ContiguousHalves => corpus.halves(),
        SplitStrategy::SameSplit => (corpus.clone(), corpus.clone()),
        SplitStrategy::RandomDocuments => {
            let mut docs: Vec<usize> = (0..corpus.n_documents()).collect();
            docs.shuffle(&mut seed::derive_rng(root_seed, "split/documents"));
            let (a, b) = docs.split_at(docs.len() / 2);
            let (mut a, mut b) = (a.to_vec(), b.to_vec());
            a.sort_unstable();
            b.sort_unstable();
            (corpus.select_documents(&a), corpus.select_documents(&b))
        }
    }
}

/// Trains one space with `algorithm` on `corpus`. `label` keys the seed.
pub fn train_space(
    plan: &ExperimentPlan,
    algorithm: &Algorithm,
    corpus: Option<&Corpus>,
    split: Split,
    label: &str,
) -> Result<EmbeddingSpace> {
    let space = match algorithm {
        Algorithm::Sgns => {
            let corpus = corpus.ok_or(Error::EmptyCorpus)?;
            train_sgns_corpus(corpus, &plan.sgns_config(label))?.words
        }
        Algorithm::PpmiSvd => {
            let corpus = corpus.ok_or(Error::EmptyCorpus)?;
            let cooc = CoocMatrix::from_corpus(corpus, plan.window, plan.min_count)?;
            let opts = TruncatedSvdOptions {
                seed: seed::derive_seed(plan.seed, label),
                ..plan.svd
            };
            factorize_ppmi(&cooc, plan.dim, plan.ppmi_eig_exponent, opts)?.words
        }
        Algorithm::External { first, second, .. } => {
            let path = match split {
                Split::A => first,
                Split::B => second,
            };
            load_embeddings(path, plan.max_vocab)?
        }
    };
    Ok(match plan.max_vocab {
        Some(n) if n < space.len() => space.truncate(n),
        _ => space,
    })
}

/// Identity lexicon over the `n` most frequent shared words.
pub fn identity_lexicon(src: &EmbeddingSpace, tgt: &EmbeddingSpace, n: usize) -> Result<EvalLexicon> {
    let shared = shared_vocabulary(src, tgt);
    if shared.is_empty() {
        return Err(Error::InsufficientOverlap {
            requested: n,
            available: 0,
        });
    }
    EvalLexicon::identity(&shared[..n.min(shared.len())])
}

/// Identity pairs over the `n` most frequent shared words not in `exclude`.
pub fn supervision_dictionary(
    src: &EmbeddingSpace,
    tgt: &EmbeddingSpace,
    n: usize,
    exclude: &HashSet<String>,
) -> Result<SeedDictionary> {
    let words: Vec<String> = shared_vocabulary(src, tgt)
        .into_iter()
        .filter(|w| !exclude.contains(w))
        .take(n)
        .collect();
    if words.is_empty() {
        return Err(Error::EmptyDictionary);
    }
    if words.len() < n {
        log::warn!("only {} of {n} requested seed words are available", words.len());
    }
    SeedDictionary::identity(&words)
}

/// Result of aligning and evaluating one pair of spaces.
pub struct AlignmentOutcome {
    pub map: AlignmentMap,
    pub precision: Vec<PrecisionReport>,
    pub log: Option<TrainingLog>,
    pub gan: Option<GanSummary>,
    pub refine: Option<RefineSummary>,
    pub seed_dictionary_size: Option<usize>,
    pub timings: BTreeMap<String, f64>,
}

/// Normalizes both spaces, aligns them with `method` and evaluates.
pub fn align_and_evaluate(
    plan: &ExperimentPlan,
    method: Method,
    src: &EmbeddingSpace,
    tgt: &EmbeddingSpace,
    lexicon: &EvalLexicon,
    gan_seed: u64,
) -> Result<AlignmentOutcome> {
    let src = src.normalized(&plan.normalize_source)?;
    let tgt = tgt.normalized(&plan.normalize_target)?;
    let mut timings = BTreeMap::new();
    let mut out = AlignmentOutcome {
        map: AlignmentMap::identity(src.dim()),
        precision: Vec::new(),
        log: None,
        gan: None,
        refine: None,
        seed_dictionary_size: None,
        timings: BTreeMap::new(),
    };
    let start = Instant::now();
    match method {
        Method::Supervised => {
            let exclude: HashSet<String> =
                lexicon.entries().iter().map(|(s, _)| s.clone()).collect();
            let dict = supervision_dictionary(&src, &tgt, plan.seed_words, &exclude)?;
            out.seed_dictionary_size = Some(dict.len());
            out.map = procrustes_solve(&src, &tgt, &dict)?;
            timings.insert("procrustes".into(), start.elapsed().as_secs_f64());
        }
        Method::Gan | Method::GanRefine => {
            let config = GanConfig {
                seed: gan_seed,
                ..plan.gan.clone()
            };
            let result = train_gan(&src, &tgt, &config)?;
            timings.insert("gan".into(), start.elapsed().as_secs_f64());
            let last = result.log.records.last();
            out.gan = Some(GanSummary {
                best_iteration: result.log.best_iteration,
                best_val_metric: result.log.best_val_metric,
                final_dis_loss: last.map(|r| r.dis_loss).filter(|v| v.is_finite()),
                final_gen_loss: last.map(|r| r.gen_loss).filter(|v| v.is_finite()),
            });
            out.map = result.best;
            out.log = Some(result.log);
            if method == Method::GanRefine {
                let start = Instant::now();
                let r = refine(&src, &tgt, &out.map, &plan.refine)?;
                timings.insert("refine".into(), start.elapsed().as_secs_f64());
                out.refine = Some(RefineSummary {
                    outcome: match r.outcome {
                        RefineOutcome::Converged => "converged",
                        RefineOutcome::RoundsExhausted => "rounds_exhausted",
                        RefineOutcome::EmptyDictionary => "empty_dictionary",
                    }
                    .into(),
                    rounds_run: r.rounds_run,
                    dictionary_sizes: r.dictionary_sizes,
                });
                out.map = r.map;
            }
        }
    }
    let start = Instant::now();
    let index = RetrievalIndex::new(&src, &tgt, &out.map, plan.eval.scorer)?;
    out.precision = precision_at_ks(&index, &src, &tgt, lexicon, &plan.eval.ks)?;
    timings.insert("evaluate".into(), start.elapsed().as_secs_f64());
    out.timings = timings;
    Ok(out)
}

/// Lazily trained spaces keyed by algorithm and split.
struct SpaceCache<'a> {
    plan: &'a ExperimentPlan,
    splits: Option<(Corpus, Corpus)>,
    spaces: HashMap<(usize, Split), (EmbeddingSpace, PathBuf, f64)>,
}

impl SpaceCache<'_> {
    fn get(&mut self, key: (usize, Split)) -> Result<&(EmbeddingSpace, PathBuf, f64)> {
        if !self.spaces.contains_key(&key) {
            let alg = &self.plan.algorithms[key.0];
            let corpus = self.splits.as_ref().map(|(a, b)| match key.1 {
                Split::A => a,
                Split::B => b,
            });
            let start = Instant::now();
            let label = format!("train/{alg}/{}", key.1);
            log::info!("training {alg} on split {}", key.1);
            let space = train_space(self.plan, alg, corpus, key.1, &label)?;
            let secs = start.elapsed().as_secs_f64();
            let dir = self.plan.output_dir.join("embeddings");
            fs::create_dir_all(&dir)?;
            let path = dir.join(format!("{alg}_{}.vec", key.1));
            save_embeddings(&space, &path)?;
            self.spaces.insert(key, (space, path, secs));
        }
        Ok(&self.spaces[&key])
    }
}

fn load_corpus(plan: &ExperimentPlan) -> Result<Option<Corpus>> {
    if !plan.algorithms.iter().any(Algorithm::needs_corpus) {
        return Ok(None);
    }
    let path = plan.corpus.as_ref().ok_or(Error::EmptyCorpus)?;
    let corpus = Corpus::from_file(path)?;
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok(Some(corpus))
}

fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n")?;
    Ok(())
}

/// Runs every cell of the grid. Failed cells are recorded with their error
/// and the grid continues. Writes `results.csv`, `table.csv`, one directory
/// per cell and the GAN loss curves under the output directory.
pub fn run_grid(plan: &ExperimentPlan) -> Result<Vec<RunRecord>> {
    plan.validate()?;
    fs::create_dir_all(&plan.output_dir)?;
    write_json(plan, &plan.output_dir.join("plan.json"))?;
    let corpus = load_corpus(plan)?;
    let mut cache = SpaceCache {
        plan,
        splits: corpus.map(|c| split_corpus(&c, plan.split, plan.seed)),
        spaces: HashMap::new(),
    };

    let mut records = Vec::new();
    let mut logs = Vec::new();
    for cell in grid_cells(plan) {
        log::info!("cell {}", cell.id);
        let dir = plan.output_dir.join("cells").join(&cell.id);
        fs::create_dir_all(&dir)?;
        let gan_seed = cell
            .method
            .is_unsupervised()
            .then(|| seed::derive_seed(plan.seed, &format!("gan/{}", cell.id)));
        let mut record = RunRecord {
            cell_id: cell.id.clone(),
            block: cell.block,
            method: cell.method.to_string(),
            source: Side {
                algorithm: plan.algorithms[cell.source.0].to_string(),
                split: cell.source.1,
            },
            target: Side {
                algorithm: plan.algorithms[cell.target.0].to_string(),
                split: cell.target.1,
            },
            version: crate::VERSION.to_string(),
            plan: plan.clone(),
            gan_seed,
            precision: Vec::new(),
            gan: None,
            refine: None,
            seed_dictionary_size: None,
            timings: BTreeMap::new(),
            paths: BTreeMap::new(),
            error: None,
        };
        match run_cell(plan, &cell, &mut cache, &dir, gan_seed, &mut record) {
            Ok(Some(log)) => logs.push((cell.id.clone(), log)),
            Ok(None) => {}
            Err(e) => {
                log::warn!("cell {} failed: {e}", cell.id);
                record.error = Some(e.to_string());
            }
        }
        let record_path = dir.join("record.json");
        record.paths.insert("record".into(), record_path.clone());
        write_json(&record, &record_path)?;
        records.push(record);
    }

    write_results_csv(&records, &plan.eval.ks, &plan.output_dir.join("results.csv"))?;
    write_results_table(plan, &records, &plan.output_dir.join("table.csv"))?;
    if !logs.is_empty() {
        export_loss_curves(&logs, &plan.output_dir.join("loss_curves"))?;
    }
    Ok(records)
}

fn run_cell(
    plan: &ExperimentPlan,
    cell: &CellSpec,
    cache: &mut SpaceCache<'_>,
    dir: &Path,
    gan_seed: Option<u64>,
    record: &mut RunRecord,
) -> Result<Option<TrainingLog>> {
    let (src, src_path, src_secs) = cache.get(cell.source)?.clone();
    let (tgt, tgt_path, tgt_secs) = cache.get(cell.target)?.clone();
    record
        .timings
        .insert(format!("train_{}", record.source.algorithm), src_secs);
    record
        .timings
        .insert(format!("train_{}_target", record.target.algorithm), tgt_secs);
    record.paths.insert("source_embeddings".into(), src_path);
    record.paths.insert("target_embeddings".into(), tgt_path);

    let lexicon = match &plan.eval.lexicon {
        Some(p) => EvalLexicon::load(p)?,
        None => identity_lexicon(&src, &tgt, plan.eval.lexicon_size)?,
    };
    let outcome = align_and_evaluate(plan, cell.method, &src, &tgt, &lexicon, gan_seed.unwrap_or(0))?;
    record.timings.extend(outcome.timings.clone());
    record.precision = outcome.precision;
    record.gan = outcome.gan;
    record.refine = outcome.refine;
    record.seed_dictionary_size = outcome.seed_dictionary_size;

    let map_path = dir.join("map.txt");
    outcome.map.save(&map_path)?;
    record.paths.insert("map".into(), map_path);
    if let Some(log) = &outcome.log {
        let p = dir.join("gan_log.csv");
        log.save_csv(&p)?;
        record.paths.insert("gan_log".into(), p);
    }
    Ok(outcome.log)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| format!("{v}"))
}

/// Long-format results, one row per cell, without timing fields.
pub fn write_results_csv(records: &[RunRecord], ks: &[usize], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = [
        "block",
        "cell",
        "source_algorithm",
        "source_split",
        "target_algorithm",
        "target_split",
        "method",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend(ks.iter().map(|k| format!("p_at_{k}")));
    header.extend(
        ["n_evaluated", "n_skipped", "final_dis_loss", "status"]
            .iter()
            .map(|s| s.to_string()),
    );
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![
            r.block.to_string(),
            r.cell_id.clone(),
            r.source.algorithm.clone(),
            r.source.split.to_string(),
            r.target.algorithm.clone(),
            r.target.split.to_string(),
            r.method.clone(),
        ];
        row.extend(ks.iter().map(|&k| fmt_opt(r.precision_at(k))));
        let first = r.precision.first();
        row.push(first.map_or_else(String::new, |p| p.n_evaluated.to_string()));
        row.push(first.map_or_else(String::new, |p| p.n_skipped.to_string()));
        row.push(fmt_opt(r.gan.as_ref().and_then(|g| g.final_dis_loss)));
        row.push(match &r.error {
            None => "ok".to_string(),
            Some(e) => format!("error: {e}"),
        });
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// P@1 laid out like a source-by-target matrix, one block per method kind.
pub fn write_results_table(plan: &ExperimentPlan, records: &[RunRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let names: Vec<String> = plan.algorithms.iter().map(|a| a.to_string()).collect();
    let mut header = vec!["block".to_string(), "source".to_string()];
    header.extend(names.iter().cloned());
    w.write_record(&header)?;
    for block in [Block::Unsupervised, Block::Supervised] {
        if !records.iter().any(|r| r.block == block) {
            continue;
        }
        for s in &names {
            let mut row = vec![block.to_string(), s.clone()];
            for t in &names {
                let cell = records
                    .iter()
                    .find(|r| r.block == block && &r.source.algorithm == s && &r.target.algorithm == t);
                row.push(fmt_opt(cell.and_then(|r| r.precision_at(1))));
            }
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One point of a learning curve; `p_at_1` is `None` for failed sizes.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CurvePoint {
    pub fraction: f64,
    /// Tokens in the source-side sample.
    pub tokens: u64,
    pub p_at_1: Option<f64>,
    pub n_evaluated: usize,
    pub error: Option<String>,
}

fn sample_documents(corpus: &Corpus, fraction: f64, order: &[usize]) -> Corpus {
    if fraction >= 1.0 {
        return corpus.clone();
    }
    let n = ((corpus.n_documents() as f64 * fraction).ceil() as usize).max(1);
    let mut picked = order[..n.min(order.len())].to_vec();
    picked.sort_unstable();
    corpus.select_documents(&picked)
}

/// Learning curve over nested document samples of each split.
///
/// Both sides are trained with the plan's first algorithm. The evaluation
/// words are the most frequent words shared by every successfully trained
/// pair, so all points are scored on the same lexicon. Writes
/// `learning_curve.csv` (`tokens,p_at_1`; an empty value marks a failed
/// size) and `learning_curve_detail.csv`.
pub fn run_learning_curve(plan: &ExperimentPlan) -> Result<Vec<CurvePoint>> {
    plan.validate()?;
    if plan.sample_fractions.is_empty() {
        return Err(Error::InvalidConfig("no sample fractions given".into()));
    }
    let alg = plan.algorithms[0].clone();
    if !alg.needs_corpus() {
        return Err(Error::InvalidConfig(
            "the learning curve needs a trainable algorithm".into(),
        ));
    }
    let dir = plan.output_dir.join("learning_curve");
    fs::create_dir_all(&dir)?;
    let corpus = load_corpus(plan)?.ok_or(Error::EmptyCorpus)?;
    let (a, b) = split_corpus(&corpus, plan.split, plan.seed);
    drop(corpus);
    let order = |c: &Corpus, label: &str| {
        let mut o: Vec<usize> = (0..c.n_documents()).collect();
        o.shuffle(&mut seed::derive_rng(plan.seed, label));
        o
    };
    let (order_a, order_b) = (order(&a, "curve/order/A"), order(&b, "curve/order/B"));

    let mut trained: Vec<Result<(EmbeddingSpace, EmbeddingSpace)>> = Vec::new();
    let mut tokens = Vec::new();
    for &f in &plan.sample_fractions {
        let sa = sample_documents(&a, f, &order_a);
        let sb = sample_documents(&b, f, &order_b);
        tokens.push(sa.len() as u64);
        let suffix = if f >= 1.0 { String::new() } else { format!("/f={f}") };
        log::info!("learning curve: fraction {f}, {} + {} tokens", sa.len(), sb.len());
        let pair = train_space(plan, &alg, Some(&sa), Split::A, &format!("train/{alg}/A{suffix}"))
            .and_then(|x| {
                train_space(plan, &alg, Some(&sb), Split::B, &format!("train/{alg}/B{suffix}"))
                    .map(|y| (x, y))
            });
        trained.push(pair);
    }

    // Evaluation words: shared by every trained pair, ranked by the
    // frequencies of the largest successful source sample.
    let ok: Vec<&(EmbeddingSpace, EmbeddingSpace)> =
        trained.iter().filter_map(|r| r.as_ref().ok()).collect();
    let mut eval_words: Vec<String> = Vec::new();
    if let Some(largest) = ok.iter().max_by_key(|(s, _)| s.vocab().frequencies().iter().sum::<u64>()) {
        eval_words = shared_vocabulary(&largest.0, &largest.1)
            .into_iter()
            .filter(|w| {
                ok.iter()
                    .all(|(s, t)| s.vocab().contains(w) && t.vocab().contains(w))
            })
            .take(plan.eval.lexicon_size)
            .collect();
    }
    let cell_id = format!("{}-{alg}-A-{alg}-B", if plan.method.is_unsupervised() { Block::Unsupervised } else { Block::Supervised });

    let mut points = Vec::new();
    let mut logs = Vec::new();
    for (i, (&f, pair)) in plan.sample_fractions.iter().zip(trained).enumerate() {
        let mut point = CurvePoint {
            fraction: f,
            tokens: tokens[i],
            p_at_1: None,
            n_evaluated: 0,
            error: None,
        };
        let result = pair.and_then(|(src, tgt)| {
            if eval_words.is_empty() {
                return Err(Error::InsufficientOverlap {
                    requested: plan.eval.lexicon_size,
                    available: 0,
                });
            }
            let lexicon = EvalLexicon::identity(&eval_words)?;
            let label = if f >= 1.0 {
                format!("gan/{cell_id}")
            } else {
                format!("gan/{cell_id}/f={f}")
            };
            let mut eval_plan = plan.clone();
            eval_plan.eval.ks = vec![1];
            align_and_evaluate(
                &eval_plan,
                plan.method,
                &src,
                &tgt,
                &lexicon,
                seed::derive_seed(plan.seed, &label),
            )
        });
        match result {
            Ok(outcome) => {
                point.p_at_1 = outcome.precision.first().map(|p| p.precision);
                point.n_evaluated = outcome.precision.first().map_or(0, |p| p.n_evaluated);
                if let Some(log) = outcome.log {
                    logs.push((format!("fraction-{f}"), log));
                }
            }
            Err(e) => {
                log::warn!("learning curve point {f} failed: {e}");
                point.error = Some(e.to_string());
            }
        }
        points.push(point);
    }

    let mut w = csv::Writer::from_path(dir.join("learning_curve.csv"))?;
    w.write_record(["tokens", "p_at_1"])?;
    for p in &points {
        w.write_record([p.tokens.to_string(), fmt_opt(p.p_at_1)])?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(dir.join("learning_curve_detail.csv"))?;
    w.write_record(["fraction", "tokens", "p_at_1", "n_evaluated", "status"])?;
    for p in &points {
        w.write_record([
            format!("{}", p.fraction),
            p.tokens.to_string(),
            fmt_opt(p.p_at_1),
            p.n_evaluated.to_string(),
            p.error.as_ref().map_or("ok".to_string(), |e| format!("error: {e}")),
        ])?;
    }
    w.flush()?;
    if !logs.is_empty() {
        export_loss_curves(&logs, &dir.join("loss_curves"))?;
    }
    Ok(points)
}

fn file_stem(run_id: &str) -> String {
    run_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect()
}

/// Writes `<run_id>.csv` per log plus `loss_curves.csv` with columns
/// `run_id,iteration,dis_loss,gen_loss,val_metric`. Returns the per-log
/// paths followed by the merged path.
pub fn export_loss_curves(logs: &[(String, TrainingLog)], dir: &Path) -> Result<Vec<PathBuf>> {
    if logs.is_empty() {
        return Err(Error::InvalidConfig("no training logs to export".into()));
    }
    fs::create_dir_all(dir)?;
    let mut paths = Vec::new();
    for (id, log) in logs {
        let p = dir.join(format!("{}.csv", file_stem(id)));
        log.save_csv(&p)?;
        paths.push(p);
    }
    let merged = dir.join("loss_curves.csv");
    let mut w = csv::Writer::from_path(&merged)?;
    w.write_record(["run_id", "iteration", "dis_loss", "gen_loss", "val_metric"])?;
    for (id, log) in logs {
        for r in &log.records {
            let [it, d, g, v] = r.csv_fields();
            w.write_record([id.as_str(), &it, &d, &g, &v])?;
        }
    }
    w.flush()?;
    paths.push(merged);
    Ok(paths)
}

/// Mean discriminator loss over the last `fraction` of a log's records.
pub fn tail_dis_loss(log: &TrainingLog, fraction: f64) -> Option<f64> {
    let recs: Vec<f64> = log
        .records
        .iter()
        .map(|r| r.dis_loss)
        .filter(|v| v.is_finite())
        .collect();
    if recs.is_empty() {
        return None;
    }
    let n = ((recs.len() as f64 * fraction).ceil() as usize).clamp(1, recs.len());
    Some(recs[recs.len() - n..].iter().sum::<f64>() / n as f64)
}
