//! Adversarial alignment with a linear generator.
//!
//! The generator is the map `W` (initialized to the identity); the
//! discriminator is a two-hidden-layer classifier telling target vectors
//! (label `1 - s`) from mapped source vectors (label `s`). Each iteration
//! runs `dis_steps` discriminator updates followed by one generator update
//! that pushes mapped source vectors towards the target label.

mod discriminator;
mod refine;

use std::io::Write;

use ndarray::{Array1, Array2, Axis};
use rand::Rng;

use crate::embedding::EmbeddingSpace;
use crate::error::{Error, Result};
use crate::procrustes::AlignmentMap;
use crate::retrieval::{RetrievalIndex, Scorer};
use crate::seed;

pub use discriminator::{
    bce_with_grad, discriminator_forward, discriminator_loss_and_grads, generator_loss_and_grad,
    leaky_relu, sigmoid, DiscriminatorGrads, DiscriminatorParams, Dropout, ForwardCache,
};
pub use refine::{induce_dictionary, refine, RefineConfig, RefineOutcome, RefineResult};

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GanConfig {
    pub epochs: usize,
    /// Optimizer iterations (one generator step each) per epoch.
    pub iterations_per_epoch: usize,
    pub dis_steps: usize,
    pub batch_size: usize,
    pub dis_hidden: usize,
    /// Only the `sample_pool` most frequent words of each side are sampled.
    pub sample_pool: usize,
    pub dis_learning_rate: f64,
    pub gen_learning_rate: f64,
    /// Multiplies both learning rates after every epoch.
    pub lr_decay: f64,
    pub label_smoothing: f64,
    pub input_dropout: f64,
    pub leaky_slope: f64,
    /// Orthogonality update strength; 0 disables it.
    pub ortho_beta: f64,
    pub eval_interval: usize,
    /// Training stops with an error when `|W W^T - I|_F` exceeds this at an
    /// evaluation point while `ortho_beta > 0`.
    pub ortho_tolerance: f64,
    /// Loss records are averaged over this many iterations.
    pub log_interval: usize,
    /// Number of most frequent source words used by the validation metric.
    pub val_words: usize,
    pub val_scorer: Scorer,
    pub seed: u64,
}

impl Default for GanConfig {
    fn default() -> Self {
        GanConfig {
            epochs: 5,
            iterations_per_epoch: 10_000,
            dis_steps: 5,
            batch_size: 32,
            dis_hidden: 2048,
            sample_pool: 75_000,
            dis_learning_rate: 0.1,
            gen_learning_rate: 0.1,
            lr_decay: 0.95,
            label_smoothing: 0.2,
            input_dropout: 0.1,
            leaky_slope: 0.2,
            ortho_beta: 0.01,
            eval_interval: 500,
            ortho_tolerance: 0.1,
            log_interval: 100,
            val_words: 2000,
            val_scorer: Scorer::CSLS_DEFAULT,
            seed: 1,
        }
    }
}

impl GanConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.dis_hidden == 0 || self.sample_pool == 0 || self.val_words == 0 {
            return bad("dis_hidden, sample_pool and val_words must be positive");
        }
        if self.eval_interval == 0 || self.log_interval == 0 {
            return bad("eval_interval and log_interval must be positive");
        }
        if !(self.dis_learning_rate > 0.0 && self.gen_learning_rate > 0.0) {
            return bad("learning rates must be positive");
        }
        if !(self.lr_decay > 0.0) {
            return bad("lr_decay must be positive");
        }
        if !(0.0..0.5).contains(&self.label_smoothing) {
            return bad("label_smoothing must lie in [0, 0.5)");
        }
        if !(0.0..1.0).contains(&self.input_dropout) {
            return bad("input_dropout must lie in [0, 1)");
        }
        if !(self.ortho_beta >= 0.0) {
            return bad("ortho_beta must be non-negative");
        }
        Ok(())
    }
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct LogRecord {
    pub iteration: usize,
    /// Mean discriminator loss since the previous record.
    pub dis_loss: f64,
    /// Mean generator loss since the previous record.
    pub gen_loss: f64,
    pub val_metric: Option<f64>,
    /// `|W W^T - I|_F` at evaluation points.
    pub ortho_error: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, serde::Serialize)]
pub struct TrainingLog {
    pub records: Vec<LogRecord>,
    /// Iteration of the snapshot with the best validation metric.
    pub best_iteration: usize,
    pub best_val_metric: f64,
}

impl TrainingLog {
    /// CSV `iteration,dis_loss,gen_loss,val_metric`; an empty field marks
    /// records without a validation point.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["iteration", "dis_loss", "gen_loss", "val_metric"])?;
        for r in &self.records {
            csv.write_record(r.csv_fields())?;
        }
        csv.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    /// Reads the CSV written by [`write_csv`](Self::write_csv).
    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(r);
        let mut records = Vec::new();
        for (i, row) in reader.records().enumerate() {
            let row = row?;
            let field = |k: usize| -> Result<&str> {
                row.get(k)
                    .ok_or_else(|| Error::format(i + 2, "missing column"))
            };
            let num = |s: &str| -> Result<f64> {
                s.parse::<f64>()
                    .map_err(|e| Error::format(i + 2, format!("bad number '{s}': {e}")))
            };
            let val = field(3)?;
            records.push(LogRecord {
                iteration: field(0)?
                    .parse()
                    .map_err(|e| Error::format(i + 2, format!("bad iteration: {e}")))?,
                dis_loss: num(field(1)?)?,
                gen_loss: num(field(2)?)?,
                val_metric: if val.is_empty() { None } else { Some(num(val)?) },
                ortho_error: None,
            });
        }
        let best = records
            .iter()
            .filter_map(|r| r.val_metric.map(|v| (r.iteration, v)))
            .fold(None, |acc: Option<(usize, f64)>, (it, v)| match acc {
                Some((_, bv)) if bv >= v => acc,
                _ => Some((it, v)),
            });
        Ok(TrainingLog {
            records,
            best_iteration: best.map_or(0, |b| b.0),
            best_val_metric: best.map_or(f64::NAN, |b| b.1),
        })
    }

    pub fn last_dis_loss(&self) -> Option<f64> {
        self.records.last().map(|r| r.dis_loss)
    }
}

impl LogRecord {
    pub(crate) fn csv_fields(&self) -> [String; 4] {
        [
            self.iteration.to_string(),
            format!("{}", self.dis_loss),
            format!("{}", self.gen_loss),
            self.val_metric.map_or_else(String::new, |v| format!("{v}")),
        ]
    }
}

/// Best and final maps of one adversarial run.
#[derive(Clone, Debug)]
pub struct GanResult {
    pub best: AlignmentMap,
    pub last: AlignmentMap,
    pub log: TrainingLog,
}

/// Mutable training state: discriminator, generator and the sampling RNG.
pub struct GanState {
    pub discriminator: DiscriminatorParams,
    pub omega: Array2<f64>,
    pub rng: seed::Rng,
}

impl GanState {
    pub fn new(dim: usize, config: &GanConfig) -> Self {
        let mut rng = seed::rng_from_seed(config.seed);
        let discriminator = DiscriminatorParams::init(dim, config.dis_hidden, &mut rng);
        GanState {
            discriminator,
            omega: Array2::eye(dim),
            rng,
        }
    }
}

fn sample_rows<R: Rng + ?Sized>(
    space: &EmbeddingSpace,
    pool: usize,
    n: usize,
    rng: &mut R,
) -> Array2<f64> {
    let pool = pool.min(space.len());
    let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..pool)).collect();
    space.vectors().select(Axis(0), &idx)
}

/// One discriminator update on a fresh batch; returns the batch loss.
///
/// The batch holds `batch_size` target rows labelled `1 - s` followed by
/// `batch_size` mapped source rows labelled `s`. The generator is held
/// fixed.
pub fn discriminator_step(
    state: &mut GanState,
    src: &EmbeddingSpace,
    tgt: &EmbeddingSpace,
    config: &GanConfig,
    lr: f64,
) -> f64 {
    let bs = config.batch_size;
    let t = sample_rows(tgt, config.sample_pool, bs, &mut state.rng);
    let z = sample_rows(src, config.sample_pool, bs, &mut state.rng);
    let mapped = z.dot(&state.omega.t());
    let x = ndarray::concatenate(Axis(0), &[t.view(), mapped.view()]).expect("same width");
    let mut labels = Array1::from_elem(2 * bs, config.label_smoothing);
    labels
        .slice_mut(ndarray::s![..bs])
        .fill(1.0 - config.label_smoothing);
    let dropout = Dropout {
        rate: config.input_dropout,
        rng: &mut state.rng,
    };
    let cache = state
        .discriminator
        .forward_batch(x.view(), config.leaky_slope, Some(dropout));
    let (loss, dlogits) = bce_with_grad(cache.probs.view(), labels.view());
    let (grads, _) = state
        .discriminator
        .backward(&cache, dlogits.view(), config.leaky_slope);
    state.discriminator.sgd_update(&grads, lr);
    loss
}

/// One generator update; returns the loss before the update.
///
/// Minimizes `BCE(D(W z), 1 - s)` over a batch of source rows with the
/// discriminator frozen (and in evaluation mode), then applies the
/// orthogonality update when `ortho_beta > 0`.
pub fn generator_step(
    state: &mut GanState,
    src: &EmbeddingSpace,
    config: &GanConfig,
    lr: f64,
) -> f64 {
    let z = sample_rows(src, config.sample_pool, config.batch_size, &mut state.rng);
    let (loss, grad) = generator_loss_and_grad(
        &state.discriminator,
        state.omega.view(),
        z.view(),
        config.label_smoothing,
        config.leaky_slope,
    );
    state.omega.scaled_add(-lr, &grad);
    if config.ortho_beta > 0.0 {
        orthogonalize(&mut state.omega, config.ortho_beta);
    }
    loss
}

/// `W <- (1 + b) W - b (W W^T) W`.
pub fn orthogonalize(w: &mut Array2<f64>, beta: f64) {
    let wwt_w = w.dot(&w.t()).dot(&*w);
    *w *= 1.0 + beta;
    w.scaled_add(-beta, &wwt_w);
}

/// Mean score between each of the `n_words` most frequent mapped source
/// vectors and its best target. CSLS penalties are computed over those
/// query words and the whole target space.
pub fn validation_metric(
    src: &EmbeddingSpace,
    tgt: &EmbeddingSpace,
    omega: &AlignmentMap,
    n_words: usize,
    scorer: Scorer,
) -> Result<f64> {
    let n = n_words.min(src.len());
    if n == 0 {
        return Err(Error::EmptySpace);
    }
    let queries = src.vectors().slice(ndarray::s![..n, ..]).to_owned();
    let index = RetrievalIndex::from_matrices(queries.view(), tgt.vectors(), omega, scorer)?;
    let rows: Vec<usize> = (0..n).collect();
    let best = index.best_matches(&rows);
    Ok(best.iter().map(|(_, s)| s).sum::<f64>() / n as f64)
}

fn check_inputs(src: &EmbeddingSpace, tgt: &EmbeddingSpace) -> Result<()> {
    if src.dim() != tgt.dim() {
        return Err(Error::DimensionMismatch {
            expected: src.dim(),
            found: tgt.dim(),
        });
    }
    for (name, space) in [("source", src), ("target", tgt)] {
        if space.is_empty() {
            return Err(Error::EmptySpace);
        }
        if let Some(&i) = space.zero_rows(1e-12).first() {
            return Err(Error::Degenerate(format!(
                "{name} row '{}' has zero norm",
                space.vocab().word(i)
            )));
        }
        let var: f64 = space
            .vectors()
            .var_axis(Axis(0), 0.0)
            .iter()
            .sum();
        if var < 1e-24 {
            return Err(Error::Degenerate(format!("{name} space has zero variance")));
        }
    }
    Ok(())
}

/// Runs the adversarial game and keeps the map with the best validation
/// metric. The identity start is evaluated as iteration 0.
pub fn train_gan(src: &EmbeddingSpace, tgt: &EmbeddingSpace, config: &GanConfig) -> Result<GanResult> {
    config.validate()?;
    check_inputs(src, tgt)?;
    let d = src.dim();
    let mut state = GanState::new(d, config);
    let mut log = TrainingLog::default();

    let evaluate = |omega: &Array2<f64>| -> Result<(f64, f64)> {
        let map = AlignmentMap::new(omega.clone())?;
        let v = validation_metric(src, tgt, &map, config.val_words, config.val_scorer)?;
        Ok((v, map.orthogonality_error()))
    };

    let (v0, e0) = evaluate(&state.omega)?;
    let mut best = (0usize, v0, state.omega.clone());
    log.records.push(LogRecord {
        iteration: 0,
        dis_loss: f64::NAN,
        gen_loss: f64::NAN,
        val_metric: Some(v0),
        ortho_error: Some(e0),
    });

    let mut dis_lr = config.dis_learning_rate;
    let mut gen_lr = config.gen_learning_rate;
    let mut iteration = 0usize;
    let (mut dis_acc, mut gen_acc, mut dis_n, mut gen_n) = (0.0, 0.0, 0usize, 0usize);
    for epoch in 0..config.epochs {
        for _ in 0..config.iterations_per_epoch {
            for _ in 0..config.dis_steps {
                dis_acc += discriminator_step(&mut state, src, tgt, config, dis_lr);
                dis_n += 1;
            }
            gen_acc += generator_step(&mut state, src, config, gen_lr);
            gen_n += 1;
            iteration += 1;

            let eval_now = iteration % config.eval_interval == 0;
            if eval_now || iteration % config.log_interval == 0 {
                let dis_loss = if dis_n > 0 { dis_acc / dis_n as f64 } else { f64::NAN };
                let gen_loss = gen_acc / gen_n as f64;
                if !dis_loss.is_finite() && dis_n > 0 || !gen_loss.is_finite() {
                    return Err(Error::Degenerate(format!(
                        "non-finite loss at iteration {iteration}"
                    )));
                }
                let mut record = LogRecord {
                    iteration,
                    dis_loss,
                    gen_loss,
                    val_metric: None,
                    ortho_error: None,
                };
                if eval_now {
                    let (v, e) = evaluate(&state.omega)?;
                    if config.ortho_beta > 0.0 && e > config.ortho_tolerance {
                        return Err(Error::OrthogonalityDrift(e));
                    }
                    if v > best.1 {
                        best = (iteration, v, state.omega.clone());
                    }
                    record.val_metric = Some(v);
                    record.ortho_error = Some(e);
                    log::debug!(
                        "gan it {iteration}: dis {dis_loss:.4} gen {gen_loss:.4} val {v:.4} ortho {e:.2e}"
                    );
                }
                log.records.push(record);
                (dis_acc, gen_acc, dis_n, gen_n) = (0.0, 0.0, 0, 0);
            }
        }
        dis_lr *= config.lr_decay;
        gen_lr *= config.lr_decay;
        log::info!("gan epoch {} done at iteration {iteration}", epoch + 1);
    }

    log.best_iteration = best.0;
    log.best_val_metric = best.1;
    Ok(GanResult {
        best: AlignmentMap::new(best.2)?,
        last: AlignmentMap::new(state.omega)?,
        log,
    })
}
