//! Skip-gram with negative sampling.
//!
//! For every word position and every context within the window, one
//! stochastic step ascends
//! `log s(u_w . v_c) + sum_n log s(-u_w . v_n)`
//! where the `v_n` are drawn from the unigram distribution raised to
//! `context_smoothing`.

use ndarray::Array2;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;

use crate::embedding::EmbeddingSpace;
use crate::error::{Error, Result};
use crate::seed;

use super::preprocess::Corpus;

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SgnsConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// The rate decays linearly to `learning_rate * min_rate_fraction`.
    pub min_rate_fraction: f64,
    /// Frequent-word subsampling threshold; `None` disables subsampling.
    pub subsample_threshold: Option<f64>,
    /// Exponent applied to counts in the negative-sampling distribution.
    pub context_smoothing: f64,
    /// Draw the effective window uniformly from `1..=window` per position.
    pub dynamic_window: bool,
    pub min_count: u64,
    pub seed: u64,
}

impl Default for SgnsConfig {
    fn default() -> Self {
        SgnsConfig {
            dim: 300,
            window: 2,
            negatives: 5,
            epochs: 5,
            learning_rate: 0.025,
            min_rate_fraction: 1e-4,
            subsample_threshold: None,
            context_smoothing: 1.0,
            dynamic_window: false,
            min_count: 100,
            seed: 1,
        }
    }
}

impl SgnsConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.dim == 0 {
            return bad("dim must be at least 1");
        }
        if self.window == 0 {
            return bad("window must be at least 1");
        }
        if self.negatives == 0 {
            return bad("negatives must be at least 1");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if let Some(t) = self.subsample_threshold {
            if !(t > 0.0) {
                return bad("subsample_threshold must be positive");
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SgnsModel {
    pub words: EmbeddingSpace,
    pub contexts: Array2<f64>,
    /// Mean per-pair loss of each epoch.
    pub epoch_losses: Vec<f64>,
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `log s(u . v_pos) + sum log s(-u . v_neg)` for one training pair.
pub fn sgns_objective(u: &[f64], positive: &[f64], negatives: &[&[f64]]) -> f64 {
    log_sigmoid(dot(u, positive)) + negatives.iter().map(|n| log_sigmoid(-dot(u, n))).sum::<f64>()
}

/// Gradients of [`sgns_objective`].
#[derive(Clone, Debug, PartialEq)]
pub struct SgnsGradients {
    pub word: Vec<f64>,
    pub positive: Vec<f64>,
    pub negatives: Vec<Vec<f64>>,
}

pub fn sgns_gradients(u: &[f64], positive: &[f64], negatives: &[&[f64]]) -> SgnsGradients {
    let gp = 1.0 - sigmoid(dot(u, positive));
    let mut word: Vec<f64> = positive.iter().map(|v| gp * v).collect();
    let pos_grad = u.iter().map(|x| gp * x).collect();
    let mut neg_grads = Vec::with_capacity(negatives.len());
    for n in negatives {
        let gn = -sigmoid(dot(u, n));
        for (w, v) in word.iter_mut().zip(n.iter()) {
            *w += gn * v;
        }
        neg_grads.push(u.iter().map(|x| gn * x).collect());
    }
    SgnsGradients {
        word,
        positive: pos_grad,
        negatives: neg_grads,
    }
}

/// Trains on a token sequence.
pub fn train_sgns<S: AsRef<str>>(tokens: &[S], config: &SgnsConfig) -> Result<EmbeddingSpace> {
    Ok(train_sgns_corpus(&Corpus::from_tokens(tokens), config)?.words)
}

struct Trainer {
    dim: usize,
    words: Vec<f64>,
    contexts: Vec<f64>,
    grad: Vec<f64>,
}

impl Trainer {
    /// One update for `(w, c)` against the sampled negatives. Returns the
    /// pair loss measured before the update.
    fn step(&mut self, w: usize, c: usize, negs: &[usize], lr: f64) -> f64 {
        let d = self.dim;
        self.grad.iter_mut().for_each(|g| *g = 0.0);
        let u = &self.words[w * d..(w + 1) * d];
        let mut loss = 0.0;
        for (t, label) in std::iter::once((c, 1.0)).chain(negs.iter().map(|&n| (n, 0.0))) {
            let v = &mut self.contexts[t * d..(t + 1) * d];
            let f = dot(u, v);
            loss -= if label > 0.0 { log_sigmoid(f) } else { log_sigmoid(-f) };
            let g = (label - sigmoid(f)) * lr;
            for ((gr, vi), ui) in self.grad.iter_mut().zip(v.iter_mut()).zip(u) {
                *gr += g * *vi;
                *vi += g * ui;
            }
        }
        for (ui, gr) in self.words[w * d..(w + 1) * d].iter_mut().zip(&self.grad) {
            *ui += gr;
        }
        loss
    }
}

/// Trains on an interned corpus. Single-threaded and bit-reproducible for a
/// fixed seed.
pub fn train_sgns_corpus(corpus: &Corpus, config: &SgnsConfig) -> Result<SgnsModel> {
    config.validate()?;
    let stats = corpus.stats(config.min_count);
    stats.require_nonempty()?;
    let vocab = stats.vocab;
    let ids = corpus.encode(&vocab);
    let n = vocab.len();
    let d = config.dim;
    let mut rng = seed::rng_from_seed(config.seed);

    let init = 0.5 / d as f64;
    let words: Vec<f64> = (0..n * d).map(|_| rng.random_range(-init..init)).collect();
    let mut trainer = Trainer {
        dim: d,
        words,
        contexts: vec![0.0; n * d],
        grad: vec![0.0; d],
    };

    let weights: Vec<f64> = vocab
        .frequencies()
        .iter()
        .map(|&f| (f as f64).powf(config.context_smoothing))
        .collect();
    let noise = WeightedAliasIndex::new(weights)
        .map_err(|e| Error::InvalidConfig(format!("negative sampling distribution: {e}")))?;

    let total_words: f64 = ids.len() as f64;
    let keep_prob: Option<Vec<f64>> = config.subsample_threshold.map(|t| {
        vocab
            .frequencies()
            .iter()
            .map(|&f| {
                let f = f as f64;
                let tn = t * total_words;
                (((f / tn).sqrt() + 1.0) * tn / f).min(1.0)
            })
            .collect()
    });

    let total_steps = (config.epochs as f64 * total_words).max(1.0);
    let mut processed = 0.0;
    let mut negs = vec![0usize; config.negatives];
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut sentence: Vec<usize> = Vec::with_capacity(ids.len());
    for epoch in 0..config.epochs {
        sentence.clear();
        match &keep_prob {
            Some(p) => sentence.extend(
                ids.iter()
                    .map(|&i| i as usize)
                    .filter(|&i| p[i] >= 1.0 || rng.random::<f64>() < p[i]),
            ),
            None => sentence.extend(ids.iter().map(|&i| i as usize)),
        }
        let mut loss = 0.0;
        let mut pairs = 0u64;
        let len = sentence.len();
        for i in 0..len {
            let progress = (processed + i as f64) / total_steps;
            let lr = config.learning_rate * (1.0 - progress).max(config.min_rate_fraction);
            let b = if config.dynamic_window {
                rng.random_range(1..=config.window)
            } else {
                config.window
            };
            let w = sentence[i];
            let lo = i.saturating_sub(b);
            let hi = (i + b).min(len - 1);
            for j in lo..=hi {
                if j == i {
                    continue;
                }
                let c = sentence[j];
                let mut m = 0;
                for _ in 0..config.negatives {
                    let s = noise.sample(&mut rng);
                    if s != c {
                        negs[m] = s;
                        m += 1;
                    }
                }
                loss += trainer.step(w, c, &negs[..m], lr);
                pairs += 1;
            }
        }
        processed += total_words;
        let mean = if pairs > 0 { loss / pairs as f64 } else { 0.0 };
        log::debug!("sgns epoch {}: {} pairs, mean loss {:.5}", epoch + 1, pairs, mean);
        epoch_losses.push(mean);
    }

    let words = Array2::from_shape_vec((n, d), trainer.words)
        .map_err(|e| Error::Degenerate(e.to_string()))?;
    let contexts = Array2::from_shape_vec((n, d), trainer.contexts)
        .map_err(|e| Error::Degenerate(e.to_string()))?;
    Ok(SgnsModel {
        words: EmbeddingSpace::new(vocab, words)?,
        contexts,
        epoch_losses,
    })
}
