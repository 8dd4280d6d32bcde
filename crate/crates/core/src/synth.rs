//! Synthetic data: Gaussian embedding spaces and a topic-model text corpus.
//!
//! The corpus generator produces plain text with a Zipfian vocabulary of
//! pronounceable pseudo-words. Documents mix a few topics; within a
//! document consecutive tokens tend to share a topic, so short windows
//! carry real co-occurrence structure. Output includes capitalization,
//! punctuation and digits so that preprocessing is exercised as well.

use std::collections::HashSet;
use std::io::Write;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::{Distribution, Gamma};

use crate::embedding::{EmbeddingSpace, Vocabulary};
use crate::error::{Error, Result};
use crate::linalg::gaussian_matrix;
use crate::seed;

/// `n` unit-normalized rows drawn from an anisotropic Gaussian with a
/// random non-zero mean. Words are named `w0`, `w1`, ... with descending
/// frequencies so that row order is frequency order.
///
/// An isotropic zero-mean Gaussian is invariant under rotation, so no
/// unsupervised method could tell a rotated copy from the original; the
/// spread of per-axis scales and the mean give the distribution a shape.
pub fn gaussian_space<R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> EmbeddingSpace {
    gaussian_space_with(n, d, DEFAULT_DECAY, DEFAULT_MEAN_SCALE, rng)
}

/// Per-axis standard deviation ratio between consecutive axes.
pub const DEFAULT_DECAY: f64 = 0.9;
pub const DEFAULT_MEAN_SCALE: f64 = 0.5;

/// Like [`gaussian_space`]; axis `j` has standard deviation `decay^j`
/// and mean `+-mean_scale * decay^j` with a random sign.
pub fn gaussian_space_with<R: Rng + ?Sized>(
    n: usize,
    d: usize,
    decay: f64,
    mean_scale: f64,
    rng: &mut R,
) -> EmbeddingSpace {
    let mut m = gaussian_matrix(n, d, rng);
    let scales = Array1::from_shape_fn(d, |j| decay.powi(j as i32));
    let mean = scales.mapv(|s| if rng.random::<bool>() { s } else { -s }) * mean_scale;
    for mut row in m.rows_mut() {
        row *= &scales;
        row += &mean;
        let norm = row.dot(&row).sqrt();
        row /= norm;
    }
    let words: Vec<String> = (0..n).map(|i| format!("w{i}")).collect();
    let freqs: Vec<u64> = (0..n).map(|i| (n - i) as u64).collect();
    let vocab = Vocabulary::new(words, freqs).expect("generated vocabulary is valid");
    EmbeddingSpace::new(vocab, m).expect("finite rows")
}

/// Rows of `space` multiplied by `q^T`, i.e. every vector mapped by `q`.
pub fn rotated_copy(space: &EmbeddingSpace, q: &Array2<f64>) -> EmbeddingSpace {
    space
        .with_vectors(space.vectors().dot(&q.t()))
        .expect("same shape")
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SynthCorpusConfig {
    pub vocab_size: usize,
    pub n_topics: usize,
    /// Stop once at least this many bytes were written.
    pub target_bytes: u64,
    pub mean_doc_tokens: usize,
    pub zipf_exponent: f64,
    /// Probability that a token keeps the previous token's topic.
    pub topic_persistence: f64,
    /// The most frequent `function_words` appear in every topic alike.
    pub function_words: usize,
    /// Share of every topic's token mass taken by function words.
    pub function_share: f64,
    /// Words and topics are points in a latent space of this dimension;
    /// a word's affinity to a topic decays with their distance.
    pub latent_dim: usize,
    /// Standard deviation ratio between consecutive latent axes.
    pub latent_decay: f64,
    /// Width of the affinity kernel, in units of the first axis' scale.
    pub topic_width: f64,
    /// Dirichlet concentration of per-document topic mixtures.
    pub doc_alpha: f64,
    pub seed: u64,
}

impl Default for SynthCorpusConfig {
    fn default() -> Self {
        SynthCorpusConfig {
            vocab_size: 20_000,
            n_topics: 60,
            target_bytes: 50_000_000,
            mean_doc_tokens: 300,
            zipf_exponent: 1.0,
            topic_persistence: 0.75,
            function_words: 60,
            function_share: 0.3,
            latent_dim: 8,
            latent_decay: 0.8,
            topic_width: 0.5,
            doc_alpha: 0.1,
            seed: 1,
        }
    }
}

const ONSETS: &[&str] = &[
    "b", "c", "d", "f", "g", "h", "j", "k", "l", "m", "n", "p", "r", "s", "t", "v", "w", "z",
    "br", "ch", "dr", "fl", "gr", "kl", "pr", "sh", "st", "th", "tr",
];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ai", "ea", "ou"];
const CODAS: &[&str] = &["", "", "", "n", "r", "s", "l", "m", "t", "x"];
const DIGIT_WORDS: &[&str] = &[
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine",
];

/// `n` distinct pseudo-words; shorter words go to lower (more frequent)
/// ranks. Words that would collide with spelled-out digits are skipped.
pub fn pseudo_words<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<String> {
    let mut seen: HashSet<String> = DIGIT_WORDS.iter().map(|s| s.to_string()).collect();
    let mut words = Vec::with_capacity(n);
    let mut syllables = 1usize;
    let mut failures = 0usize;
    while words.len() < n {
        let mut w = String::new();
        for _ in 0..syllables {
            w.push_str(ONSETS[rng.random_range(0..ONSETS.len())]);
            w.push_str(VOWELS[rng.random_range(0..VOWELS.len())]);
        }
        w.push_str(CODAS[rng.random_range(0..CODAS.len())]);
        if seen.insert(w.clone()) {
            words.push(w);
            failures = 0;
        } else {
            failures += 1;
            if failures > 200 {
                syllables += 1;
                failures = 0;
            }
        }
    }
    words.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    words
}

/// The generative model behind [`generate_corpus`].
pub struct TopicModel {
    pub words: Vec<String>,
    topic_words: Vec<WeightedAliasIndex<f64>>,
    config: SynthCorpusConfig,
}

impl TopicModel {
    pub fn new(config: &SynthCorpusConfig) -> Result<Self> {
        if config.vocab_size < 2 || config.n_topics == 0 || config.mean_doc_tokens == 0 {
            return Err(Error::InvalidConfig(
                "vocab_size >= 2, n_topics >= 1 and mean_doc_tokens >= 1 required".into(),
            ));
        }
        if !(0.0..1.0).contains(&config.topic_persistence)
            || !(config.doc_alpha > 0.0)
            || config.latent_dim == 0
            || !(config.latent_decay > 0.0)
            || !(config.topic_width > 0.0)
            || !(0.0..1.0).contains(&config.function_share)
        {
            return Err(Error::InvalidConfig(
                "topic_persistence and function_share must lie in [0, 1); doc_alpha, \
                 latent_dim, latent_decay and topic_width must be positive"
                    .into(),
            ));
        }
        let mut rng = seed::derive_rng(config.seed, "synth-vocabulary");
        let words = pseudo_words(config.vocab_size, &mut rng);
        let k = config.n_topics;
        let n_function = config.function_words.min(words.len());
        let zipf: Vec<f64> = (0..words.len())
            .map(|r| 1.0 / ((r + 1) as f64).powf(config.zipf_exponent))
            .collect();
        let scales = Array1::from_shape_fn(config.latent_dim, |j| config.latent_decay.powi(j as i32));
        let centers = gaussian_matrix(k, config.latent_dim, &mut rng) * &scales;
        let width_sq = 2.0 * config.topic_width * config.topic_width;
        // Every content word gets its own topic profile, normalized so that
        // its overall frequency follows the Zipf weight.
        let mut weights = vec![vec![0.0; words.len()]; k];
        for r in n_function..words.len() {
            let z = gaussian_matrix(1, config.latent_dim, &mut rng).row(0).to_owned() * &scales;
            let dist: Vec<f64> = centers
                .rows()
                .into_iter()
                .map(|c| (&c - &z).mapv(|v| v * v).sum() / width_sq)
                .collect();
            let nearest = dist.iter().copied().fold(f64::INFINITY, f64::min);
            let profile: Vec<f64> = dist.iter().map(|d| (nearest - d).exp() + 1e-4).collect();
            let total: f64 = profile.iter().sum();
            for (t, a) in profile.into_iter().enumerate() {
                weights[t][r] = zipf[r] * k as f64 * a / total;
            }
        }
        let function_mass: f64 = zipf[..n_function].iter().sum();
        let mut topic_words = Vec::with_capacity(k);
        for mut w in weights {
            let content: f64 = w.iter().sum();
            if n_function > 0 && content > 0.0 {
                let scale = config.function_share / (1.0 - config.function_share) * content
                    / function_mass;
                for r in 0..n_function {
                    w[r] = zipf[r] * scale;
                }
            } else if content == 0.0 {
                w[..n_function].copy_from_slice(&zipf[..n_function]);
            }
            topic_words.push(
                WeightedAliasIndex::new(w)
                    .map_err(|e| Error::InvalidConfig(format!("topic weights: {e}")))?,
            );
        }
        Ok(TopicModel {
            words,
            topic_words,
            config: config.clone(),
        })
    }

    /// Token ranks of one document.
    pub fn document<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        let k = self.config.n_topics;
        let gamma = Gamma::new(self.config.doc_alpha, 1.0).expect("positive shape");
        let mix: Vec<f64> = (0..k).map(|_| gamma.sample(rng) + 1e-12).collect();
        let topics = WeightedAliasIndex::new(mix).expect("positive weights");
        let len = self.config.mean_doc_tokens / 2 + rng.random_range(0..=self.config.mean_doc_tokens);
        let mut topic = topics.sample(rng);
        let mut out = Vec::with_capacity(len);
        for _ in 0..len {
            if rng.random::<f64>() >= self.config.topic_persistence {
                topic = topics.sample(rng);
            }
            out.push(self.topic_words[topic].sample(rng));
        }
        out
    }
}

/// Writes documents (one per line) until `target_bytes` is reached and
/// returns the number of bytes written.
pub fn generate_corpus<W: Write>(config: &SynthCorpusConfig, mut out: W) -> Result<u64> {
    let model = TopicModel::new(config)?;
    let mut rng = seed::derive_rng(config.seed, "synth-documents");
    let mut written = 0u64;
    let mut line = String::new();
    while written < config.target_bytes {
        line.clear();
        let doc = model.document(&mut rng);
        let mut sentence_start = true;
        for (i, &w) in doc.iter().enumerate() {
            if i > 0 {
                line.push(' ');
            }
            let word = &model.words[w];
            if sentence_start {
                let mut chars = word.chars();
                if let Some(c) = chars.next() {
                    line.extend(c.to_uppercase());
                    line.push_str(chars.as_str());
                }
            } else {
                line.push_str(word);
            }
            sentence_start = false;
            let u: f64 = rng.random();
            if u < 0.06 {
                line.push('.');
                sentence_start = true;
            } else if u < 0.09 {
                line.push(',');
            } else if u < 0.092 {
                line.push_str(&format!(" {}", rng.random_range(1..3000)));
            }
        }
        line.push_str(".\n");
        out.write_all(line.as_bytes())?;
        written += line.len() as u64;
    }
    out.flush()?;
    Ok(written)
}
