use std::collections::HashMap;

use crate::embedding::Vocabulary;
use crate::error::{Error, Result};
use crate::linalg::CsrMatrix;

use super::preprocess::Corpus;

/// Word-context co-occurrence counts within a symmetric window.
///
/// Row and column indices are both rows of `vocab`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoocMatrix {
    pub vocab: Vocabulary,
    pub counts: CsrMatrix,
    pub window: usize,
}

impl CoocMatrix {
    /// Counts one event for every ordered pair `(w_i, w_{i+k})` and
    /// `(w_i, w_{i-k})` with `1 <= k <= window`.
    pub fn from_corpus(corpus: &Corpus, window: usize, min_count: u64) -> Result<Self> {
        if window == 0 {
            return Err(Error::InvalidConfig("window must be at least 1".into()));
        }
        let stats = corpus.stats(min_count);
        stats.require_nonempty()?;
        let ids = corpus.encode(&stats.vocab);
        Ok(Self::from_ids(stats.vocab, &ids, window))
    }

    pub(crate) fn from_ids(vocab: Vocabulary, ids: &[u32], window: usize) -> Self {
        let n = vocab.len();
        let mut map: HashMap<u64, u64> = HashMap::new();
        for i in 0..ids.len() {
            let w = ids[i] as u64;
            let lo = i.saturating_sub(window);
            let hi = (i + window).min(ids.len() - 1);
            for (j, &c) in ids.iter().enumerate().take(hi + 1).skip(lo) {
                if j != i {
                    *map.entry(w * n as u64 + c as u64).or_insert(0) += 1;
                }
            }
        }
        let mut keys: Vec<(u64, u64)> = map.into_iter().collect();
        keys.sort_unstable_by_key(|&(k, _)| k);
        let counts = CsrMatrix::from_sorted_triplets(
            n,
            n,
            keys.into_iter()
                .map(|(k, v)| ((k / n as u64) as usize, (k % n as u64) as usize, v as f64)),
        );
        CoocMatrix {
            vocab,
            counts,
            window,
        }
    }

    /// Total number of counted events.
    pub fn total(&self) -> f64 {
        self.counts.iter().map(|(_, _, v)| v).sum()
    }

    pub fn get(&self, word: &str, context: &str) -> f64 {
        match (self.vocab.index_of(word), self.vocab.index_of(context)) {
            (Some(r), Some(c)) => self
                .counts
                .row(r)
                .find(|&(cc, _)| cc == c)
                .map_or(0.0, |(_, v)| v),
            _ => 0.0,
        }
    }
}

/// Counts co-occurrences of a token sequence after dropping words seen
/// fewer than `min_count` times.
pub fn count_cooccurrences<S: AsRef<str>>(
    tokens: &[S],
    window: usize,
    min_count: u64,
) -> Result<CoocMatrix> {
    CoocMatrix::from_corpus(&Corpus::from_tokens(tokens), window, min_count)
}
