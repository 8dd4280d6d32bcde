//! Word-translation retrieval and precision at k.
//!
//! Source words are mapped with an [`AlignmentMap`] and every target word is
//! scored against the mapped vector. Rankings sort by score descending and
//! break ties by lower target row index. The query word itself is never
//! excluded from the candidates.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::embedding::EmbeddingSpace;
use crate::error::{Error, Result};
use crate::procrustes::AlignmentMap;

const BLOCK: usize = 512;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Scorer {
    Cosine,
    /// Cross-domain similarity local scaling with the given neighbourhood.
    Csls { knn: usize },
}

impl Scorer {
    pub const CSLS_DEFAULT: Scorer = Scorer::Csls { knn: 10 };
}

impl fmt::Display for Scorer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scorer::Cosine => write!(f, "cosine"),
            Scorer::Csls { knn: 10 } => write!(f, "csls"),
            Scorer::Csls { knn } => write!(f, "csls:{knn}"),
        }
    }
}

impl From<Scorer> for String {
    fn from(s: Scorer) -> String {
        s.to_string()
    }
}

impl TryFrom<String> for Scorer {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl FromStr for Scorer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "cosine" | "nn" => Ok(Scorer::Cosine),
            "csls" => Ok(Scorer::CSLS_DEFAULT),
            other => match other.strip_prefix("csls:") {
                Some(k) => {
                    let knn = k
                        .parse::<usize>()
                        .ok()
                        .filter(|&k| k > 0)
                        .ok_or_else(|| Error::InvalidConfig(format!("bad CSLS size '{k}'")))?;
                    Ok(Scorer::Csls { knn })
                }
                None => Err(Error::InvalidConfig(format!("unknown scorer '{other}'"))),
            },
        }
    }
}

fn normalize_rows(mut m: Array2<f64>) -> Array2<f64> {
    for mut row in m.rows_mut() {
        let n = row.dot(&row).sqrt();
        if n > 0.0 {
            row.mapv_inplace(|x| x / n);
        }
    }
    m
}

/// Indices of the `k` best entries under (score desc, index asc).
pub fn top_k_indices(scores: ArrayView1<'_, f64>, k: usize) -> Vec<usize> {
    let k = k.min(scores.len());
    if k == 0 {
        return Vec::new();
    }
    let cmp = |a: &usize, b: &usize| scores[*b].total_cmp(&scores[*a]).then(a.cmp(b));
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    if k < idx.len() {
        idx.select_nth_unstable_by(k - 1, cmp);
        idx.truncate(k);
    }
    idx.sort_unstable_by(cmp);
    idx
}

/// Mean of the `k` largest values of each row.
fn mean_top_k_rows(scores: ArrayView2<'_, f64>, k: usize) -> Array1<f64> {
    scores
        .rows()
        .into_iter()
        .map(|row| {
            let idx = top_k_indices(row, k);
            idx.iter().map(|&i| row[i]).sum::<f64>() / idx.len().max(1) as f64
        })
        .collect()
}

/// Precomputed normalized matrices (and CSLS penalties) for fast retrieval.
pub struct RetrievalIndex {
    mapped: Array2<f64>,
    target: Array2<f64>,
    scorer: Scorer,
    /// Mean cosine of each mapped source vector to its nearest targets.
    src_penalty: Option<Array1<f64>>,
    /// Mean cosine of each target vector to its nearest mapped sources.
    tgt_penalty: Option<Array1<f64>>,
}

impl RetrievalIndex {
    pub fn new(
        src: &EmbeddingSpace,
        tgt: &EmbeddingSpace,
        omega: &AlignmentMap,
        scorer: Scorer,
    ) -> Result<Self> {
        Self::from_matrices(src.vectors(), tgt.vectors(), omega, scorer)
    }

    pub fn from_matrices(
        src: ArrayView2<'_, f64>,
        tgt: ArrayView2<'_, f64>,
        omega: &AlignmentMap,
        scorer: Scorer,
    ) -> Result<Self> {
        if src.ncols() != omega.dim() || tgt.ncols() != omega.dim() {
            return Err(Error::DimensionMismatch {
                expected: omega.dim(),
                found: if src.ncols() != omega.dim() { src.ncols() } else { tgt.ncols() },
            });
        }
        if src.nrows() == 0 || tgt.nrows() == 0 {
            return Err(Error::EmptySpace);
        }
        let mapped = normalize_rows(omega.apply_rows(src));
        let target = normalize_rows(tgt.to_owned());
        let mut index = RetrievalIndex {
            mapped,
            target,
            scorer,
            src_penalty: None,
            tgt_penalty: None,
        };
        if let Scorer::Csls { knn } = scorer {
            index.src_penalty = Some(neighbourhood_means(&index.mapped, &index.target, knn));
            index.tgt_penalty = Some(neighbourhood_means(&index.target, &index.mapped, knn));
        }
        Ok(index)
    }

    pub fn n_sources(&self) -> usize {
        self.mapped.nrows()
    }

    pub fn n_targets(&self) -> usize {
        self.target.nrows()
    }

    /// Scores of source rows `rows` against every target, one row per query.
    pub fn score_rows(&self, rows: &[usize]) -> Array2<f64> {
        let queries = self.mapped.select(Axis(0), rows);
        let mut scores = queries.dot(&self.target.t());
        if let (Some(rs), Some(rt)) = (&self.src_penalty, &self.tgt_penalty) {
            for (q, mut row) in rows.iter().zip(scores.rows_mut()) {
                let r = rs[*q];
                row.zip_mut_with(rt, |s, t| *s = 2.0 * *s - r - t);
            }
        }
        scores
    }

    pub fn top_k(&self, src_row: usize, k: usize) -> Vec<usize> {
        self.top_k_batch(&[src_row], k).pop().unwrap_or_default()
    }

    pub fn top_k_batch(&self, rows: &[usize], k: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::with_capacity(rows.len());
        for chunk in rows.chunks(BLOCK) {
            let scores = self.score_rows(chunk);
            for row in scores.rows() {
                out.push(top_k_indices(row, k));
            }
        }
        out
    }

    /// Best target and its score for each listed source row.
    pub fn best_matches(&self, rows: &[usize]) -> Vec<(usize, f64)> {
        let mut out = Vec::with_capacity(rows.len());
        for chunk in rows.chunks(BLOCK) {
            let scores = self.score_rows(chunk);
            for row in scores.rows() {
                let best = top_k_indices(row, 1)[0];
                out.push((best, row[best]));
            }
        }
        out
    }

    /// Best mapped source row for each listed target row (reverse search).
    pub fn best_sources(&self, tgt_rows: &[usize], src_limit: usize) -> Vec<usize> {
        let src_limit = src_limit.min(self.n_sources());
        let sources = self.mapped.slice(s![..src_limit, ..]);
        let mut out = Vec::with_capacity(tgt_rows.len());
        for chunk in tgt_rows.chunks(BLOCK) {
            let queries = self.target.select(Axis(0), chunk);
            let mut scores = queries.dot(&sources.t());
            if let (Some(rs), Some(rt)) = (&self.src_penalty, &self.tgt_penalty) {
                let rs = rs.slice(s![..src_limit]);
                for (t, mut row) in chunk.iter().zip(scores.rows_mut()) {
                    let r = rt[*t];
                    row.zip_mut_with(&rs, |s, q| *s = 2.0 * *s - r - q);
                }
            }
            for row in scores.rows() {
                out.push(top_k_indices(row, 1)[0]);
            }
        }
        out
    }

    pub fn scorer(&self) -> Scorer {
        self.scorer
    }
}

/// For each row of `queries`, the mean cosine to its `knn` nearest rows of
/// `pool` (both already unit-normalized).
fn neighbourhood_means(queries: &Array2<f64>, pool: &Array2<f64>, knn: usize) -> Array1<f64> {
    let mut out = Array1::zeros(queries.nrows());
    let n = queries.nrows();
    let mut start = 0;
    while start < n {
        let end = (start + BLOCK).min(n);
        let scores = queries.slice(s![start..end, ..]).dot(&pool.t());
        out.slice_mut(s![start..end])
            .assign(&mean_top_k_rows(scores.view(), knn));
        start = end;
    }
    out
}

/// Top-k target words for one query word.
pub fn retrieve(
    src: &EmbeddingSpace,
    tgt: &EmbeddingSpace,
    omega: &AlignmentMap,
    query: &str,
    k: usize,
    scorer: Scorer,
) -> Result<Vec<String>> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    let row = src
        .vocab()
        .index_of(query)
        .ok_or_else(|| Error::UnknownToken(query.to_string()))?;
    let index = RetrievalIndex::new(src, tgt, omega, scorer)?;
    Ok(index
        .top_k(row, k)
        .into_iter()
        .map(|i| tgt.vocab().word(i).to_string())
        .collect())
}

/// Exhaustive reference scorer: every score is computed pair by pair with
/// plain loops, without the matrix products used by [`RetrievalIndex`].
pub struct BruteForceScorer {
    mapped: Vec<Vec<f64>>,
    target: Vec<Vec<f64>>,
    src_penalty: Vec<f64>,
    tgt_penalty: Vec<f64>,
    csls: bool,
}

impl BruteForceScorer {
    pub fn new(
        src: &EmbeddingSpace,
        tgt: &EmbeddingSpace,
        omega: &AlignmentMap,
        scorer: Scorer,
    ) -> Self {
        let w = omega.matrix();
        let d = omega.dim();
        let mapped: Vec<Vec<f64>> = src
            .vectors()
            .rows()
            .into_iter()
            .map(|x| {
                (0..d)
                    .map(|i| (0..d).map(|j| w[[i, j]] * x[j]).sum::<f64>())
                    .collect()
            })
            .collect();
        let target: Vec<Vec<f64>> = tgt.vectors().rows().into_iter().map(|r| r.to_vec()).collect();
        let mut out = BruteForceScorer {
            mapped,
            target,
            src_penalty: Vec::new(),
            tgt_penalty: Vec::new(),
            csls: false,
        };
        if let Scorer::Csls { knn } = scorer {
            out.src_penalty = (0..out.mapped.len())
                .map(|i| {
                    let mut c: Vec<f64> = out.target.iter().map(|t| cosine(&out.mapped[i], t)).collect();
                    mean_of_largest(&mut c, knn)
                })
                .collect();
            out.tgt_penalty = (0..out.target.len())
                .map(|j| {
                    let mut c: Vec<f64> = out.mapped.iter().map(|m| cosine(m, &out.target[j])).collect();
                    mean_of_largest(&mut c, knn)
                })
                .collect();
            out.csls = true;
        }
        out
    }

    pub fn score(&self, src_row: usize, tgt_row: usize) -> f64 {
        let c = cosine(&self.mapped[src_row], &self.target[tgt_row]);
        if self.csls {
            2.0 * c - self.src_penalty[src_row] - self.tgt_penalty[tgt_row]
        } else {
            c
        }
    }

    /// Fully sorts every target and returns the first `k`.
    pub fn top_k(&self, src_row: usize, k: usize) -> Vec<usize> {
        let scores: Vec<f64> = (0..self.target.len()).map(|t| self.score(src_row, t)).collect();
        let mut idx: Vec<usize> = (0..scores.len()).collect();
        idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        idx.truncate(k);
        idx
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let mut ab = 0.0;
    let mut aa = 0.0;
    let mut bb = 0.0;
    for (x, y) in a.iter().zip(b) {
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 || bb == 0.0 {
        0.0
    } else {
        ab / (aa.sqrt() * bb.sqrt())
    }
}

fn mean_of_largest(values: &mut [f64], k: usize) -> f64 {
    values.sort_by(|a, b| b.total_cmp(a));
    let k = k.min(values.len()).max(1);
    values[..k].iter().sum::<f64>() / k as f64
}

/// Gold translations: each source token with its acceptable targets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EvalLexicon {
    entries: Vec<(String, Vec<String>)>,
}

impl EvalLexicon {
    /// Merges repeated sources into one entry with the union of targets,
    /// keeping first-appearance order.
    pub fn new(pairs: impl IntoIterator<Item = (String, String)>) -> Result<Self> {
        let mut entries: Vec<(String, Vec<String>)> = Vec::new();
        let mut pos: HashMap<String, usize> = HashMap::new();
        for (s, t) in pairs {
            match pos.get(&s) {
                Some(&i) => {
                    if !entries[i].1.contains(&t) {
                        entries[i].1.push(t);
                    }
                }
                None => {
                    pos.insert(s.clone(), entries.len());
                    entries.push((s, vec![t]));
                }
            }
        }
        if entries.is_empty() {
            return Err(Error::EmptyDictionary);
        }
        Ok(EvalLexicon { entries })
    }

    /// Each word translates to itself.
    pub fn identity<S: AsRef<str>>(words: &[S]) -> Result<Self> {
        Self::new(
            words
                .iter()
                .map(|w| (w.as_ref().to_string(), w.as_ref().to_string())),
        )
    }

    pub fn entries(&self) -> &[(String, Vec<String>)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// One `source target` pair per line.
    pub fn read<R: BufRead>(r: R) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let mut parts = line.split_whitespace();
            match (parts.next(), parts.next(), parts.next()) {
                (None, _, _) => continue,
                (Some(s), Some(t), None) => pairs.push((s.to_string(), t.to_string())),
                _ => return Err(Error::format(i + 1, "expected 'source target'")),
            }
        }
        Self::new(pairs)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read(BufReader::new(File::open(path)?))
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PrecisionReport {
    pub k: usize,
    pub scorer: Scorer,
    pub precision: f64,
    pub n_evaluated: usize,
    pub n_skipped: usize,
}

pub fn precision_at_k(
    src: &EmbeddingSpace,
    tgt: &EmbeddingSpace,
    omega: &AlignmentMap,
    lexicon: &EvalLexicon,
    k: usize,
    scorer: Scorer,
) -> Result<PrecisionReport> {
    let index = RetrievalIndex::new(src, tgt, omega, scorer)?;
    Ok(precision_at_ks(&index, src, tgt, lexicon, &[k])?.remove(0))
}

/// Precision for several cut-offs from one retrieval pass.
pub fn precision_at_ks(
    index: &RetrievalIndex,
    src: &EmbeddingSpace,
    tgt: &EmbeddingSpace,
    lexicon: &EvalLexicon,
    ks: &[usize],
) -> Result<Vec<PrecisionReport>> {
    if ks.iter().any(|&k| k == 0) {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    let kmax = ks.iter().copied().max().unwrap_or(1);
    let mut rows = Vec::new();
    let mut gold = Vec::new();
    let mut skipped = 0;
    for (s, targets) in lexicon.entries() {
        match src.vocab().index_of(s) {
            Some(r) => {
                rows.push(r);
                gold.push(
                    targets
                        .iter()
                        .filter_map(|t| tgt.vocab().index_of(t))
                        .collect::<Vec<_>>(),
                );
            }
            None => skipped += 1,
        }
    }
    if rows.is_empty() {
        return Err(Error::MissingTokens(
            lexicon.entries().iter().map(|(s, _)| s.clone()).collect(),
        ));
    }
    let ranked = index.top_k_batch(&rows, kmax);
    Ok(ks
        .iter()
        .map(|&k| {
            let hits = ranked
                .iter()
                .zip(&gold)
                .filter(|(r, g)| r.iter().take(k).any(|i| g.contains(i)))
                .count();
            PrecisionReport {
                k,
                scorer: index.scorer(),
                precision: hits as f64 / rows.len() as f64,
                n_evaluated: rows.len(),
                n_skipped: skipped,
            }
        })
        .collect())
}
