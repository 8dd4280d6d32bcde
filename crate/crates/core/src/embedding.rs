//! Vocabularies, embedding spaces and the word2vec text format.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::linalg::column_mean;

/// Ordered set of tokens with optional corpus frequencies.
///
/// Row `i` of an embedding space belongs to `words()[i]`. When frequencies
/// are known, words are ordered by descending frequency with ties broken
/// lexicographically; when they are not (all zero), the given order is taken
/// to be frequency order.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
    freqs: Vec<u64>,
}

impl Vocabulary {
    /// Builds a vocabulary from words and matching frequencies.
    pub fn new(words: Vec<String>, freqs: Vec<u64>) -> Result<Self> {
        if words.len() != freqs.len() {
            return Err(Error::DimensionMismatch {
                expected: words.len(),
                found: freqs.len(),
            });
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::DuplicateToken {
                    token: w.clone(),
                    line: i + 1,
                });
            }
        }
        if freqs.iter().any(|&f| f > 0) {
            for i in 1..words.len() {
                let ordered = freqs[i - 1] > freqs[i]
                    || (freqs[i - 1] == freqs[i] && words[i - 1] < words[i]);
                if !ordered {
                    return Err(Error::InvalidConfig(format!(
                        "vocabulary not in frequency order at '{}'",
                        words[i]
                    )));
                }
            }
        }
        Ok(Vocabulary {
            words,
            index,
            freqs,
        })
    }

    /// Words in the given order, frequencies unknown.
    pub fn from_words(words: Vec<String>) -> Result<Self> {
        let n = words.len();
        Self::new(words, vec![0; n])
    }

    /// Sorts `(word, count)` pairs into frequency order.
    pub fn from_counts(counts: impl IntoIterator<Item = (String, u64)>) -> Self {
        let mut pairs: Vec<(String, u64)> = counts.into_iter().collect();
        pairs.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let (words, freqs): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        Self::new(words, freqs).expect("counts produce a valid vocabulary")
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn word(&self, i: usize) -> &str {
        &self.words[i]
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn frequency(&self, i: usize) -> u64 {
        self.freqs[i]
    }

    pub fn frequencies(&self) -> &[u64] {
        &self.freqs
    }

    pub fn has_frequencies(&self) -> bool {
        self.freqs.iter().any(|&f| f > 0)
    }

    fn truncated(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Vocabulary {
            words: self.words[..n].to_vec(),
            index: self.words[..n]
                .iter()
                .enumerate()
                .map(|(i, w)| (w.clone(), i))
                .collect(),
            freqs: self.freqs[..n].to_vec(),
        }
    }
}

/// A vocabulary with one dense `f64` row per word.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingSpace {
    vocab: Vocabulary,
    vectors: Array2<f64>,
}

impl EmbeddingSpace {
    pub fn new(vocab: Vocabulary, vectors: Array2<f64>) -> Result<Self> {
        if vectors.nrows() != vocab.len() {
            return Err(Error::DimensionMismatch {
                expected: vocab.len(),
                found: vectors.nrows(),
            });
        }
        for (i, row) in vectors.axis_iter(Axis(0)).enumerate() {
            if row.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite {
                    token: vocab.word(i).to_string(),
                    line: i + 2,
                });
            }
        }
        Ok(EmbeddingSpace { vocab, vectors })
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn vectors(&self) -> ArrayView2<'_, f64> {
        self.vectors.view()
    }

    pub fn into_vectors(self) -> Array2<f64> {
        self.vectors
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn vector(&self, i: usize) -> ArrayView1<'_, f64> {
        self.vectors.row(i)
    }

    pub fn vector_of(&self, word: &str) -> Option<ArrayView1<'_, f64>> {
        self.vocab.index_of(word).map(|i| self.vectors.row(i))
    }

    /// Keeps the first `n` rows.
    pub fn truncate(&self, n: usize) -> Self {
        let n = n.min(self.len());
        EmbeddingSpace {
            vocab: self.vocab.truncated(n),
            vectors: self.vectors.slice(ndarray::s![..n, ..]).to_owned(),
        }
    }

    /// Same vocabulary, new vectors of any width.
    pub fn with_vectors(&self, vectors: Array2<f64>) -> Result<Self> {
        Self::new(self.vocab.clone(), vectors)
    }

    /// Column-wise mean vector. Zero vector for an empty space.
    pub fn centroid(&self) -> ndarray::Array1<f64> {
        if self.is_empty() {
            return ndarray::Array1::zeros(self.dim());
        }
        column_mean(self.vectors.view())
    }

    /// Divides every row by its L2 norm.
    pub fn unit_normalize(&self) -> Result<Self> {
        let mut vectors = self.vectors.clone();
        for (i, mut row) in vectors.axis_iter_mut(Axis(0)).enumerate() {
            let norm = row.dot(&row).sqrt();
            if norm == 0.0 {
                return Err(Error::ZeroNorm(self.vocab.word(i).to_string()));
            }
            row.mapv_inplace(|x| x / norm);
        }
        Ok(EmbeddingSpace {
            vocab: self.vocab.clone(),
            vectors,
        })
    }

    /// Subtracts the column-wise mean from every row.
    pub fn center(&self) -> Self {
        let mut vectors = self.vectors.clone();
        if !self.is_empty() {
            let mean = column_mean(vectors.view());
            vectors -= &mean;
        }
        EmbeddingSpace {
            vocab: self.vocab.clone(),
            vectors,
        }
    }

    /// Applies a sequence of normalization steps.
    pub fn normalized(&self, steps: &[Normalization]) -> Result<Self> {
        let mut out = self.clone();
        for step in steps {
            out = match step {
                Normalization::Unit => out.unit_normalize()?,
                Normalization::Center => out.center(),
            };
        }
        Ok(out)
    }

    /// Indices of rows whose L2 norm is at most `eps`.
    pub fn zero_rows(&self, eps: f64) -> Vec<usize> {
        self.vectors
            .axis_iter(Axis(0))
            .enumerate()
            .filter(|(_, r)| r.dot(r).sqrt() <= eps)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Normalization step applied to a space before alignment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    Unit,
    Center,
}

impl Normalization {
    /// Parses a comma-separated list such as `"center,unit"`. `"none"` and
    /// the empty string give no steps.
    pub fn parse_list(s: &str) -> Result<Vec<Normalization>> {
        let s = s.trim();
        if s.is_empty() || s == "none" {
            return Ok(Vec::new());
        }
        s.split(',')
            .map(|part| match part.trim() {
                "unit" | "renorm" => Ok(Normalization::Unit),
                "center" => Ok(Normalization::Center),
                other => Err(Error::InvalidConfig(format!(
                    "unknown normalization step '{other}'"
                ))),
            })
            .collect()
    }

    pub fn list_to_string(steps: &[Normalization]) -> String {
        if steps.is_empty() {
            return "none".to_string();
        }
        steps
            .iter()
            .map(|s| match s {
                Normalization::Unit => "unit",
                Normalization::Center => "center",
            })
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// Tokens present in both spaces, in the row order of `a`.
pub fn shared_vocabulary(a: &EmbeddingSpace, b: &EmbeddingSpace) -> Vec<String> {
    a.vocab()
        .words()
        .iter()
        .filter(|w| b.vocab().contains(w))
        .cloned()
        .collect()
}

/// Reads word2vec text format: a `rows dim` header followed by one
/// `token v1 .. vdim` line per word.
pub fn read_word2vec<R: BufRead>(reader: R, limit: Option<usize>) -> Result<EmbeddingSpace> {
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(line) => line?,
        None => return Err(Error::format(1, "missing header")),
    };
    let mut fields = header.split_whitespace();
    let parse_header = |f: Option<&str>, what: &str| -> Result<usize> {
        f.ok_or_else(|| Error::format(1, format!("header is missing {what}")))?
            .parse::<usize>()
            .map_err(|e| Error::format(1, format!("cannot parse {what}: {e}")))
    };
    let rows = parse_header(fields.next(), "vocabulary size")?;
    let dim = parse_header(fields.next(), "dimensionality")?;
    if fields.next().is_some() {
        return Err(Error::format(1, "header has more than two fields"));
    }
    if dim == 0 {
        return Err(Error::format(1, "dimensionality must be positive"));
    }
    let wanted = limit.map_or(rows, |l| l.min(rows));
    if wanted == 0 {
        return Err(Error::EmptySpace);
    }

    let mut words = Vec::with_capacity(wanted);
    let mut seen = HashSet::with_capacity(wanted);
    let mut data = Vec::with_capacity(wanted * dim);
    for (offset, line) in lines.enumerate() {
        let lineno = offset + 2;
        let line = line?;
        if words.len() == wanted {
            if limit.is_none() && !line.trim().is_empty() {
                return Err(Error::format(
                    lineno,
                    format!("more rows than the {rows} declared in the header"),
                ));
            }
            if limit.is_some() {
                break;
            }
            continue;
        }
        let mut parts = line.split_whitespace();
        let token = match parts.next() {
            Some(t) => t.to_string(),
            None => return Err(Error::format(lineno, "empty row")),
        };
        let start = data.len();
        for part in parts {
            let v: f64 = part.parse().map_err(|e| {
                Error::format(lineno, format!("token '{token}': cannot parse '{part}': {e}"))
            })?;
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    token,
                    line: lineno,
                });
            }
            data.push(v);
        }
        let found = data.len() - start;
        if found != dim {
            return Err(Error::format(
                lineno,
                format!("token '{token}' has {found} values, expected {dim}"),
            ));
        }
        if !seen.insert(token.clone()) {
            return Err(Error::DuplicateToken {
                token,
                line: lineno,
            });
        }
        words.push(token);
    }
    if words.len() < wanted {
        return Err(Error::format(
            words.len() + 2,
            format!("expected {wanted} rows, found {}", words.len()),
        ));
    }
    let vectors = Array2::from_shape_vec((wanted, dim), data)
        .map_err(|e| Error::format(1, e.to_string()))?;
    EmbeddingSpace::new(Vocabulary::from_words(words)?, vectors)
}

pub fn load_embeddings(path: impl AsRef<Path>, limit: Option<usize>) -> Result<EmbeddingSpace> {
    let file = File::open(path)?;
    read_word2vec(BufReader::new(file), limit)
}

/// Writes word2vec text format with 17 significant digits per value, which
/// round-trips every `f64` exactly.
pub fn write_word2vec<W: Write>(space: &EmbeddingSpace, mut writer: W) -> Result<()> {
    if space.is_empty() {
        return Err(Error::EmptySpace);
    }
    writeln!(writer, "{} {}", space.len(), space.dim())?;
    for (word, row) in space.vocab().words().iter().zip(space.vectors().rows()) {
        write!(writer, "{word}")?;
        for v in row {
            write!(writer, " {v:.16e}")?;
        }
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn save_embeddings(space: &EmbeddingSpace, path: impl AsRef<Path>) -> Result<()> {
    if space.is_empty() {
        return Err(Error::EmptySpace);
    }
    let file = File::create(path)?;
    write_word2vec(space, BufWriter::new(file))
}

/// Ordered `(source, target)` word pairs for supervision or refinement.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SeedDictionary {
    pairs: Vec<(String, String)>,
}

impl SeedDictionary {
    /// Rejects duplicate source tokens.
    pub fn new(pairs: Vec<(String, String)>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(pairs.len());
        for (i, (src, _)) in pairs.iter().enumerate() {
            if !seen.insert(src.as_str()) {
                return Err(Error::DuplicateToken {
                    token: src.clone(),
                    line: i + 1,
                });
            }
        }
        Ok(SeedDictionary { pairs })
    }

    /// Every word paired with itself.
    pub fn identity<S: AsRef<str>>(words: &[S]) -> Result<Self> {
        Self::new(
            words
                .iter()
                .map(|w| (w.as_ref().to_string(), w.as_ref().to_string()))
                .collect(),
        )
    }

    pub fn pairs(&self) -> &[(String, String)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Two whitespace-separated tokens per line; blank lines are skipped.
    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let mut parts = line.split_whitespace();
            match (parts.next(), parts.next(), parts.next()) {
                (None, _, _) => continue,
                (Some(s), Some(t), None) => pairs.push((s.to_string(), t.to_string())),
                _ => return Err(Error::format(i + 1, "expected two tokens")),
            }
        }
        Self::new(pairs)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read(BufReader::new(File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use crate::linalg::gaussian_matrix;

    const SMALL: &str = "2 3\na 1 0 0\nb 0 1 0";

    fn space(words: &[&str], rows: Array2<f64>) -> EmbeddingSpace {
        let vocab = Vocabulary::from_words(words.iter().map(|s| s.to_string()).collect()).unwrap();
        EmbeddingSpace::new(vocab, rows).unwrap()
    }

    fn random_space(n: usize, d: usize, seed: u64) -> EmbeddingSpace {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let words: Vec<String> = (0..n).map(|i| format!("w{i}")).collect();
        EmbeddingSpace::new(
            Vocabulary::from_words(words).unwrap(),
            gaussian_matrix(n, d, &mut rng),
        )
        .unwrap()
    }

    #[test]
    fn reads_small_file() {
        let s = read_word2vec(SMALL.as_bytes(), None).unwrap();
        assert_eq!(s.vocab().words(), ["a", "b"]);
        assert_eq!(s.dim(), 3);
        assert_eq!(s.vectors(), array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
        assert!(!s.vocab().has_frequencies());
    }

    #[test]
    fn limit_truncates() {
        let s = read_word2vec(SMALL.as_bytes(), Some(1)).unwrap();
        assert_eq!(s.vocab().words(), ["a"]);
        assert_eq!(s.len(), 1);
    }

    #[test]
    fn short_row_is_reported_with_line() {
        let err = read_word2vec("2 3\na 1 0 0\nb 0 1".as_bytes(), None).unwrap_err();
        match err {
            Error::Format { line, message } => {
                assert_eq!(line, 3);
                assert!(message.contains("'b'"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(
            read_word2vec("x 3\n".as_bytes(), None),
            Err(Error::Format { line: 1, .. })
        ));
        assert!(matches!(
            read_word2vec("2 2\na 1 0\na 0 1\n".as_bytes(), None),
            Err(Error::DuplicateToken { line: 3, .. })
        ));
        assert!(matches!(
            read_word2vec("1 2\na NaN 0\n".as_bytes(), None),
            Err(Error::NonFinite { line: 2, .. })
        ));
        assert!(matches!(
            read_word2vec("1 2\na inf 0\n".as_bytes(), None),
            Err(Error::NonFinite { .. })
        ));
        assert!(read_word2vec("3 2\na 1 0\nb 0 1\n".as_bytes(), None).is_err());
        assert!(read_word2vec("1 2\na 1 0\nb 0 1\n".as_bytes(), None).is_err());
    }

    #[test]
    fn round_trip_small_and_random() {
        let dir = tempfile::tempdir().unwrap();
        let s = read_word2vec(SMALL.as_bytes(), None).unwrap();
        let path = dir.path().join("small.txt");
        save_embeddings(&s, &path).unwrap();
        assert_eq!(load_embeddings(&path, None).unwrap(), s);

        let big = random_space(1000, 50, 7);
        let path = dir.path().join("big.txt");
        save_embeddings(&big, &path).unwrap();
        let back = load_embeddings(&path, None).unwrap();
        assert_eq!(back.vocab().words(), big.vocab().words());
        let diff = (&back.vectors() - &big.vectors())
            .iter()
            .fold(0.0f64, |m, x| m.max(x.abs()));
        assert!(diff <= 1e-12);
        assert_eq!(back, big);
    }

    #[test]
    fn empty_space_is_not_saved() {
        let empty = EmbeddingSpace::new(
            Vocabulary::from_words(vec![]).unwrap(),
            Array2::zeros((0, 3)),
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            save_embeddings(&empty, dir.path().join("e.txt")),
            Err(Error::EmptySpace)
        ));
    }

    #[test]
    fn unit_normalize_examples() {
        let s = space(&["x"], array![[3.0, 4.0]]);
        assert_abs_diff_eq!(s.unit_normalize().unwrap().vectors(), array![[0.6, 0.8]].view());

        let r = random_space(100, 10, 3).unit_normalize().unwrap();
        for row in r.vectors().rows() {
            assert_abs_diff_eq!(row.dot(&row).sqrt(), 1.0, epsilon = 1e-10);
        }
        let again = r.unit_normalize().unwrap();
        assert_abs_diff_eq!(again.vectors(), r.vectors(), epsilon = 1e-12);

        let z = space(&["p", "zero"], array![[1.0, 0.0], [0.0, 0.0]]);
        assert!(matches!(z.unit_normalize(), Err(Error::ZeroNorm(t)) if t == "zero"));
    }

    #[test]
    fn center_examples() {
        let s = space(&["a", "b"], array![[1.0, 0.0], [0.0, 1.0]]);
        assert_abs_diff_eq!(s.center().vectors(), array![[0.5, -0.5], [-0.5, 0.5]].view());

        let c = random_space(500, 20, 5).center();
        let mean = c.centroid();
        assert!(mean.dot(&mean).sqrt() <= 1e-10);
        assert_abs_diff_eq!(c.center().vectors(), c.vectors(), epsilon = 1e-10);
    }

    #[test]
    fn shared_vocabulary_examples() {
        let a = Vocabulary::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec![5, 3, 2],
        )
        .unwrap();
        let a = EmbeddingSpace::new(a, Array2::ones((3, 2))).unwrap();
        let b = space(&["d", "c", "b"], Array2::ones((3, 2)));
        assert_eq!(shared_vocabulary(&a, &b), ["b", "c"]);
        let d = space(&["x", "y"], Array2::ones((2, 2)));
        assert!(shared_vocabulary(&a, &d).is_empty());
        assert_eq!(shared_vocabulary(&a, &a).len(), 3);
    }

    #[test]
    fn vocabulary_order_is_enforced() {
        assert!(Vocabulary::new(vec!["a".into(), "b".into()], vec![1, 2]).is_err());
        assert!(Vocabulary::new(vec!["b".into(), "a".into()], vec![2, 2]).is_err());
        let v = Vocabulary::from_counts(vec![("b".into(), 2), ("a".into(), 2), ("c".into(), 9)]);
        assert_eq!(v.words(), ["c", "a", "b"]);
        assert_eq!(v.index_of("b"), Some(2));
    }

    #[test]
    fn seed_dictionary_rules() {
        assert!(SeedDictionary::new(vec![("a".into(), "b".into()), ("a".into(), "c".into())]).is_err());
        let d = SeedDictionary::read("a b\n\nc d\n".as_bytes()).unwrap();
        assert_eq!(d.len(), 2);
        assert!(SeedDictionary::read("a b c\n".as_bytes()).is_err());
    }

    #[test]
    fn normalization_lists_parse() {
        assert_eq!(Normalization::parse_list("none").unwrap(), vec![]);
        assert_eq!(
            Normalization::parse_list("center, unit").unwrap(),
            vec![Normalization::Center, Normalization::Unit]
        );
        assert!(Normalization::parse_list("whiten").is_err());
    }
}
