use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::ops::Range;
use std::path::Path;

use crate::embedding::Vocabulary;
use crate::error::{Error, Result};

const DIGIT_WORDS: [&str; 10] = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine",
];

/// Lowercases, spells out digits one by one and splits on everything that
/// is not `a-z`.
pub fn preprocess(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    preprocess_with(text, |t| out.push(t.to_string()));
    out
}

/// Like [`preprocess`], replacing invalid UTF-8 with separators.
pub fn preprocess_bytes(bytes: &[u8]) -> Vec<String> {
    preprocess(&String::from_utf8_lossy(bytes))
}

/// Streaming form of [`preprocess`]: calls `emit` once per token.
pub fn preprocess_with(text: &str, mut emit: impl FnMut(&str)) {
    let mut current = String::new();
    for c in text.chars() {
        for lc in c.to_lowercase() {
            match lc {
                'a'..='z' => current.push(lc),
                '0'..='9' => {
                    if !current.is_empty() {
                        emit(&current);
                        current.clear();
                    }
                    emit(DIGIT_WORDS[(lc as u8 - b'0') as usize]);
                }
                _ => {
                    if !current.is_empty() {
                        emit(&current);
                        current.clear();
                    }
                }
            }
        }
    }
    if !current.is_empty() {
        emit(&current);
    }
}

/// An interned token stream.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Corpus {
    types: Vec<String>,
    lookup: HashMap<String, u32>,
    ids: Vec<u32>,
    /// Start offset of every document (input line) in `ids`.
    docs: Vec<usize>,
}

impl Corpus {
    pub fn from_tokens<S: AsRef<str>>(tokens: impl IntoIterator<Item = S>) -> Self {
        let mut c = Corpus {
            docs: vec![0],
            ..Default::default()
        };
        for t in tokens {
            c.push(t.as_ref());
        }
        c
    }

    /// Preprocesses `text` into a corpus, one document per line.
    pub fn from_text(text: &str) -> Self {
        let mut c = Corpus::default();
        for line in text.lines() {
            c.docs.push(c.ids.len());
            preprocess_with(line, |t| c.push(t));
        }
        c
    }

    /// Reads and preprocesses a text file line by line.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let mut reader = BufReader::new(File::open(path)?);
        let mut c = Corpus::default();
        let mut buf = Vec::new();
        loop {
            buf.clear();
            if reader.read_until(b'\n', &mut buf)? == 0 {
                break;
            }
            c.docs.push(c.ids.len());
            preprocess_with(&String::from_utf8_lossy(&buf), |t| c.push(t));
        }
        Ok(c)
    }

    fn push(&mut self, token: &str) {
        let id = match self.lookup.get(token) {
            Some(&id) => id,
            None => {
                let id = self.types.len() as u32;
                self.types.push(token.to_string());
                self.lookup.insert(token.to_string(), id);
                id
            }
        };
        self.ids.push(id);
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> + '_ {
        self.ids.iter().map(|&i| self.types[i as usize].as_str())
    }

    /// Tokens in `range`; documents are cut at the range ends.
    pub fn slice(&self, range: Range<usize>) -> Corpus {
        let mut docs = vec![0];
        docs.extend(
            self.docs
                .iter()
                .filter(|&&d| d > range.start && d < range.end)
                .map(|&d| d - range.start),
        );
        Corpus {
            types: self.types.clone(),
            lookup: self.lookup.clone(),
            ids: self.ids[range].to_vec(),
            docs,
        }
    }

    pub fn n_documents(&self) -> usize {
        self.docs.len()
    }

    pub fn document_range(&self, i: usize) -> Range<usize> {
        let end = self.docs.get(i + 1).copied().unwrap_or(self.ids.len());
        self.docs[i]..end
    }

    /// Concatenation of the listed documents, in the given order.
    pub fn select_documents(&self, indices: &[usize]) -> Corpus {
        let mut ids = Vec::new();
        let mut docs = Vec::with_capacity(indices.len());
        for &i in indices {
            docs.push(ids.len());
            ids.extend_from_slice(&self.ids[self.document_range(i)]);
        }
        Corpus {
            types: self.types.clone(),
            lookup: self.lookup.clone(),
            ids,
            docs,
        }
    }

    /// Two contiguous, non-overlapping halves.
    pub fn halves(&self) -> (Corpus, Corpus) {
        let mid = self.len() / 2;
        (self.slice(0..mid), self.slice(mid..self.len()))
    }

    /// Vocabulary of words seen at least `min_count` times.
    pub fn stats(&self, min_count: u64) -> CorpusStats {
        let mut counts = vec![0u64; self.types.len()];
        for &id in &self.ids {
            counts[id as usize] += 1;
        }
        let vocab = Vocabulary::from_counts(
            self.types
                .iter()
                .zip(counts)
                .filter(|(_, c)| *c >= min_count.max(1))
                .map(|(w, c)| (w.clone(), c)),
        );
        CorpusStats {
            token_count: self.len() as u64,
            vocab,
            min_count,
        }
    }

    /// Token stream as rows of `vocab`, with out-of-vocabulary tokens
    /// removed (so windows span over them).
    pub fn encode(&self, vocab: &Vocabulary) -> Vec<u32> {
        let map: Vec<Option<u32>> = self
            .types
            .iter()
            .map(|w| vocab.index_of(w).map(|i| i as u32))
            .collect();
        self.ids.iter().filter_map(|&i| map[i as usize]).collect()
    }

    /// Writes the tokens space-separated, `per_line` tokens per line.
    pub fn write_text(&self, path: impl AsRef<Path>, per_line: usize) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        for chunk in self.ids.chunks(per_line.max(1)) {
            let line = chunk
                .iter()
                .map(|&i| self.types[i as usize].as_str())
                .collect::<Vec<_>>()
                .join(" ");
            writeln!(w, "{line}")?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes one space-separated document per line, so that
    /// [`Corpus::from_file`] reads the same corpus back.
    pub fn write_documents<W: Write>(&self, w: W) -> Result<()> {
        let mut w = BufWriter::new(w);
        for i in 0..self.n_documents() {
            let mut first = true;
            for &id in &self.ids[self.document_range(i)] {
                if !first {
                    w.write_all(b" ")?;
                }
                w.write_all(self.types[id as usize].as_bytes())?;
                first = false;
            }
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Token count and thresholded vocabulary of a corpus.
///
/// `token_count` counts every token, including those below `min_count`.
#[derive(Clone, Debug, PartialEq)]
pub struct CorpusStats {
    pub token_count: u64,
    pub vocab: Vocabulary,
    pub min_count: u64,
}

impl CorpusStats {
    pub fn require_nonempty(&self) -> Result<()> {
        if self.vocab.is_empty() {
            Err(Error::EmptyCorpus)
        } else {
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(preprocess("Hello, World!"), ["hello", "world"]);
        assert_eq!(preprocess("GAN-2018"), ["gan", "two", "zero", "one", "eight"]);
        assert!(preprocess("").is_empty());
        assert_eq!(preprocess("abc123def"), ["abc", "one", "two", "three", "def"]);
        assert_eq!(preprocess("Ünïcode café"), ["n", "code", "caf"]);
    }

    #[test]
    fn lines_are_documents() {
        let c = Corpus::from_text("a b\nc\n\nd e f\n");
        assert_eq!(c.n_documents(), 4);
        assert_eq!(c.document_range(1), 2..3);
        assert_eq!(c.document_range(2), 3..3);
        let picked = c.select_documents(&[3, 0]);
        assert_eq!(picked.tokens().collect::<Vec<_>>(), ["d", "e", "f", "a", "b"]);
        assert_eq!(picked.n_documents(), 2);
        let tail = c.slice(1..5);
        assert_eq!(tail.tokens().collect::<Vec<_>>(), ["b", "c", "d", "e"]);
        assert_eq!(tail.document_range(0), 0..1);
    }

    #[test]
    fn invalid_bytes_become_separators() {
        assert_eq!(preprocess_bytes(b"ab\xffcd"), ["ab", "cd"]);
    }

    #[test]
    fn stats_count_all_tokens() {
        let c = Corpus::from_tokens(["a", "b", "a", "c", "a", "b"]);
        let s = c.stats(2);
        assert_eq!(s.token_count, 6);
        assert_eq!(s.vocab.words(), ["a", "b"]);
        assert_eq!(s.vocab.frequencies(), [3, 2]);
        assert_eq!(c.encode(&s.vocab), [0, 1, 0, 0, 1]);
        let (l, r) = c.halves();
        assert_eq!(l.len() + r.len(), 6);
        assert_eq!(r.tokens().collect::<Vec<_>>(), ["c", "a", "b"]);
    }

    proptest! {
        #[test]
        fn output_alphabet_is_lowercase_ascii(text in any::<String>()) {
            for t in preprocess(&text) {
                prop_assert!(!t.is_empty());
                prop_assert!(t.bytes().all(|b| b.is_ascii_lowercase()));
            }
        }
    }
}
