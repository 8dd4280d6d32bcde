//! Corpus handling, co-occurrence counts, PPMI-SVD and SGNS.

use std::collections::HashMap;

use embalign_core::corpus::{
    factorize_ppmi, ppmi_matrix, train_sgns_corpus, CoocMatrix, Corpus, SgnsConfig,
};
use embalign_core::linalg::TruncatedSvdOptions;
use ndarray::Array2;
use proptest::prelude::*;

fn sentence_corpus() -> Corpus {
    let mut text = String::new();
    let lines = [
        "the cat sat on the mat",
        "the dog sat on the log",
        "a cat and a dog met on a mat",
        "the log and the mat were red",
        "a dog chased the cat off the log",
    ];
    for i in 0..40 {
        text.push_str(lines[i % lines.len()]);
        text.push('\n');
    }
    Corpus::from_text(&text)
}

/// Dense PPMI from pair counts computed independently of the library.
fn oracle_ppmi(tokens: &[&str], vocab: &[String], window: usize) -> Array2<f64> {
    let index: HashMap<&str, usize> = vocab.iter().enumerate().map(|(i, w)| (w.as_str(), i)).collect();
    let kept: Vec<usize> = tokens.iter().filter_map(|t| index.get(t).copied()).collect();
    let n = vocab.len();
    let mut counts = Array2::<f64>::zeros((n, n));
    for i in 0..kept.len() {
        for j in i.saturating_sub(window)..(i + window + 1).min(kept.len()) {
            if j != i {
                counts[[kept[i], kept[j]]] += 1.0;
            }
        }
    }
    let total = counts.sum();
    let rows = counts.sum_axis(ndarray::Axis(1));
    let cols = counts.sum_axis(ndarray::Axis(0));
    Array2::from_shape_fn((n, n), |(r, c)| {
        let v = counts[[r, c]];
        if v == 0.0 {
            0.0
        } else {
            (v * total / (rows[r] * cols[c])).ln().max(0.0)
        }
    })
}

#[test]
fn ppmi_matches_dense_oracle() {
    let corpus = sentence_corpus();
    let tokens: Vec<&str> = corpus.tokens().collect();
    for window in [1, 2, 3] {
        let cooc = CoocMatrix::from_corpus(&corpus, window, 1).unwrap();
        let ours = ppmi_matrix(&cooc).to_dense();
        let oracle = oracle_ppmi(&tokens, cooc.vocab.words(), window);
        for (a, b) in ours.iter().zip(oracle.iter()) {
            assert!((a - b).abs() < 1e-12, "window {window}: {a} vs {b}");
        }
    }
}

#[test]
fn full_rank_factorization_reproduces_ppmi() {
    let corpus = sentence_corpus();
    let cooc = CoocMatrix::from_corpus(&corpus, 2, 1).unwrap();
    let n = cooc.vocab.len();
    let dense = ppmi_matrix(&cooc).to_dense();
    let f = factorize_ppmi(&cooc, n, 0.5, TruncatedSvdOptions::default()).unwrap();
    let recon = f.words.vectors().dot(&f.contexts.t());
    for (a, b) in recon.iter().zip(dense.iter()) {
        assert!((a - b).abs() < 1e-9);
    }
    let na = nalgebra::DMatrix::from_fn(n, n, |i, j| dense[[i, j]]);
    let mut oracle: Vec<f64> = na.singular_values().iter().copied().collect();
    oracle.sort_by(|a, b| b.total_cmp(a));
    for (s, o) in f.singular_values.iter().zip(&oracle) {
        assert!((s - o).abs() < 1e-9);
    }
}

#[test]
fn documents_survive_a_file_round_trip() {
    let corpus = Corpus::from_text("Hello, World 42!\n\nsecond line here\nthird\n");
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.txt");
    corpus.write_documents(std::fs::File::create(&path).unwrap()).unwrap();
    let back = Corpus::from_file(&path).unwrap();
    assert_eq!(back.n_documents(), corpus.n_documents());
    assert_eq!(back.tokens().collect::<Vec<_>>(), corpus.tokens().collect::<Vec<_>>());
    assert_eq!(back.document_range(2), corpus.document_range(2));
}

#[test]
fn sgns_reproducible_per_seed() {
    let corpus = sentence_corpus();
    let config = SgnsConfig {
        dim: 8,
        epochs: 2,
        min_count: 1,
        ..Default::default()
    };
    let a = train_sgns_corpus(&corpus, &config).unwrap();
    let b = train_sgns_corpus(&corpus, &config).unwrap();
    assert_eq!(a.words, b.words);
    assert_eq!(a.epoch_losses, b.epoch_losses);
    let c = train_sgns_corpus(&corpus, &SgnsConfig { seed: 2, ..config }).unwrap();
    assert_ne!(a.words, c.words);
    assert!(a.epoch_losses.iter().all(|l| l.is_finite() && *l > 0.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn cooccurrence_counts_are_symmetric(
        ids in prop::collection::vec(0usize..6, 2..80), window in 1usize..4,
    ) {
        let words = ["a", "b", "c", "d", "e", "f"];
        let corpus = Corpus::from_tokens(ids.iter().map(|&i| words[i]));
        let cooc = CoocMatrix::from_corpus(&corpus, window, 1).unwrap();
        let dense = cooc.counts.to_dense();
        prop_assert_eq!(&dense, &dense.t());
        let n = ids.len();
        let expected: usize = (0..n).map(|i| (i + window).min(n - 1) - i).sum::<usize>() * 2;
        prop_assert_eq!(dense.sum() as usize, expected);
    }

    #[test]
    fn halves_partition_the_tokens(ids in prop::collection::vec(0usize..4, 0..60)) {
        let words = ["w", "x", "y", "z"];
        let corpus = Corpus::from_tokens(ids.iter().map(|&i| words[i]));
        let (a, b) = corpus.halves();
        prop_assert_eq!(a.len() + b.len(), corpus.len());
        let joined: Vec<&str> = a.tokens().chain(b.tokens()).collect();
        prop_assert_eq!(joined, corpus.tokens().collect::<Vec<_>>());
    }
}
