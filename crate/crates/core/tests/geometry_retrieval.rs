//! Geometry identities and retrieval invariants on random spaces.

use embalign_core::embedding::{EmbeddingSpace, Vocabulary};
use embalign_core::geometry::geometry_report;
use embalign_core::linalg::{gaussian_matrix, random_orthogonal};
use embalign_core::procrustes::AlignmentMap;
use embalign_core::retrieval::{
    precision_at_k, precision_at_ks, BruteForceScorer, EvalLexicon, RetrievalIndex, Scorer,
};
use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn space(rows: Array2<f64>) -> EmbeddingSpace {
    let words = (0..rows.nrows()).map(|i| format!("w{i}")).collect();
    EmbeddingSpace::new(Vocabulary::from_words(words).unwrap(), rows).unwrap()
}

fn random_space(n: usize, d: usize, offset: f64, seed: u64) -> EmbeddingSpace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift = Array1::from_elem(d, offset);
    space(gaussian_matrix(n, d, &mut rng) + &shift)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mean_inner_product_equals_squared_mean_norm(
        seed in any::<u64>(), n in 1usize..300, d in 1usize..40, offset in -3.0f64..3.0,
    ) {
        let s = random_space(n, d, offset, seed);
        let r = geometry_report(&s).unwrap();
        let norm_sq = r.mean_vector_norm * r.mean_vector_norm;
        prop_assert!((r.avg_inner_product_to_mean - norm_sq).abs() <= 1e-10);
    }

    #[test]
    fn centered_space_statistic_vanishes(
        seed in any::<u64>(), n in 2usize..300, d in 1usize..40, offset in -3.0f64..3.0,
    ) {
        let s = random_space(n, d, offset, seed).center();
        let r = geometry_report(&s).unwrap();
        prop_assert!(r.avg_inner_product_to_mean.abs() <= 1e-10);
    }

    #[test]
    fn precision_is_monotone_in_k(seed in any::<u64>(), n in 5usize..120, d in 2usize..12) {
        let src = random_space(n, d, 0.0, seed);
        let tgt = random_space(n, d, 0.0, seed.wrapping_add(1));
        let words: Vec<&str> = src.vocab().words().iter().map(String::as_str).collect();
        let lex = EvalLexicon::identity(&words).unwrap();
        for scorer in [Scorer::Cosine, Scorer::CSLS_DEFAULT] {
            let index = RetrievalIndex::new(&src, &tgt, &AlignmentMap::identity(d), scorer).unwrap();
            let ks: Vec<usize> = (1..=n.min(15)).collect();
            let reports = precision_at_ks(&index, &src, &tgt, &lex, &ks).unwrap();
            for pair in reports.windows(2) {
                prop_assert!(pair[0].precision <= pair[1].precision);
            }
        }
    }

    #[test]
    fn identity_alignment_retrieves_itself_by_cosine(seed in any::<u64>(), n in 2usize..150, d in 2usize..16) {
        let s = random_space(n, d, 0.0, seed);
        let words: Vec<&str> = s.vocab().words().iter().map(String::as_str).collect();
        let lex = EvalLexicon::identity(&words).unwrap();
        let id = AlignmentMap::identity(d);
        prop_assert_eq!(precision_at_k(&s, &s, &id, &lex, 1, Scorer::Cosine).unwrap().precision, 1.0);
    }

    #[test]
    fn index_matches_brute_force(seed in any::<u64>(), n in 2usize..80, d in 2usize..10, knn in 1usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let src = space(gaussian_matrix(n, d, &mut rng));
        let tgt = space(gaussian_matrix(n + 3, d, &mut rng));
        let w = AlignmentMap::new(random_orthogonal(d, &mut rng)).unwrap();
        for scorer in [Scorer::Cosine, Scorer::Csls { knn }] {
            let index = RetrievalIndex::new(&src, &tgt, &w, scorer).unwrap();
            let brute = BruteForceScorer::new(&src, &tgt, &w, scorer);
            let scores = index.score_rows(&(0..n).collect::<Vec<_>>());
            for i in 0..n {
                for j in 0..n + 3 {
                    prop_assert!((scores[[i, j]] - brute.score(i, j)).abs() < 1e-12);
                }
                prop_assert_eq!(index.top_k(i, 5), brute.top_k(i, 5));
            }
        }
    }
}
