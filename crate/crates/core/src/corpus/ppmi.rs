use ndarray::{Array1, Array2, Axis};

use crate::embedding::EmbeddingSpace;
use crate::error::{Error, Result};
use crate::linalg::{truncated_svd, CsrMatrix, TruncatedSvdOptions};

use super::cooc::CoocMatrix;

/// Positive PMI: `max(0, ln(#(w,c) N / (#(w) #(c))))`, with marginals taken
/// from row and column sums and `N` the total mass. Zero counts stay zero.
pub fn ppmi_matrix(cooc: &CoocMatrix) -> CsrMatrix {
    let (rows, cols) = cooc.counts.shape();
    let mut row_sum = vec![0.0; rows];
    let mut col_sum = vec![0.0; cols];
    for (r, c, v) in cooc.counts.iter() {
        row_sum[r] += v;
        col_sum[c] += v;
    }
    let total: f64 = row_sum.iter().sum();
    let triplets = cooc.counts.iter().filter_map(|(r, c, v)| {
        let pmi = (v * total / (row_sum[r] * col_sum[c])).ln();
        (pmi > 0.0).then_some((r, c, pmi))
    });
    CsrMatrix::from_sorted_triplets(rows, cols, triplets.collect::<Vec<_>>())
}

/// A PPMI factorization `U S V^T`.
#[derive(Clone, Debug)]
pub struct PpmiSvd {
    /// `U S^p`.
    pub words: EmbeddingSpace,
    /// `V S^(1-p)`, so that `words * contexts^T = U S V^T`.
    pub contexts: Array2<f64>,
    pub singular_values: Array1<f64>,
}

/// Truncated SVD of the PPMI matrix with eigenvalue weighting `p`.
pub fn factorize_ppmi(
    cooc: &CoocMatrix,
    dim: usize,
    eig_exponent: f64,
    opts: TruncatedSvdOptions,
) -> Result<PpmiSvd> {
    let n = cooc.vocab.len();
    if dim == 0 {
        return Err(Error::InvalidConfig("dim must be at least 1".into()));
    }
    if dim > n {
        return Err(Error::InvalidConfig(format!(
            "dim {dim} exceeds the {n} available singular values"
        )));
    }
    let ppmi = ppmi_matrix(cooc);
    if ppmi.nnz() == 0 {
        return Err(Error::Degenerate("PPMI matrix is all zero".into()));
    }
    let svd = truncated_svd(&ppmi, dim, opts);
    let weight = |p: f64| svd.s.mapv(|s| if s > 0.0 { s.powf(p) } else { 0.0 });
    let words = &svd.u * &weight(eig_exponent).insert_axis(Axis(0));
    let contexts = &svd.vt.t() * &weight(1.0 - eig_exponent).insert_axis(Axis(0));
    Ok(PpmiSvd {
        words: EmbeddingSpace::new(cooc.vocab.clone(), words)?,
        contexts,
        singular_values: svd.s,
    })
}

/// Word vectors `U S^p` of the rank-`dim` PPMI approximation.
pub fn train_ppmi_svd(cooc: &CoocMatrix, dim: usize, eig_exponent: f64) -> Result<EmbeddingSpace> {
    Ok(factorize_ppmi(cooc, dim, eig_exponent, TruncatedSvdOptions::default())?.words)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::count_cooccurrences;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn cooc_from_dense(counts: Array2<f64>) -> CoocMatrix {
        let n = counts.nrows();
        let words = (0..n).map(|i| format!("w{i}")).collect();
        CoocMatrix {
            vocab: crate::embedding::Vocabulary::from_words(words).unwrap(),
            counts: CsrMatrix::from_dense(counts.view()),
            window: 1,
        }
    }

    #[test]
    fn two_by_two_ppmi() {
        let c = cooc_from_dense(array![[0.0, 2.0], [2.0, 0.0]]);
        let p = ppmi_matrix(&c).to_dense();
        let l2 = 2f64.ln();
        assert_abs_diff_eq!(p, array![[0.0, l2], [l2, 0.0]], epsilon = 1e-15);
    }

    #[test]
    fn zero_exponent_gives_orthonormal_rows() {
        let c = cooc_from_dense(array![[0.0, 2.0], [2.0, 0.0]]);
        let f = factorize_ppmi(&c, 2, 0.0, TruncatedSvdOptions::default()).unwrap();
        let w = f.words.vectors();
        assert_abs_diff_eq!(w.t().dot(&w), Array2::eye(2), epsilon = 1e-12);
        for row in w.rows() {
            assert_abs_diff_eq!(row.dot(&row), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn errors() {
        let c = cooc_from_dense(array![[0.0, 2.0], [2.0, 0.0]]);
        assert!(train_ppmi_svd(&c, 3, 0.5).is_err());
        // Uniform counts carry no information: every PMI is zero.
        let flat = cooc_from_dense(array![[1.0, 1.0], [1.0, 1.0]]);
        assert!(matches!(train_ppmi_svd(&flat, 1, 0.5), Err(Error::Degenerate(_))));
    }

    #[test]
    fn ppmi_is_nonnegative_and_symmetric() {
        let toks: Vec<String> = "a b c a b d a c e b a d c"
            .split(' ')
            .map(String::from)
            .collect();
        let c = count_cooccurrences(&toks, 2, 1).unwrap();
        let p = ppmi_matrix(&c).to_dense();
        assert!(p.iter().all(|&v| v >= 0.0));
        assert_abs_diff_eq!(p.clone(), p.t().to_owned(), epsilon = 1e-15);
    }
}
