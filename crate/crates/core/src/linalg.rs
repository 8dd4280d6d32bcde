//! Dense and sparse linear algebra used by the trainers and aligners.
//!
//! The SVD is a one-sided (Hestenes) Jacobi iteration. It is slow for large
//! square matrices but accurate to working precision, which is what the
//! Procrustes solver needs. Large sparse matrices go through randomized
//! subspace iteration that ends in a small Jacobi SVD.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

const JACOBI_TOL: f64 = 1e-15;
const JACOBI_MAX_SWEEPS: usize = 80;

/// Thin singular value decomposition `A = U diag(s) V^T`.
///
/// For an `m x n` input, `u` is `m x r`, `s` has length `r` and `vt` is
/// `r x n` with `r = min(m, n)`. Singular values are sorted in descending
/// order. Columns of `u` belonging to zero singular values are completed to
/// an orthonormal set.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: Array2<f64>,
    pub s: Array1<f64>,
    pub vt: Array2<f64>,
}

pub fn svd(a: ArrayView2<'_, f64>) -> Svd {
    let (m, n) = a.dim();
    if m < n {
        let t = svd(a.t());
        return Svd {
            u: t.vt.t().to_owned(),
            s: t.s,
            vt: t.u.t().to_owned(),
        };
    }

    // Column-major working copies.
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| a.column(j).to_vec()).collect();
    let mut vcols: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();

    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let (head, tail) = cols.split_at_mut(q);
                let cp = &mut head[p];
                let cq = &mut tail[0];
                let alpha = dot(cp, cp);
                let beta = dot(cq, cq);
                let gamma = dot(cp, cq);
                if gamma == 0.0 || gamma.abs() <= JACOBI_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let sn = c * t;
                rotate(cp, cq, c, sn);
                let (vh, vt) = vcols.split_at_mut(q);
                rotate(&mut vh[p], &mut vt[0], c, sn);
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let norms: Vec<f64> = cols.iter().map(|c| dot(c, c).sqrt()).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));

    let scale = norms.iter().cloned().fold(0.0, f64::max);
    let cutoff = scale * (m as f64) * f64::EPSILON;
    let mut u = Array2::<f64>::zeros((m, n));
    let mut s = Array1::<f64>::zeros(n);
    let mut vt = Array2::<f64>::zeros((n, n));
    let mut filled = Vec::with_capacity(n);
    for (k, &j) in order.iter().enumerate() {
        let sigma = norms[j];
        for i in 0..n {
            vt[[k, i]] = vcols[j][i];
        }
        if sigma > cutoff && sigma > 0.0 {
            s[k] = sigma;
            for i in 0..m {
                u[[i, k]] = cols[j][i] / sigma;
            }
            filled.push(k);
        }
    }
    complete_basis(&mut u, &filled);
    Svd { u, s, vt }
}

/// Fills the columns of `u` not listed in `filled` with unit vectors
/// orthogonal to every other column.
fn complete_basis(u: &mut Array2<f64>, filled: &[usize]) {
    let (m, n) = u.dim();
    let mut done: Vec<usize> = filled.to_vec();
    let mut candidate = 0usize;
    for k in 0..n {
        if filled.contains(&k) {
            continue;
        }
        while candidate < m {
            let mut v = Array1::<f64>::zeros(m);
            v[candidate] = 1.0;
            candidate += 1;
            for _ in 0..2 {
                for &j in &done {
                    let col = u.column(j);
                    let proj = col.dot(&v);
                    v.scaled_add(-proj, &col);
                }
            }
            let norm = v.dot(&v).sqrt();
            if norm > 1e-8 {
                u.column_mut(k).assign(&(v / norm));
                done.push(k);
                break;
            }
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn rotate(p: &mut [f64], q: &mut [f64], c: f64, s: f64) {
    for (x, y) in p.iter_mut().zip(q.iter_mut()) {
        let xp = *x;
        let yq = *y;
        *x = c * xp - s * yq;
        *y = s * xp + c * yq;
    }
}

/// Orthonormalizes the columns of `a` in place with twice-iterated modified
/// Gram-Schmidt. Returns the number of columns that were numerically
/// dependent on earlier ones; those are replaced by zero columns.
pub fn orthonormalize_columns(a: &mut Array2<f64>) -> usize {
    let n = a.ncols();
    let mut dependent = 0;
    for j in 0..n {
        let original = a.column(j).dot(&a.column(j)).sqrt();
        for _ in 0..2 {
            for k in 0..j {
                let proj = a.column(k).dot(&a.column(j));
                let qk = a.column(k).to_owned();
                a.column_mut(j).scaled_add(-proj, &qk);
            }
        }
        let norm = a.column(j).dot(&a.column(j)).sqrt();
        if norm <= 1e-12 * original.max(1e-300) || norm == 0.0 {
            a.column_mut(j).fill(0.0);
            dependent += 1;
        } else {
            a.column_mut(j).mapv_inplace(|x| x / norm);
        }
    }
    dependent
}

/// A Haar-distributed random orthogonal `d x d` matrix.
pub fn random_orthogonal<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Array2<f64> {
    loop {
        let mut g = gaussian_matrix(d, d, rng);
        if orthonormalize_columns(&mut g) == 0 {
            return g;
        }
    }
}

pub fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample::<f64, _>(StandardNormal))
}

/// `|W^T W - I|_F`.
pub fn orthogonality_error(w: ArrayView2<'_, f64>) -> f64 {
    let gram = w.t().dot(&w);
    let n = gram.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            let d = gram[[i, j]] - target;
            acc += d * d;
        }
    }
    acc.sqrt()
}

pub fn frobenius_norm(a: ArrayView2<'_, f64>) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Compressed sparse row matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from `(row, col, value)` triplets. Triplets must be
    /// sorted by row then column and free of duplicates; explicit zeros are
    /// dropped.
    pub fn from_sorted_triplets(
        rows: usize,
        cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Self {
        let mut indptr = vec![0usize; rows + 1];
        let mut indices = Vec::new();
        let mut data = Vec::new();
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(r < rows && c < cols, "triplet out of bounds");
            if let Some(prev) = last {
                assert!((r, c) > prev, "triplets must be strictly sorted");
            }
            last = Some((r, c));
            if v == 0.0 {
                continue;
            }
            indptr[r + 1] += 1;
            indices.push(c);
            data.push(v);
        }
        for r in 0..rows {
            indptr[r + 1] += indptr[r];
        }
        CsrMatrix {
            rows,
            cols,
            indptr,
            indices,
            data,
        }
    }

    pub fn from_dense(a: ArrayView2<'_, f64>) -> Self {
        let (rows, cols) = a.dim();
        let triplets = a
            .indexed_iter()
            .map(|((r, c), &v)| (r, c, v))
            .collect::<Vec<_>>();
        Self::from_sorted_triplets(rows, cols, triplets)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.indptr[r]..self.indptr[r + 1];
        self.indices[range.clone()]
            .iter()
            .copied()
            .zip(self.data[range].iter().copied())
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.rows, self.cols));
        for (r, c, v) in self.iter() {
            out[[r, c]] = v;
        }
        out
    }

    /// `self * b`.
    pub fn dot_dense(&self, b: ArrayView2<'_, f64>) -> Array2<f64> {
        assert_eq!(self.cols, b.nrows());
        let mut out = Array2::zeros((self.rows, b.ncols()));
        for r in 0..self.rows {
            let mut orow = out.row_mut(r);
            for (c, v) in self.row(r) {
                orow.scaled_add(v, &b.row(c));
            }
        }
        out
    }

    /// `self^T * b`.
    pub fn t_dot_dense(&self, b: ArrayView2<'_, f64>) -> Array2<f64> {
        assert_eq!(self.rows, b.nrows());
        let mut out = Array2::zeros((self.cols, b.ncols()));
        for r in 0..self.rows {
            let brow = b.row(r);
            for (c, v) in self.row(r) {
                out.row_mut(c).scaled_add(v, &brow);
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Options for [`truncated_svd`].
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TruncatedSvdOptions {
    /// Matrices with both sides at most this size are decomposed exactly.
    pub dense_threshold: usize,
    pub oversample: usize,
    pub power_iterations: usize,
    pub seed: u64,
}

impl Default for TruncatedSvdOptions {
    fn default() -> Self {
        TruncatedSvdOptions {
            dense_threshold: 400,
            oversample: 20,
            power_iterations: 12,
            seed: 0x5eed,
        }
    }
}

/// Leading `k` singular triples of a sparse matrix.
///
/// Small matrices are decomposed exactly with the dense Jacobi SVD; larger
/// ones use randomized subspace iteration followed by a Rayleigh-Ritz step.
/// Singular vectors are sign-normalized so that the largest-magnitude entry
/// of every left singular vector is positive.
pub fn truncated_svd(a: &CsrMatrix, k: usize, opts: TruncatedSvdOptions) -> Svd {
    let (m, n) = a.shape();
    let k = k.min(m.min(n));
    let mut out = if m.max(n) <= opts.dense_threshold {
        let full = svd(a.to_dense().view());
        Svd {
            u: full.u.slice(s![.., ..k]).to_owned(),
            s: full.s.slice(s![..k]).to_owned(),
            vt: full.vt.slice(s![..k, ..]).to_owned(),
        }
    } else {
        randomized_svd(a, k, opts)
    };
    normalize_signs(&mut out);
    out
}

fn randomized_svd(a: &CsrMatrix, k: usize, opts: TruncatedSvdOptions) -> Svd {
    use rand::SeedableRng;
    let (m, n) = a.shape();
    let l = (k + opts.oversample).min(m.min(n));
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(opts.seed);
    let omega = gaussian_matrix(n, l, &mut rng);
    let mut y = a.dot_dense(omega.view());
    orthonormalize_columns(&mut y);
    for _ in 0..opts.power_iterations {
        let mut z = a.t_dot_dense(y.view());
        orthonormalize_columns(&mut z);
        y = a.dot_dense(z.view());
        orthonormalize_columns(&mut y);
    }
    // B = Y^T A, decomposed through its transpose (tall and thin).
    let bt = a.t_dot_dense(y.view());
    let small = svd(bt.view());
    // B^T = Ub S Vb^T  =>  A ~ Y B = (Y Vb) S Ub^T.
    let u = y.dot(&small.vt.t());
    Svd {
        u: u.slice(s![.., ..k]).to_owned(),
        s: small.s.slice(s![..k]).to_owned(),
        vt: small.u.t().slice(s![..k, ..]).to_owned(),
    }
}

fn normalize_signs(svd: &mut Svd) {
    for k in 0..svd.s.len() {
        let col = svd.u.column(k);
        let mut best = 0.0f64;
        for &x in col.iter() {
            if x.abs() > best.abs() {
                best = x;
            }
        }
        if best < 0.0 {
            svd.u.column_mut(k).mapv_inplace(|x| -x);
            svd.vt.row_mut(k).mapv_inplace(|x| -x);
        }
    }
}

/// Column-wise mean of a matrix with at least one row.
pub fn column_mean(a: ArrayView2<'_, f64>) -> Array1<f64> {
    a.mean_axis(Axis(0)).expect("matrix has at least one row")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn reconstruct(svd: &Svd) -> Array2<f64> {
        let us = &svd.u * &svd.s;
        us.dot(&svd.vt)
    }

    #[test]
    fn svd_reconstructs_tall_and_wide() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for &(m, n) in &[(7, 4), (4, 7), (5, 5), (1, 3), (3, 1)] {
            let a = gaussian_matrix(m, n, &mut rng);
            let d = svd(a.view());
            assert_abs_diff_eq!(reconstruct(&d), a, epsilon = 1e-12);
            let r = m.min(n);
            assert_abs_diff_eq!(d.u.t().dot(&d.u), Array2::eye(r), epsilon = 1e-12);
            assert_abs_diff_eq!(d.vt.dot(&d.vt.t()), Array2::eye(r), epsilon = 1e-12);
            for w in d.s.windows(2) {
                assert!(w[0] >= w[1]);
            }
        }
    }

    #[test]
    fn rank_deficient_svd_has_orthonormal_u() {
        let a = array![[1.0, 2.0, 0.0], [2.0, 4.0, 0.0], [0.0, 0.0, 0.0]];
        let d = svd(a.view());
        assert_abs_diff_eq!(d.u.t().dot(&d.u), Array2::eye(3), epsilon = 1e-12);
        assert_abs_diff_eq!(reconstruct(&d), a, epsilon = 1e-12);
        assert_abs_diff_eq!(d.s[1], 0.0);
    }

    #[test]
    fn random_orthogonal_is_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let q = random_orthogonal(20, &mut rng);
        assert!(orthogonality_error(q.view()) < 1e-12);
    }

    #[test]
    fn csr_products_match_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut dense = gaussian_matrix(6, 5, &mut rng);
        dense[[0, 1]] = 0.0;
        dense[[3, 3]] = 0.0;
        let csr = CsrMatrix::from_dense(dense.view());
        assert_eq!(csr.nnz(), 28);
        let b = gaussian_matrix(5, 3, &mut rng);
        let c = gaussian_matrix(6, 2, &mut rng);
        assert_abs_diff_eq!(csr.dot_dense(b.view()), dense.dot(&b), epsilon = 1e-12);
        assert_abs_diff_eq!(csr.t_dot_dense(c.view()), dense.t().dot(&c), epsilon = 1e-12);
        assert_eq!(csr.to_dense(), dense);
    }

    #[test]
    fn randomized_svd_recovers_low_rank_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let left = gaussian_matrix(600, 5, &mut rng);
        let right = gaussian_matrix(5, 500, &mut rng);
        let a = left.dot(&right);
        let csr = CsrMatrix::from_dense(a.view());
        let opts = TruncatedSvdOptions {
            dense_threshold: 10,
            ..Default::default()
        };
        let d = truncated_svd(&csr, 5, opts);
        let err = frobenius_norm((reconstruct(&d) - &a).view()) / frobenius_norm(a.view());
        assert!(err < 1e-10, "relative error {err}");
    }
}
