//! Supervised orthogonal alignment.
//!
//! Given dictionary rows `X` (source) and `Y` (target), the orthogonal map
//! minimizing `sum |W x_i - y_i|^2` is `W = U V^T` where `Y^T X = U S V^T`.
//! Reflections are allowed; no determinant correction is applied.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::embedding::{shared_vocabulary, EmbeddingSpace, SeedDictionary};
use crate::error::{Error, Result};
use crate::linalg::{orthogonality_error, svd};

/// A square linear map acting on column vectors: `x -> W x`.
///
/// Row-stored embeddings are mapped as `X W^T`.
#[derive(Clone, Debug, PartialEq)]
pub struct AlignmentMap {
    matrix: Array2<f64>,
    orthogonal: bool,
}

impl AlignmentMap {
    pub fn identity(dim: usize) -> Self {
        AlignmentMap {
            matrix: Array2::eye(dim),
            orthogonal: true,
        }
    }

    /// Wraps a square matrix. The orthogonal flag is set when
    /// `|W^T W - I|_F <= 1e-8 d`.
    pub fn new(matrix: Array2<f64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                found: matrix.ncols(),
            });
        }
        if matrix.iter().any(|x| !x.is_finite()) {
            return Err(Error::Degenerate("alignment matrix has non-finite entries".into()));
        }
        let d = matrix.nrows() as f64;
        let orthogonal = orthogonality_error(matrix.view()) <= 1e-8 * d;
        Ok(AlignmentMap { matrix, orthogonal })
    }

    pub fn matrix(&self) -> ArrayView2<'_, f64> {
        self.matrix.view()
    }

    pub fn into_matrix(self) -> Array2<f64> {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_orthogonal(&self) -> bool {
        self.orthogonal
    }

    pub fn orthogonality_error(&self) -> f64 {
        orthogonality_error(self.matrix.view())
    }

    pub fn transpose(&self) -> Self {
        AlignmentMap {
            matrix: self.matrix.t().to_owned(),
            orthogonal: self.orthogonal,
        }
    }

    /// `W x` for one vector.
    pub fn apply_vector(&self, x: ArrayView1<'_, f64>) -> ndarray::Array1<f64> {
        self.matrix.dot(&x)
    }

    /// `X W^T` for row-stored vectors.
    pub fn apply_rows(&self, rows: ArrayView2<'_, f64>) -> Array2<f64> {
        rows.dot(&self.matrix.t())
    }

    /// Maps every row of a space.
    pub fn apply(&self, space: &EmbeddingSpace) -> Result<EmbeddingSpace> {
        if space.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: space.dim(),
            });
        }
        space.with_vectors(self.apply_rows(space.vectors()))
    }

    /// Plain-text matrix: `d` lines of `d` space-separated values.
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        for row in self.matrix.rows() {
            let line = row
                .iter()
                .map(|v| format!("{v:.16e}"))
                .collect::<Vec<_>>()
                .join(" ");
            writeln!(w, "{line}")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write(BufWriter::new(File::create(path)?))
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self> {
        let mut data = Vec::new();
        let mut d = None;
        let mut rows = 0;
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let values = line
                .split_whitespace()
                .map(|p| {
                    p.parse::<f64>()
                        .map_err(|e| Error::format(i + 1, format!("cannot parse '{p}': {e}")))
                })
                .collect::<Result<Vec<_>>>()?;
            let expected = *d.get_or_insert(values.len());
            if values.len() != expected {
                return Err(Error::format(
                    i + 1,
                    format!("{} values, expected {expected}", values.len()),
                ));
            }
            data.extend(values);
            rows += 1;
        }
        let d = d.ok_or_else(|| Error::format(1, "empty matrix file"))?;
        if rows != d {
            return Err(Error::format(rows, format!("matrix has {rows} rows and {d} columns")));
        }
        let m = Array2::from_shape_vec((d, d), data).map_err(|e| Error::format(1, e.to_string()))?;
        Self::new(m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read(BufReader::new(File::open(path)?))
    }
}

/// The `n` most frequent shared words of `a` and `b`, each paired with
/// itself.
pub fn build_seed_dictionary(
    a: &EmbeddingSpace,
    b: &EmbeddingSpace,
    n: usize,
) -> Result<SeedDictionary> {
    if n == 0 {
        return Err(Error::EmptyDictionary);
    }
    let shared = shared_vocabulary(a, b);
    if shared.len() < n {
        return Err(Error::InsufficientOverlap {
            requested: n,
            available: shared.len(),
        });
    }
    SeedDictionary::identity(&shared[..n])
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ProcrustesOptions {
    /// Unit-normalize dictionary rows before solving.
    pub normalize_rows: bool,
}

/// Gathers the dictionary rows of both spaces as `(X, Y)`.
pub fn dictionary_rows(
    source: &EmbeddingSpace,
    target: &EmbeddingSpace,
    dict: &SeedDictionary,
) -> Result<(Array2<f64>, Array2<f64>)> {
    if dict.is_empty() {
        return Err(Error::EmptyDictionary);
    }
    if source.dim() != target.dim() {
        return Err(Error::DimensionMismatch {
            expected: source.dim(),
            found: target.dim(),
        });
    }
    let mut missing = Vec::new();
    let mut idx = Vec::with_capacity(dict.len());
    for (s, t) in dict.pairs() {
        let si = source.vocab().index_of(s);
        let ti = target.vocab().index_of(t);
        if si.is_none() {
            missing.push(format!("source:{s}"));
        }
        if ti.is_none() {
            missing.push(format!("target:{t}"));
        }
        if let (Some(si), Some(ti)) = (si, ti) {
            idx.push((si, ti));
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingTokens(missing));
    }
    let d = source.dim();
    let mut x = Array2::zeros((idx.len(), d));
    let mut y = Array2::zeros((idx.len(), d));
    for (r, &(si, ti)) in idx.iter().enumerate() {
        x.row_mut(r).assign(&source.vector(si));
        y.row_mut(r).assign(&target.vector(ti));
    }
    Ok((x, y))
}

/// Orthogonal map from dictionary rows: `W = U V^T` with `Y^T X = U S V^T`.
pub fn procrustes_from_rows(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<AlignmentMap> {
    let m = y.t().dot(&x);
    let dec = svd(m.view());
    if dec.s.iter().all(|&s| s < 1e-12) {
        return Err(Error::Degenerate(
            "all singular values of the cross-covariance are below 1e-12".into(),
        ));
    }
    let w = dec.u.dot(&dec.vt);
    let map = AlignmentMap::new(w)?;
    if !map.is_orthogonal() {
        return Err(Error::OrthogonalityDrift(map.orthogonality_error()));
    }
    Ok(map)
}

pub fn procrustes_solve(
    source: &EmbeddingSpace,
    target: &EmbeddingSpace,
    dict: &SeedDictionary,
) -> Result<AlignmentMap> {
    procrustes_solve_with(source, target, dict, ProcrustesOptions::default())
}

pub fn procrustes_solve_with(
    source: &EmbeddingSpace,
    target: &EmbeddingSpace,
    dict: &SeedDictionary,
    opts: ProcrustesOptions,
) -> Result<AlignmentMap> {
    let (mut x, mut y) = dictionary_rows(source, target, dict)?;
    if opts.normalize_rows {
        for m in [&mut x, &mut y] {
            for mut row in m.rows_mut() {
                let n = row.dot(&row).sqrt();
                if n > 0.0 {
                    row.mapv_inplace(|v| v / n);
                }
            }
        }
    }
    procrustes_from_rows(x.view(), y.view())
}
