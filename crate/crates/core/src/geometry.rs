//! Embedding-space geometry diagnostics.
//!
//! The main statistic is the average inner product of each word vector with
//! the mean vector, broken down by frequency-rank decile. A value near zero
//! means the space is well dispersed; a large positive value means the
//! vectors share a common direction.

use std::io::Write;

use ndarray::{Array1, Axis};

use crate::embedding::EmbeddingSpace;
use crate::error::{Error, Result};

/// Mean inner product with the centroid over one frequency-rank band.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct BandStat {
    pub label: String,
    /// Half-open row range `[start, end)` in frequency order.
    pub start: usize,
    pub end: usize,
    pub mean_inner_product: f64,
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct GeometryReport {
    pub n_words: usize,
    pub dim: usize,
    pub avg_inner_product_to_mean: f64,
    pub mean_vector_norm: f64,
    pub per_band_inner_product: Vec<BandStat>,
    /// The same statistics on unit-normalized vectors; `None` when the
    /// space has zero-norm rows.
    pub unit: Option<Box<GeometryReport>>,
}

/// Computes the report on raw vectors and on a unit-normalized copy.
pub fn geometry_report(space: &EmbeddingSpace) -> Result<GeometryReport> {
    let mut report = raw_report(space)?;
    if space.zero_rows(0.0).is_empty() {
        report.unit = Some(Box::new(raw_report(&space.unit_normalize()?)?));
    }
    Ok(report)
}

fn raw_report(space: &EmbeddingSpace) -> Result<GeometryReport> {
    if space.is_empty() {
        return Err(Error::EmptySpace);
    }
    let n = space.len();
    let mean = space.centroid();
    let inner: Array1<f64> = space.vectors().dot(&mean);
    let avg = inner.sum() / n as f64;
    let norm_sq = mean.dot(&mean);

    // mean_i <v_i, mu> = <mu, mu>, up to rounding.
    let scale = space
        .vectors()
        .axis_iter(Axis(0))
        .map(|r| r.dot(&r))
        .sum::<f64>()
        / n as f64;
    let tol = 1e-10 * scale.max(1.0);
    if (avg - norm_sq).abs() > tol {
        return Err(Error::Degenerate(format!(
            "inner-product self-check failed: {avg} vs |mu|^2 = {norm_sq}"
        )));
    }

    let per_band = decile_bands(n)
        .into_iter()
        .enumerate()
        .map(|(b, (start, end))| BandStat {
            label: format!("decile_{}", b + 1),
            start,
            end,
            mean_inner_product: inner.slice(ndarray::s![start..end]).mean().unwrap_or(0.0),
        })
        .collect();

    Ok(GeometryReport {
        n_words: n,
        dim: space.dim(),
        avg_inner_product_to_mean: avg,
        mean_vector_norm: norm_sq.sqrt(),
        per_band_inner_product: per_band,
        unit: None,
    })
}

/// Non-empty rank bands splitting `0..n` into at most ten pieces.
pub fn decile_bands(n: usize) -> Vec<(usize, usize)> {
    let bands = n.min(10);
    (0..bands)
        .map(|b| (b * n / bands, (b + 1) * n / bands))
        .filter(|(s, e)| e > s)
        .collect()
}

impl GeometryReport {
    /// `statistic,value` rows. Statistics of the unit-normalized copy are
    /// prefixed with `unit_`.
    pub fn rows(&self) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        self.push_rows("", &mut out);
        if let Some(unit) = &self.unit {
            unit.push_rows("unit_", &mut out);
        }
        out
    }

    fn push_rows(&self, prefix: &str, out: &mut Vec<(String, f64)>) {
        out.push((format!("{prefix}n_words"), self.n_words as f64));
        out.push((format!("{prefix}dim"), self.dim as f64));
        out.push((
            format!("{prefix}avg_inner_product_to_mean"),
            self.avg_inner_product_to_mean,
        ));
        out.push((format!("{prefix}mean_vector_norm"), self.mean_vector_norm));
        for band in &self.per_band_inner_product {
            out.push((format!("{prefix}{}_inner_product", band.label), band.mean_inner_product));
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["statistic", "value"])?;
        for (k, v) in self.rows() {
            csv.write_record([k, format!("{v}")])?;
        }
        csv.flush()?;
        Ok(())
    }

    /// Human-readable summary.
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "words: {}  dim: {}\naverage inner product to mean: {:.6}\nmean vector norm: {:.6}\n",
            self.n_words, self.dim, self.avg_inner_product_to_mean, self.mean_vector_norm
        );
        for band in &self.per_band_inner_product {
            s.push_str(&format!(
                "  {:<10} rows {:>7}..{:<7} {:>12.6}\n",
                band.label, band.start, band.end, band.mean_inner_product
            ));
        }
        if let Some(unit) = &self.unit {
            s.push_str("unit-normalized:\n");
            for line in unit.to_text().lines() {
                s.push_str("  ");
                s.push_str(line);
                s.push('\n');
            }
        }
        s
    }
}

/// Cosine between the two centroids.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct CentroidCosine {
    pub value: f64,
    /// Set when either centroid is shorter than 1e-12; `value` is then 0.
    pub degenerate: bool,
}

pub fn centroid_cosine(a: &EmbeddingSpace, b: &EmbeddingSpace) -> Result<CentroidCosine> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySpace);
    }
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    let ma = a.centroid();
    let mb = b.centroid();
    let na = ma.dot(&ma).sqrt();
    let nb = mb.dot(&mb).sqrt();
    if na < 1e-12 || nb < 1e-12 {
        log::warn!("centroid norm below 1e-12; reporting cosine 0");
        return Ok(CentroidCosine {
            value: 0.0,
            degenerate: true,
        });
    }
    Ok(CentroidCosine {
        value: (ma.dot(&mb) / (na * nb)).clamp(-1.0, 1.0),
        degenerate: false,
    })
}
