//! Pairwise feature vectors built from two contextual embeddings.
//!
//! The plain vector is `[e1 | e2]` (length 2d). The enriched vector is
//! `[e1 | e2 | e1 - e2 | e1 * e2 | C | E | M]` (length 4d + 3) where the
//! trailing scalars are cosine similarity, Euclidean distance and Manhattan
//! distance, always in that order. Distances use the raw embeddings and all
//! reductions accumulate in f64.

use std::ops::Range;

use ndarray::{Array2, ArrayView1};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    Plain,
    Enriched,
}

impl FeatureKind {
    pub fn width(self, dim: usize) -> usize {
        match self {
            FeatureKind::Plain => 2 * dim,
            FeatureKind::Enriched => 4 * dim + 3,
        }
    }
}

/// Width of the adapter network's input: two adapted embeddings in front of
/// the enriched vector.
pub fn adapted_width(dim: usize) -> usize {
    2 * dim + FeatureKind::Enriched.width(dim)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairFeatures {
    kind: FeatureKind,
    dim: usize,
    values: Vec<f64>,
}

impl PairFeatures {
    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    fn slice(&self, r: Range<usize>) -> &[f64] {
        &self.values[r]
    }

    pub fn e1(&self) -> &[f64] {
        self.slice(0..self.dim)
    }

    pub fn e2(&self) -> &[f64] {
        self.slice(self.dim..2 * self.dim)
    }

    pub fn diff(&self) -> Option<&[f64]> {
        (self.kind == FeatureKind::Enriched).then(|| self.slice(2 * self.dim..3 * self.dim))
    }

    pub fn prod(&self) -> Option<&[f64]> {
        (self.kind == FeatureKind::Enriched).then(|| self.slice(3 * self.dim..4 * self.dim))
    }

    /// `(cosine, euclidean, manhattan)` for enriched vectors.
    pub fn scalars(&self) -> Option<(f64, f64, f64)> {
        (self.kind == FeatureKind::Enriched).then(|| {
            let s = &self.values[4 * self.dim..];
            (s[0], s[1], s[2])
        })
    }
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch {
            expected: a,
            found: b,
        });
    }
    Ok(())
}

pub fn cosine<T: Copy + Into<f64>>(e1: &[T], e2: &[T]) -> Result<f64> {
    check_lengths(e1.len(), e2.len())?;
    let (mut dot, mut n1, mut n2) = (0.0f64, 0.0f64, 0.0f64);
    for (&a, &b) in e1.iter().zip(e2) {
        let (a, b) = (a.into(), b.into());
        dot += a * b;
        n1 += a * a;
        n2 += b * b;
    }
    if n1 == 0.0 || n2 == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((dot / (n1.sqrt() * n2.sqrt())).clamp(-1.0, 1.0))
}

pub fn euclidean<T: Copy + Into<f64>>(e1: &[T], e2: &[T]) -> Result<f64> {
    check_lengths(e1.len(), e2.len())?;
    Ok(e1
        .iter()
        .zip(e2)
        .map(|(&a, &b)| {
            let d = a.into() - b.into();
            d * d
        })
        .sum::<f64>()
        .sqrt())
}

pub fn manhattan<T: Copy + Into<f64>>(e1: &[T], e2: &[T]) -> Result<f64> {
    check_lengths(e1.len(), e2.len())?;
    Ok(e1
        .iter()
        .zip(e2)
        .map(|(&a, &b)| (a.into() - b.into()).abs())
        .sum())
}

pub fn concat_features<T: Copy + Into<f64>>(e1: &[T], e2: &[T]) -> Result<PairFeatures> {
    check_lengths(e1.len(), e2.len())?;
    let values = e1.iter().chain(e2).map(|&x| x.into()).collect();
    Ok(PairFeatures {
        kind: FeatureKind::Plain,
        dim: e1.len(),
        values,
    })
}

pub fn enrich_features<T: Copy + Into<f64>>(e1: &[T], e2: &[T]) -> Result<PairFeatures> {
    let mut values = Vec::with_capacity(FeatureKind::Enriched.width(e1.len()));
    push_enriched(&mut values, e1, e2)?;
    Ok(PairFeatures {
        kind: FeatureKind::Enriched,
        dim: e1.len(),
        values,
    })
}

fn push_enriched<T: Copy + Into<f64>>(out: &mut Vec<f64>, e1: &[T], e2: &[T]) -> Result<()> {
    let cos = cosine(e1, e2)?;
    let a: Vec<f64> = e1.iter().map(|&x| x.into()).collect();
    let b: Vec<f64> = e2.iter().map(|&x| x.into()).collect();
    out.extend_from_slice(&a);
    out.extend_from_slice(&b);
    out.extend(a.iter().zip(&b).map(|(x, y)| x - y));
    out.extend(a.iter().zip(&b).map(|(x, y)| x * y));
    out.push(cos);
    out.push(euclidean(&a, &b)?);
    out.push(manhattan(&a, &b)?);
    Ok(())
}

fn row_slices<'a>(
    e1: ArrayView1<'a, f64>,
    e2: ArrayView1<'a, f64>,
) -> (std::borrow::Cow<'a, [f64]>, std::borrow::Cow<'a, [f64]>) {
    let to_slice = |v: ArrayView1<'a, f64>| match v.to_slice() {
        Some(s) => std::borrow::Cow::Borrowed(s),
        None => std::borrow::Cow::Owned(v.to_vec()),
    };
    (to_slice(e1), to_slice(e2))
}

/// Row-wise feature matrix for aligned embedding matrices (n x d each).
pub fn feature_matrix(kind: FeatureKind, e1: &Array2<f64>, e2: &Array2<f64>) -> Result<Array2<f64>> {
    check_lengths(e1.ncols(), e2.ncols())?;
    check_lengths(e1.nrows(), e2.nrows())?;
    let (n, d) = e1.dim();
    let width = kind.width(d);
    let mut values = Vec::with_capacity(n * width);
    for (r1, r2) in e1.rows().into_iter().zip(e2.rows()) {
        let (a, b) = row_slices(r1, r2);
        match kind {
            FeatureKind::Plain => {
                values.extend_from_slice(&a);
                values.extend_from_slice(&b);
            }
            FeatureKind::Enriched => push_enriched(&mut values, &a, &b)?,
        }
    }
    Ok(Array2::from_shape_vec((n, width), values).expect("width computed above"))
}

/// Cosine similarity per row.
pub fn cosine_column(e1: &Array2<f64>, e2: &Array2<f64>) -> Result<Vec<f64>> {
    check_lengths(e1.nrows(), e2.nrows())?;
    e1.rows()
        .into_iter()
        .zip(e2.rows())
        .map(|(r1, r2)| {
            let (a, b) = row_slices(r1, r2);
            cosine(&a, &b)
        })
        .collect()
}
