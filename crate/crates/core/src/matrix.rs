//! Dense matrix values, norms, thin SVD and support extraction.

use std::fmt;
use std::ops::Deref;

use nalgebra::DMatrix;
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};

/// A finite, real, dense matrix.
///
/// Dereferences to the underlying [`DMatrix`] for read-only access; every
/// public constructor rejects NaN and infinite entries.
#[derive(Clone, PartialEq)]
pub struct DenseMatrix(DMatrix<f64>);

impl DenseMatrix {
    pub fn new(inner: DMatrix<f64>) -> Result<Self> {
        if let Some(pos) = inner.iter().position(|x| !x.is_finite()) {
            // nalgebra storage is column-major
            let rows = inner.nrows().max(1);
            return Err(Error::NonFinite {
                row: pos % rows,
                col: pos / rows,
            });
        }
        Ok(DenseMatrix(inner))
    }

    /// Builds a matrix from entries listed row by row.
    pub fn from_row_major(rows: usize, cols: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(Error::invalid(format!(
                "expected {} entries for a {rows}x{cols} matrix, got {}",
                rows * cols,
                entries.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(rows, cols, &entries))
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(Error::invalid("ragged rows"));
        }
        let entries = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::from_row_major(nrows, ncols, entries)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix(DMatrix::zeros(rows, cols))
    }

    pub fn identity(n: usize) -> Self {
        DenseMatrix(DMatrix::identity(n, n))
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        let n = diag.len();
        Self::new(DMatrix::from_fn(n, n, |i, j| if i == j { diag[i] } else { 0.0 }))
    }

    /// Wraps a matrix produced by arithmetic on finite inputs.
    pub(crate) fn from_trusted(inner: DMatrix<f64>) -> Self {
        debug_assert!(inner.iter().all(|x| x.is_finite()));
        DenseMatrix(inner)
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn transposed(&self) -> Self {
        DenseMatrix(self.0.transpose())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    /// Entries in row-major order.
    pub fn to_row_major(&self) -> Vec<f64> {
        let (r, c) = self.shape();
        let mut out = Vec::with_capacity(r * c);
        for i in 0..r {
            for j in 0..c {
                out.push(self.0[(i, j)]);
            }
        }
        out
    }

    pub(crate) fn check_same_shape(&self, other: &DenseMatrix) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch {
                expected: self.shape(),
                found: other.shape(),
            });
        }
        Ok(())
    }

    pub fn checked_add(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        self.check_same_shape(other)?;
        DenseMatrix::new(&self.0 + &other.0)
    }

    pub fn checked_sub(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        self.check_same_shape(other)?;
        DenseMatrix::new(&self.0 - &other.0)
    }
}

impl Deref for DenseMatrix {
    type Target = DMatrix<f64>;

    fn deref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DenseMatrix{:?}{}", self.shape(), self.0)
    }
}

impl Serialize for DenseMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("DenseMatrix", 3)?;
        s.serialize_field("rows", &self.rows())?;
        s.serialize_field("cols", &self.cols())?;
        s.serialize_field("entries", &self.to_row_major())?;
        s.end()
    }
}

pub fn l1_norm(m: &DenseMatrix) -> f64 {
    m.iter().map(|x| x.abs()).sum()
}

pub fn linf_norm(m: &DenseMatrix) -> f64 {
    m.iter().fold(0.0, |acc: f64, x| acc.max(x.abs()))
}

pub(crate) fn singular_values(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    if m.is_empty() {
        return Ok(Vec::new());
    }
    to_faer(m).singular_values().map_err(|_| Error::SvdFailed)
}

pub fn nuclear_norm(m: &DenseMatrix) -> Result<f64> {
    Ok(singular_values(m)?.iter().sum())
}

pub fn spectral_norm(m: &DenseMatrix) -> Result<f64> {
    Ok(singular_values(m)?.first().copied().unwrap_or(0.0))
}

pub(crate) fn spectral_norm_raw(m: &DMatrix<f64>) -> Result<f64> {
    Ok(singular_values(m)?.first().copied().unwrap_or(0.0))
}

/// Thin SVD truncated to the numerical rank.
#[derive(Debug, Clone)]
pub struct SvdResult {
    /// `rows x k`, orthonormal columns.
    pub u: DMatrix<f64>,
    /// Nonincreasing, all strictly above the rank threshold.
    pub singular_values: Vec<f64>,
    /// `cols x k`, orthonormal columns.
    pub v: DMatrix<f64>,
    pub numerical_rank: usize,
}

impl SvdResult {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut us = self.u.clone();
        for (j, s) in self.singular_values.iter().enumerate() {
            us.column_mut(j).scale_mut(*s);
        }
        us * self.v.transpose()
    }
}

/// Default relative rank threshold: `max(rows, cols) * eps`.
pub fn default_rank_tol(rows: usize, cols: usize) -> f64 {
    rows.max(cols) as f64 * f64::EPSILON
}

/// Thin SVD keeping singular values `> rank_tol * sigma_1`.
pub fn svd(m: &DenseMatrix, rank_tol: f64) -> Result<SvdResult> {
    if !(rank_tol >= 0.0) {
        return Err(Error::invalid("rank_tol must be nonnegative"));
    }
    svd_raw(m.as_matrix(), rank_tol)
}

/// Thin SVD with singular values in nonincreasing order.
pub(crate) fn full_svd_sorted(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>, DMatrix<f64>)> {
    let (rows, cols) = m.shape();
    let p = rows.min(cols);
    if p == 0 {
        return Ok((DMatrix::zeros(rows, 0), Vec::new(), DMatrix::zeros(cols, 0)));
    }
    let svd = to_faer(m).thin_svd().map_err(|_| Error::SvdFailed)?;
    let (u, s, v) = (svd.U(), svd.S().column_vector(), svd.V());
    let sigma = (0..p).map(|i| s[i]).collect();
    let u = DMatrix::from_fn(rows, p, |i, j| u[(i, j)]);
    let v = DMatrix::from_fn(cols, p, |i, j| v[(i, j)]);
    Ok((u, sigma, v))
}

// faer is built without its rayon feature, so decompositions are sequential
// and bit-reproducible; parallelism lives at the trial level instead.
fn to_faer(m: &DMatrix<f64>) -> faer::Mat<f64> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

pub(crate) fn svd_raw(m: &DMatrix<f64>, rank_tol: f64) -> Result<SvdResult> {
    let (rows, cols) = m.shape();
    let (u, sigma, v) = full_svd_sorted(m)?;
    let s1 = sigma.first().copied().unwrap_or(0.0);
    let k = if s1 > 0.0 {
        let cutoff = rank_tol * s1;
        sigma.iter().take_while(|&&s| s > cutoff).count()
    } else {
        0
    };
    Ok(SvdResult {
        u: if k == 0 { DMatrix::zeros(rows, 0) } else { u.columns(0, k).into_owned() },
        singular_values: sigma[..k].to_vec(),
        v: if k == 0 { DMatrix::zeros(cols, 0) } else { v.columns(0, k).into_owned() },
        numerical_rank: k,
    })
}

pub fn numerical_rank(m: &DenseMatrix, rank_tol: f64) -> Result<usize> {
    Ok(svd(m, rank_tol)?.numerical_rank)
}

/// Sorted, duplicate-free set of matrix positions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SupportPattern {
    rows: usize,
    cols: usize,
    indices: Vec<(usize, usize)>,
}

impl SupportPattern {
    pub fn new(rows: usize, cols: usize, mut indices: Vec<(usize, usize)>) -> Result<Self> {
        if let Some(&(i, j)) = indices.iter().find(|&&(i, j)| i >= rows || j >= cols) {
            return Err(Error::invalid(format!(
                "index ({i}, {j}) out of bounds for {rows}x{cols}"
            )));
        }
        indices.sort_unstable();
        indices.dedup();
        Ok(SupportPattern { rows, cols, indices })
    }

    pub fn full(rows: usize, cols: usize) -> Self {
        let indices = (0..rows).flat_map(|i| (0..cols).map(move |j| (i, j))).collect();
        SupportPattern { rows, cols, indices }
    }

    pub fn empty(rows: usize, cols: usize) -> Self {
        SupportPattern { rows, cols, indices: Vec::new() }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn indices(&self) -> &[(usize, usize)] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.indices.binary_search(&(i, j)).is_ok()
    }

    /// 0/1 matrix with ones on the pattern.
    pub fn indicator(&self) -> DenseMatrix {
        let mut m = DMatrix::zeros(self.rows, self.cols);
        for &(i, j) in &self.indices {
            m[(i, j)] = 1.0;
        }
        DenseMatrix::from_trusted(m)
    }

    /// Column-major boolean mask, matching nalgebra storage order.
    pub(crate) fn mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.rows * self.cols];
        for &(i, j) in &self.indices {
            mask[j * self.rows + i] = true;
        }
        mask
    }
}

/// Positions with `|m_ij| > zero_tol`.
pub fn support_of(m: &DenseMatrix, zero_tol: f64) -> SupportPattern {
    let (rows, cols) = m.shape();
    let mut indices = Vec::new();
    for i in 0..rows {
        for j in 0..cols {
            if m[(i, j)].abs() > zero_tol {
                indices.push((i, j));
            }
        }
    }
    SupportPattern { rows, cols, indices }
}

/// Entrywise sign with `|x| <= zero_tol` mapped to 0.
pub fn sign_pattern(m: &DenseMatrix, zero_tol: f64) -> DenseMatrix {
    DenseMatrix::from_trusted(m.map(|x| {
        if x.abs() <= zero_tol {
            0.0
        } else {
            x.signum()
        }
    }))
}
