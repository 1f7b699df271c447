//! Tangent spaces of the sparse and low-rank varieties.
//!
//! `Ω` is the set of matrices supported inside a [`SupportPattern`]; `T` is
//! the span of matrices sharing the column space `U` or the row space `V` of
//! a reference low-rank matrix. This module provides the orthogonal
//! projections onto both spaces and the incoherence quantities built from
//! them: `μ`, `β`, `inc`, the `ξ` bracket and the transversality number.

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::certificate::{gamma_range_corollary, gamma_range_theorem, GammaRange};
use crate::error::{Error, Result};
use crate::matrix::{
    default_rank_tol, spectral_norm_raw, support_of, svd_raw, DenseMatrix,
    SupportPattern,
};
use crate::rng::{self, Purpose};

const ORTHONORMAL_TOL: f64 = 1e-10;
const BASIS_TOL: f64 = 1e-8;

/// Transversality is declared when `σ < 1 - TRANSVERSAL_MARGIN`.
pub const TRANSVERSAL_MARGIN: f64 = 1e-6;
pub const DEFAULT_POWER_ITERS: usize = 200;
const POWER_TOL: f64 = 1e-10;
const POWER_SEED: u64 = 0x5eed_0f_7a_15;

fn orthonormality_defect(basis: &DMatrix<f64>) -> f64 {
    let k = basis.ncols();
    (basis.transpose() * basis - DMatrix::identity(k, k)).amax()
}

/// Tangent space `T` of the rank variety, held as orthonormal factors.
#[derive(Debug, Clone)]
pub struct TangentSpaceLR {
    u: DMatrix<f64>,
    v: DMatrix<f64>,
}

impl TangentSpaceLR {
    pub fn new(u: DMatrix<f64>, v: DMatrix<f64>) -> Result<Self> {
        if u.ncols() != v.ncols() {
            return Err(Error::invalid("U and V must have the same number of columns"));
        }
        if u.ncols() == 0 {
            return Err(Error::invalid("tangent space needs rank >= 1"));
        }
        let deviation = orthonormality_defect(&u).max(orthonormality_defect(&v));
        if deviation > ORTHONORMAL_TOL {
            return Err(Error::NotOrthonormal { deviation });
        }
        Ok(TangentSpaceLR { u, v })
    }

    /// Tangent space at `b`, with the rank cut at `rank_tol * σ₁`.
    pub fn from_matrix(b: &DenseMatrix, rank_tol: f64) -> Result<Self> {
        let s = svd_raw(b.as_matrix(), rank_tol)?;
        if s.numerical_rank == 0 {
            return Err(Error::ZeroMatrix { what: "low-rank matrix" });
        }
        Ok(TangentSpaceLR { u: s.u, v: s.v })
    }

    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn v(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn rank(&self) -> usize {
        self.u.ncols()
    }

    /// Shape of the matrices living in this space.
    pub fn shape(&self) -> (usize, usize) {
        (self.u.nrows(), self.v.nrows())
    }

    /// `k (n₁ + n₂ - k)`.
    pub fn dimension(&self) -> usize {
        let (n1, n2) = self.shape();
        let k = self.rank();
        k * (n1 + n2 - k)
    }

    pub fn uv_t(&self) -> DMatrix<f64> {
        &self.u * self.v.transpose()
    }

    fn check_shape(&self, m: &DMatrix<f64>) -> Result<()> {
        if m.shape() != self.shape() {
            return Err(Error::ShapeMismatch {
                expected: self.shape(),
                found: m.shape(),
            });
        }
        Ok(())
    }

    /// `P_U M + M P_V - P_U M P_V`.
    pub(crate) fn project(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let utm = self.u.transpose() * m;
        let mv = m * &self.v;
        let mixed = mv - &self.u * (&utm * &self.v);
        &self.u * utm + mixed * self.v.transpose()
    }

    /// `(I - P_U) M (I - P_V)`.
    pub(crate) fn project_perp(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let r = m - &self.u * (self.u.transpose() * m);
        let rv = &r * &self.v;
        r - rv * self.v.transpose()
    }
}

pub(crate) fn project_omega_mask(m: &DMatrix<f64>, mask: &[bool]) -> DMatrix<f64> {
    let mut out = m.clone();
    for (x, &keep) in out.iter_mut().zip(mask) {
        if !keep {
            *x = 0.0;
        }
    }
    out
}

pub(crate) fn project_omega_complement_mask(m: &DMatrix<f64>, mask: &[bool]) -> DMatrix<f64> {
    let mut out = m.clone();
    for (x, &keep) in out.iter_mut().zip(mask) {
        if keep {
            *x = 0.0;
        }
    }
    out
}

fn check_pattern_shape(m: &DenseMatrix, omega: &SupportPattern) -> Result<()> {
    if m.shape() != omega.shape() {
        return Err(Error::ShapeMismatch {
            expected: omega.shape(),
            found: m.shape(),
        });
    }
    Ok(())
}

/// Keeps the entries of `m` on `omega` and zeroes the rest.
pub fn project_omega(m: &DenseMatrix, omega: &SupportPattern) -> Result<DenseMatrix> {
    check_pattern_shape(m, omega)?;
    Ok(DenseMatrix::from_trusted(project_omega_mask(m, &omega.mask())))
}

/// `M - P_Ω(M)`.
pub fn project_omega_complement(m: &DenseMatrix, omega: &SupportPattern) -> Result<DenseMatrix> {
    check_pattern_shape(m, omega)?;
    Ok(DenseMatrix::from_trusted(project_omega_complement_mask(m, &omega.mask())))
}

pub fn project_t(m: &DenseMatrix, t: &TangentSpaceLR) -> Result<DenseMatrix> {
    t.check_shape(m)?;
    Ok(DenseMatrix::from_trusted(t.project(m)))
}

pub fn project_t_perp(m: &DenseMatrix, t: &TangentSpaceLR) -> Result<DenseMatrix> {
    t.check_shape(m)?;
    Ok(DenseMatrix::from_trusted(t.project_perp(m)))
}

/// `μ(Ω)`: the spectral norm of the 0/1 indicator of the pattern.
///
/// By Perron-Frobenius the maximum of `‖N‖` over `N ∈ Ω` with `‖N‖∞ ≤ 1` is
/// attained by the nonnegative indicator itself.
pub fn mu_exact(omega: &SupportPattern) -> Result<f64> {
    if omega.is_empty() {
        return Err(Error::EmptySupport);
    }
    // With x = 1, (IᵀI x)_j = sum of the row degrees over column j. When that
    // is constant in j, x is a Perron vector of IᵀI and μ² is that integer,
    // so skip the SVD and its roundoff.
    let mut row_counts = vec![0u64; omega.rows()];
    for &(i, _) in omega.indices() {
        row_counts[i] += 1;
    }
    let mut col_sums = vec![0u64; omega.cols()];
    for &(i, j) in omega.indices() {
        col_sums[j] += row_counts[i];
    }
    if col_sums.windows(2).all(|w| w[0] == w[1]) {
        return Ok((col_sums[0] as f64).sqrt());
    }
    spectral_norm_raw(omega.indicator().as_matrix())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Degrees {
    /// Minimum count over rows and columns that hold at least one entry.
    pub min: usize,
    /// Maximum count over all rows and columns.
    pub max: usize,
    /// Some row or column of the pattern is empty.
    pub degenerate: bool,
}

pub fn degrees(omega: &SupportPattern) -> Result<Degrees> {
    if omega.is_empty() {
        return Err(Error::EmptySupport);
    }
    let mut row_counts = vec![0usize; omega.rows()];
    let mut col_counts = vec![0usize; omega.cols()];
    for &(i, j) in omega.indices() {
        row_counts[i] += 1;
        col_counts[j] += 1;
    }
    let all = row_counts.iter().chain(col_counts.iter());
    let max = all.clone().copied().max().unwrap_or(0);
    let min = all.clone().copied().filter(|&c| c > 0).min().unwrap_or(0);
    let degenerate = all.clone().any(|&c| c == 0);
    Ok(Degrees { min, max, degenerate })
}

/// `β(S) = maxᵢ ‖P_S eᵢ‖₂` for `S` spanned by the orthonormal columns of `basis`.
pub fn beta(basis: &DMatrix<f64>) -> Result<f64> {
    if basis.ncols() == 0 {
        return Err(Error::invalid("basis must have at least one column"));
    }
    let deviation = orthonormality_defect(basis);
    if deviation > BASIS_TOL {
        return Err(Error::NotOrthonormal { deviation });
    }
    Ok(max_row_norm(basis))
}

fn max_row_norm(basis: &DMatrix<f64>) -> f64 {
    // ‖UUᵀeᵢ‖₂ = ‖Uᵀeᵢ‖₂ is the norm of row i
    basis
        .row_iter()
        .map(|r| r.norm())
        .fold(0.0, f64::max)
}

pub fn inc(t: &TangentSpaceLR) -> f64 {
    max_row_norm(&t.u).max(max_row_norm(&t.v))
}

/// `(inc, 2·inc)`, the bracket on `ξ`.
pub fn xi_bounds(t: &TangentSpaceLR) -> (f64, f64) {
    let i = inc(t);
    (i, 2.0 * i)
}

fn most_aligned_row(basis: &DMatrix<f64>) -> (usize, f64) {
    basis
        .row_iter()
        .map(|r| r.norm())
        .enumerate()
        .fold((0, 0.0), |best, (i, n)| if n > best.1 { (i, n) } else { best })
}

fn xi_ratio(n: &DMatrix<f64>) -> Result<Option<f64>> {
    let spec = spectral_norm_raw(n)?;
    if spec <= 0.0 {
        return Ok(None);
    }
    Ok(Some(n.amax() / spec))
}

/// Sampled lower bound on `ξ = max{‖N‖∞ : N ∈ T, ‖N‖ ≤ 1}`.
///
/// Evaluates `‖N‖∞/‖N‖` on the two aligned witnesses
/// `N = (P_U e_{i*} / β(U)) e₁ᵀ` and its row-space analogue (each attains
/// `β`), then on `samples` Gaussian matrices projected onto `T`.
pub fn xi_sampled_lower(t: &TangentSpaceLR, samples: usize, seed: u64) -> Result<f64> {
    if samples == 0 {
        return Err(Error::invalid("samples must be >= 1"));
    }
    let (n1, n2) = t.shape();
    let mut best = 0.0f64;

    let (iu, bu) = most_aligned_row(&t.u);
    if bu > 0.0 {
        let x = &t.u * t.u.row(iu).transpose() / bu;
        let mut w = DMatrix::zeros(n1, n2);
        w.column_mut(0).copy_from(&x);
        if let Some(r) = xi_ratio(&w)? {
            best = best.max(r);
        }
    }
    let (iv, bv) = most_aligned_row(&t.v);
    if bv > 0.0 {
        let y = &t.v * t.v.row(iv).transpose() / bv;
        let mut w = DMatrix::zeros(n1, n2);
        w.row_mut(0).copy_from(&y.transpose());
        if let Some(r) = xi_ratio(&w)? {
            best = best.max(r);
        }
    }

    let mut rng = rng::stream(seed, Purpose::TangentSamples);
    for _ in 0..samples {
        let g = DMatrix::from_fn(n1, n2, |_, _| StandardNormal.sample(&mut rng));
        if let Some(r) = xi_ratio(&t.project(&g))? {
            best = best.max(r);
        }
    }
    Ok(best)
}

/// `σ = max{‖P_Ω(N)‖_F : N ∈ T, ‖N‖_F = 1}` by power iteration on
/// `N ↦ P_T(P_Ω(P_T(N)))`.
///
/// `Ω ∩ T = {0}` exactly when `σ < 1`.
pub fn transversality_sigma(omega: &SupportPattern, t: &TangentSpaceLR, iters: usize) -> Result<f64> {
    if iters == 0 {
        return Err(Error::invalid("iters must be >= 1"));
    }
    if omega.shape() != t.shape() {
        return Err(Error::ShapeMismatch {
            expected: t.shape(),
            found: omega.shape(),
        });
    }
    Ok(transversality_sigma_mask(&omega.mask(), t, iters))
}

pub(crate) fn transversality_sigma_mask(mask: &[bool], t: &TangentSpaceLR, iters: usize) -> f64 {
    let (n1, n2) = t.shape();
    let mut rng = rng::stream(POWER_SEED, Purpose::PowerIteration);
    let g = DMatrix::from_fn(n1, n2, |_, _| StandardNormal.sample(&mut rng));
    let mut n = t.project(&g);
    let norm = n.norm();
    if norm == 0.0 {
        return 0.0;
    }
    n /= norm;
    let mut lambda = 0.0;
    for _ in 0..iters {
        let next = t.project(&project_omega_mask(&n, mask));
        let rayleigh = n.dot(&next);
        let len = next.norm();
        if len == 0.0 {
            return 0.0;
        }
        n = next / len;
        let converged = (rayleigh - lambda).abs() <= POWER_TOL;
        lambda = rayleigh;
        if converged {
            break;
        }
    }
    lambda.clamp(0.0, 1.0).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ConditionVerdict {
    Satisfied,
    Violated,
}

impl ConditionVerdict {
    fn from_bool(ok: bool) -> Self {
        if ok {
            ConditionVerdict::Satisfied
        } else {
            ConditionVerdict::Violated
        }
    }

    pub fn is_satisfied(self) -> bool {
        self == ConditionVerdict::Satisfied
    }
}

/// Rank-sparsity incoherence summary for a (sparse, low-rank) pair.
///
/// `ξ` is never computed exactly; the conditions use `xi_upper` and are
/// therefore sufficient, not necessary.
#[derive(Debug, Clone, Serialize)]
pub struct IncoherenceReport {
    pub mu: f64,
    pub deg_min: usize,
    pub deg_max: usize,
    pub degenerate_support: bool,
    pub beta_row: f64,
    pub beta_col: f64,
    pub inc: f64,
    pub xi_lower: f64,
    pub xi_upper: f64,
    pub xi_sampled_lower: Option<f64>,
    pub uncertainty_product_upper: f64,
    pub theorem_condition: ConditionVerdict,
    pub corollary_condition: ConditionVerdict,
    pub gamma_range_thm: Option<GammaRange>,
    pub gamma_range_cor: Option<GammaRange>,
    pub gamma_recommended: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ReportOptions {
    pub zero_tol: f64,
    /// Relative rank threshold; `None` uses [`default_rank_tol`].
    pub rank_tol: Option<f64>,
    /// Draw this many tangent samples for `xi_sampled_lower`.
    pub xi_samples: Option<usize>,
    pub seed: u64,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            zero_tol: 0.0,
            rank_tol: None,
            xi_samples: None,
            seed: 0,
        }
    }
}

pub fn incoherence_report(
    sparse: &DenseMatrix,
    lowrank: &DenseMatrix,
    opts: &ReportOptions,
) -> Result<IncoherenceReport> {
    let omega = support_of(sparse, opts.zero_tol);
    if omega.is_empty() {
        return Err(Error::ZeroMatrix { what: "sparse matrix" });
    }
    let rank_tol = opts
        .rank_tol
        .unwrap_or_else(|| default_rank_tol(lowrank.rows(), lowrank.cols()));
    let t = TangentSpaceLR::from_matrix(lowrank, rank_tol)?;

    let mu = mu_exact(&omega)?;
    let deg = degrees(&omega)?;
    let beta_col = max_row_norm(&t.u);
    let beta_row = max_row_norm(&t.v);
    let (xi_lower, xi_upper) = xi_bounds(&t);
    let inc = xi_lower;
    let xi_sampled_lower = opts
        .xi_samples
        .map(|s| xi_sampled_lower(&t, s, opts.seed))
        .transpose()?;

    let thm = gamma_range_theorem(mu, xi_upper)?;
    let cor = gamma_range_corollary(deg.max, inc)?;
    let gamma_recommended = if cor.valid {
        Some(cor.recommended)
    } else if thm.valid {
        Some(thm.recommended)
    } else {
        None
    };

    Ok(IncoherenceReport {
        mu,
        deg_min: deg.min,
        deg_max: deg.max,
        degenerate_support: deg.degenerate,
        beta_row,
        beta_col,
        inc,
        xi_lower,
        xi_upper,
        xi_sampled_lower,
        uncertainty_product_upper: 2.0 * inc * mu,
        theorem_condition: ConditionVerdict::from_bool(mu * xi_upper < 1.0 / 6.0),
        corollary_condition: ConditionVerdict::from_bool((deg.max as f64) * inc < 1.0 / 12.0),
        gamma_range_thm: thm.valid.then_some(thm),
        gamma_range_cor: cor.valid.then_some(cor),
        gamma_recommended,
    })
}

/// `‖P_Ω(N)‖`.
#[cfg(test)]
fn spectral_of_omega_part(n: &DMatrix<f64>, mask: &[bool]) -> Result<f64> {
    spectral_norm_raw(&project_omega_mask(n, mask))
}
