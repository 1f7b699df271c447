//! Random instance generators and Monte-Carlo checks of their typical
//! incoherence.
//!
//! Sparse components follow the uniform-support model: a size-`m` support is
//! drawn uniformly among all size-`m` subsets of the `n×n` grid and filled
//! with iid standard normals. Low-rank components are `XYᵀ` for iid Gaussian
//! `n×k` factors, whose singular subspaces are uniformly distributed.
//!
//! All logarithms are natural.

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix::{default_rank_tol, DenseMatrix, SupportPattern};
use crate::rng::{derive_seed, stream, Purpose};
use crate::tangent::{self, TangentSpaceLR};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct EnsembleSpec {
    pub n: usize,
    /// Support size of the sparse component.
    pub m: usize,
    /// Rank of the low-rank component.
    pub k: usize,
    pub seed: u64,
}

impl EnsembleSpec {
    pub fn new(n: usize, m: usize, k: usize, seed: u64) -> Self {
        EnsembleSpec { n, m, k, seed }
    }

    fn check_m(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 || self.m > self.n * self.n {
            return Err(Error::invalid(format!(
                "support size m = {} must lie in 1..={} for n = {}",
                self.m,
                self.n * self.n,
                self.n
            )));
        }
        Ok(())
    }

    fn check_k(&self) -> Result<()> {
        if self.n == 0 || self.k == 0 || self.k > self.n {
            return Err(Error::invalid(format!(
                "rank k = {} must lie in 1..={}",
                self.k, self.n
            )));
        }
        Ok(())
    }
}

/// Uniformly random size-`m` support of the `n×n` grid.
pub fn random_support(spec: &EnsembleSpec) -> Result<SupportPattern> {
    spec.check_m()?;
    let n = spec.n;
    let mut rng = stream(spec.seed, Purpose::SparseSupport);
    let indices = sample(&mut rng, n * n, spec.m)
        .into_iter()
        .map(|flat| (flat / n, flat % n))
        .collect();
    SupportPattern::new(n, n, indices)
}

/// Gaussian values on a uniformly random size-`m` support.
pub fn random_sparse(spec: &EnsembleSpec) -> Result<DenseMatrix> {
    let omega = random_support(spec)?;
    let mut rng = stream(spec.seed, Purpose::SparseValues);
    let mut a = DMatrix::zeros(spec.n, spec.n);
    for &(i, j) in omega.indices() {
        // a standard normal is nonzero with probability one; redraw the null event anyway
        let mut x: f64 = 0.0;
        while x == 0.0 {
            x = StandardNormal.sample(&mut rng);
        }
        a[(i, j)] = x;
    }
    Ok(DenseMatrix::from_trusted(a))
}

/// Returns the factors `(X, Y)` behind [`random_lowrank`].
pub fn random_lowrank_factors(spec: &EnsembleSpec) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    spec.check_k()?;
    let mut rng = stream(spec.seed, Purpose::LowRankFactors);
    let (n, k) = (spec.n, spec.k);
    let x = DMatrix::from_fn(n, k, |_, _| StandardNormal.sample(&mut rng));
    let y = DMatrix::from_fn(n, k, |_, _| StandardNormal.sample(&mut rng));
    Ok((x, y))
}

/// `XYᵀ` with iid standard normal `n×k` factors.
pub fn random_lowrank(spec: &EnsembleSpec) -> Result<DenseMatrix> {
    let (x, y) = random_lowrank_factors(spec)?;
    Ok(DenseMatrix::from_trusted(x * y.transpose()))
}

/// `(random_sparse, random_lowrank)` for one spec.
pub fn random_pair(spec: &EnsembleSpec) -> Result<(DenseMatrix, DenseMatrix)> {
    Ok((random_sparse(spec)?, random_lowrank(spec)?))
}

/// A sparse matrix with at most one entry per row and column.
///
/// `m` rows are matched to `m` distinct columns by a random injection, and the
/// entries are standard normal, so `deg_max = 1`.
pub fn random_matching_sparse(spec: &EnsembleSpec) -> Result<DenseMatrix> {
    if spec.n == 0 || spec.m == 0 || spec.m > spec.n {
        return Err(Error::invalid(format!(
            "a matching support needs 1 <= m <= n, got m = {}, n = {}",
            spec.m, spec.n
        )));
    }
    let n = spec.n;
    let mut rng = stream(spec.seed, Purpose::SparseSupport);
    let rows = sample(&mut rng, n, spec.m);
    let cols = sample(&mut rng, n, spec.m);
    let mut vals = stream(spec.seed, Purpose::SparseValues);
    let mut a = DMatrix::zeros(n, n);
    for (i, j) in rows.into_iter().zip(cols) {
        let mut x: f64 = 0.0;
        while x == 0.0 {
            x = StandardNormal.sample(&mut vals);
        }
        a[(i, j)] = x;
    }
    Ok(DenseMatrix::from_trusted(a))
}

/// `s·uvᵀ` with `u, v` random sign vectors scaled by `1/√n` and `s ∈ [1, 2)`.
///
/// Every row of both singular vectors has norm exactly `1/√n`, so the
/// incoherence is the smallest possible for rank one.
pub fn random_flat_rank_one(n: usize, seed: u64) -> Result<DenseMatrix> {
    if n == 0 {
        return Err(Error::invalid("n must be positive"));
    }
    let mut rng = stream(seed, Purpose::LowRankFactors);
    let scale = 1.0 / (n as f64).sqrt();
    let mut sign = |_, _| if rng.random::<bool>() { scale } else { -scale };
    let u = DMatrix::from_fn(n, 1, &mut sign);
    let v = DMatrix::from_fn(n, 1, &mut sign);
    let s: f64 = 1.0 + rng.random::<f64>();
    Ok(DenseMatrix::from_trusted(u * v.transpose() * s))
}

/// Outcome of a Monte-Carlo bound check.
#[derive(Debug, Clone, Serialize)]
pub struct LemmaReport {
    pub trials: usize,
    pub satisfied: usize,
    pub fraction: f64,
    pub bound_formula: String,
    pub constant: f64,
    /// The bound's numeric value for the checked parameters.
    pub bound: f64,
}

fn finish_report(hits: Vec<bool>, bound_formula: String, constant: f64, bound: f64) -> LemmaReport {
    let trials = hits.len();
    let satisfied = hits.iter().filter(|&&h| h).count();
    LemmaReport {
        trials,
        satisfied,
        fraction: if trials == 0 { 0.0 } else { satisfied as f64 / trials as f64 },
        bound_formula,
        constant,
        bound,
    }
}

/// Fraction of uniform size-`m` supports with `deg_max ≤ (m/n)·ln n`.
pub fn check_degree_lemma(n: usize, m: usize, trials: usize, seed: u64) -> Result<LemmaReport> {
    EnsembleSpec::new(n, m, 1, seed).check_m()?;
    if n < 2 {
        return Err(Error::invalid("n must be >= 2"));
    }
    let bound = m as f64 / n as f64 * (n as f64).ln();
    let hits = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let spec = EnsembleSpec::new(n, m, 1, derive_seed(seed, &[trial as u64]));
            let omega = random_support(&spec)?;
            Ok(tangent::degrees(&omega)?.max as f64 <= bound)
        })
        .collect::<Result<Vec<bool>>>()?;
    Ok(finish_report(hits, "deg_max <= (m/n)*ln(n)".into(), 1.0, bound))
}

/// Fraction of `XYᵀ` draws with `inc ≤ constant·√(max(k, ln n)/n)`.
pub fn check_incoherence_lemma(
    n: usize,
    k: usize,
    trials: usize,
    constant: f64,
    seed: u64,
) -> Result<LemmaReport> {
    EnsembleSpec::new(n, 1, k, seed).check_k()?;
    if !(constant > 0.0) {
        return Err(Error::invalid("constant must be positive"));
    }
    let nf = n as f64;
    let bound = constant * ((k as f64).max(nf.ln()) / nf).sqrt();
    let hits = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let spec = EnsembleSpec::new(n, 1, k, derive_seed(seed, &[trial as u64]));
            let b = random_lowrank(&spec)?;
            let t = TangentSpaceLR::from_matrix(&b, default_rank_tol(n, n))?;
            Ok(tangent::inc(&t) <= bound)
        })
        .collect::<Result<Vec<bool>>>()?;
    Ok(finish_report(
        hits,
        "inc <= constant*sqrt(max(k, ln(n))/n)".into(),
        constant,
        bound,
    ))
}

pub const DEFAULT_INCOHERENCE_CONSTANT: f64 = 3.0;

/// `n^1.5 / (ln n · √max(k, ln n))`, the support budget below which random
/// pairs are typically recoverable (absolute constant set to 1).
pub fn corollary_regime(n: usize, k: usize) -> Result<f64> {
    if n < 2 || k == 0 {
        return Err(Error::invalid("need n >= 2 and k >= 1"));
    }
    let nf = n as f64;
    let ln = nf.ln();
    Ok(nf.powf(1.5) / (ln * (k as f64).max(ln).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{numerical_rank, support_of};

    #[test]
    fn sparse_support_size_and_determinism() {
        for seed in 0..20 {
            let spec = EnsembleSpec::new(12, 30, 2, seed);
            let a = random_sparse(&spec).unwrap();
            assert_eq!(support_of(&a, 0.0).len(), 30);
            assert_eq!(a, random_sparse(&spec).unwrap());
        }
        let full = random_sparse(&EnsembleSpec::new(5, 25, 1, 3)).unwrap();
        assert_eq!(support_of(&full, 0.0).len(), 25);
        assert!(random_sparse(&EnsembleSpec::new(5, 26, 1, 3)).is_err());
        assert!(random_sparse(&EnsembleSpec::new(5, 0, 1, 3)).is_err());
    }

    /// Every cell of a 4×4 grid is covered by a size-3 support with
    /// probability 3/16; the counts over 10⁵ draws must pass a chi-square test.
    #[test]
    fn support_locations_are_uniform() {
        let draws = 100_000u64;
        let mut counts = [0u64; 16];
        for seed in 0..draws {
            let omega = random_support(&EnsembleSpec::new(4, 3, 1, seed)).unwrap();
            for &(i, j) in omega.indices() {
                counts[i * 4 + j] += 1;
            }
        }
        let p = 3.0 / 16.0;
        let expected = draws as f64 * p;
        let sd = (draws as f64 * p * (1.0 - p)).sqrt();
        for &c in &counts {
            assert!((c as f64 - expected).abs() < 3.0 * sd, "{counts:?}");
        }
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 15 degrees of freedom, 0.999 quantile
        assert!(chi2 < 37.7, "chi2 = {chi2}");
    }

    #[test]
    fn lowrank_rank_and_column_space() {
        for seed in 0..50 {
            let spec = EnsembleSpec::new(15, 1, 3, seed);
            let b = random_lowrank(&spec).unwrap();
            assert_eq!(numerical_rank(&b, default_rank_tol(15, 15)).unwrap(), 3);
            // principal angles between col(B) and span(X) are zero:
            // the residual of X after projecting onto col(B) vanishes
            let (x, _) = random_lowrank_factors(&spec).unwrap();
            let t = TangentSpaceLR::from_matrix(&b, 1e-10).unwrap();
            let u = t.u();
            let resid = &x - u * (u.transpose() * &x);
            assert!(resid.norm() < 1e-8 * x.norm());
        }
        let full = random_lowrank(&EnsembleSpec::new(6, 1, 6, 1)).unwrap();
        assert_eq!(numerical_rank(&full, default_rank_tol(6, 6)).unwrap(), 6);
        assert!(random_lowrank(&EnsembleSpec::new(6, 1, 7, 1)).is_err());
    }

    #[test]
    fn matching_sparse_has_unit_degree() {
        let a = random_matching_sparse(&EnsembleSpec::new(20, 20, 1, 4)).unwrap();
        let d = tangent::degrees(&support_of(&a, 0.0)).unwrap();
        assert_eq!((d.min, d.max), (1, 1));
        assert!(random_matching_sparse(&EnsembleSpec::new(5, 6, 1, 4)).is_err());
    }

    #[test]
    fn flat_rank_one_has_minimal_incoherence() {
        let b = random_flat_rank_one(49, 2).unwrap();
        let t = TangentSpaceLR::from_matrix(&b, 1e-10).unwrap();
        assert_eq!(t.rank(), 1);
        assert!((tangent::inc(&t) - 1.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn degree_lemma_at_saturation() {
        let r = check_degree_lemma(25, 625, 5, 1).unwrap();
        assert_eq!(r.fraction, 1.0);
        assert!((r.bound - 25.0 * 25f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn incoherence_lemma_full_rank_and_floor() {
        let r = check_incoherence_lemma(8, 8, 5, 3.0, 2).unwrap();
        assert_eq!(r.fraction, 1.0);
        // inc >= √(k/n) for every subspace
        for seed in 0..20 {
            let b = random_lowrank(&EnsembleSpec::new(30, 1, 4, seed)).unwrap();
            let t = TangentSpaceLR::from_matrix(&b, 1e-10).unwrap();
            assert!(tangent::inc(&t) >= (4.0f64 / 30.0).sqrt() - 1e-12);
        }
    }

    #[test]
    fn regime_formula() {
        let ln = 25f64.ln();
        let v = corollary_regime(25, 2).unwrap();
        assert!((v - 125.0 / (ln * ln.sqrt())).abs() < 1e-12);
        assert!((v - 21.64).abs() < 0.01);
        // k above ln n: the max resolves to k
        let w = corollary_regime(25, 9).unwrap();
        assert!((w - 125.0 / (ln * 3.0)).abs() < 1e-12);
        let mut prev = f64::INFINITY;
        for k in 1..=25 {
            let x = corollary_regime(25, k).unwrap();
            assert!(x <= prev);
            prev = x;
        }
    }
}
