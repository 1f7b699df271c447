//! Alternating-direction solver for `min γ‖A‖₁ + ‖B‖∗  s.t.  A + B = C`.
//!
//! Each iteration applies the two proximal maps in turn and then takes a
//! dual ascent step on the multiplier `Λ`:
//!
//! ```text
//! A ← soft_threshold(C - B + Λ/ρ, γ/ρ)
//! B ← sv_threshold(C - A + Λ/ρ, 1/ρ)
//! Λ ← Λ + ρ (C - A - B)
//! ```
//!
//! With `adaptive_rho` the penalty is doubled or halved whenever the primal
//! and dual residuals drift more than a factor 10 apart. The check runs every
//! [`RHO_UPDATE_INTERVAL`] iterations; rebalancing on every step makes the
//! penalty oscillate and stalls convergence near changes of the active set.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::certificate::{build_certificate, CertificateOptions};
use crate::error::{Error, Result};
use crate::matrix::{full_svd_sorted, l1_norm, nuclear_norm, sign_pattern, spectral_norm_raw, DenseMatrix};
use crate::tangent::TangentSpaceLR;

pub const RHO_UPDATE_INTERVAL: usize = 10;

#[derive(Debug, Clone, Serialize)]
pub struct SolverConfig {
    pub gamma: f64,
    /// Initial penalty; `None` picks `0.25·n₁n₂/‖C‖₁`.
    pub rho_init: Option<f64>,
    pub tol_primal: f64,
    pub tol_change: f64,
    pub max_iters: usize,
    pub adaptive_rho: bool,
}

impl SolverConfig {
    pub fn new(gamma: f64) -> Self {
        SolverConfig {
            gamma,
            rho_init: None,
            tol_primal: 1e-7,
            tol_change: 1e-9,
            max_iters: 50_000,
            adaptive_rho: true,
        }
    }

    pub fn with_gamma(&self, gamma: f64) -> Self {
        SolverConfig { gamma, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::invalid(format!("gamma must be positive, got {}", self.gamma)));
        }
        if let Some(rho) = self.rho_init {
            if !(rho > 0.0) || !rho.is_finite() {
                return Err(Error::invalid("rho_init must be positive"));
            }
        }
        if !(self.tol_primal > 0.0) || !(self.tol_change > 0.0) {
            return Err(Error::invalid("tolerances must be positive"));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be >= 1"));
        }
        Ok(())
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig::new(1.0)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DecompositionResult {
    pub a_hat: DenseMatrix,
    pub b_hat: DenseMatrix,
    pub iterations: usize,
    /// `‖C - Â - B̂‖_F / max(1, ‖C‖_F)`
    pub primal_residual: f64,
    /// `γ‖Â‖₁ + ‖B̂‖∗`
    pub objective: f64,
    pub converged: bool,
    pub gamma_used: f64,
    /// Set when the problem was posed through [`decompose_t`].
    pub t: Option<f64>,
}

/// Iterate state that can seed a later solve on a nearby problem.
#[derive(Debug, Clone)]
pub struct SolverState {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    dual: DMatrix<f64>,
    rho: f64,
}

/// Entrywise `sign(x)·max(|x| - τ, 0)`; `|x| = τ` maps to 0.
pub fn soft_threshold(m: &DenseMatrix, tau: f64) -> Result<DenseMatrix> {
    if !(tau >= 0.0) {
        return Err(Error::invalid("tau must be nonnegative"));
    }
    Ok(DenseMatrix::from_trusted(soft_threshold_raw(m, tau)))
}

fn soft_threshold_raw(m: &DMatrix<f64>, tau: f64) -> DMatrix<f64> {
    m.map(|x| {
        if x.abs() <= tau {
            0.0
        } else {
            x - tau * x.signum()
        }
    })
}

/// `U·diag(max(σ - τ, 0))·Vᵀ`.
pub fn sv_threshold(m: &DenseMatrix, tau: f64) -> Result<DenseMatrix> {
    if !(tau >= 0.0) {
        return Err(Error::invalid("tau must be nonnegative"));
    }
    Ok(DenseMatrix::from_trusted(sv_threshold_raw(m, tau)?))
}

fn sv_threshold_raw(m: &DMatrix<f64>, tau: f64) -> Result<DMatrix<f64>> {
    let (u, sigma, v) = full_svd_sorted(m)?;
    let keep = sigma.iter().take_while(|&&s| s > tau).count();
    let mut us = u.columns(0, keep).into_owned();
    for (j, s) in sigma[..keep].iter().enumerate() {
        us.column_mut(j).scale_mut(s - tau);
    }
    Ok(us * v.columns(0, keep).transpose())
}

pub fn decompose(c: &DenseMatrix, config: &SolverConfig) -> Result<DecompositionResult> {
    decompose_warm(c, config, None).map(|(r, _)| r)
}

/// Solves with `γ = t/(1-t)`, the reparametrisation `t‖A‖₁ + (1-t)‖B‖∗`.
pub fn decompose_t(c: &DenseMatrix, t: f64, config: &SolverConfig) -> Result<DecompositionResult> {
    decompose_t_warm(c, t, config, None).map(|(r, _)| r)
}

pub fn t_to_gamma(t: f64) -> Result<f64> {
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::invalid(format!("t must lie in (0, 1), got {t}")));
    }
    Ok(t / (1.0 - t))
}

pub fn gamma_to_t(gamma: f64) -> f64 {
    gamma / (1.0 + gamma)
}

pub fn decompose_t_warm(
    c: &DenseMatrix,
    t: f64,
    config: &SolverConfig,
    warm: Option<&SolverState>,
) -> Result<(DecompositionResult, SolverState)> {
    let gamma = t_to_gamma(t)?;
    let (mut res, state) = decompose_warm(c, &config.with_gamma(gamma), warm)?;
    res.t = Some(t);
    Ok((res, state))
}

/// Like [`decompose`], optionally starting from the state of a previous solve.
pub fn decompose_warm(
    c: &DenseMatrix,
    config: &SolverConfig,
    warm: Option<&SolverState>,
) -> Result<(DecompositionResult, SolverState)> {
    config.validate()?;
    let (rows, cols) = c.shape();
    let gamma = config.gamma;
    let c_l1 = l1_norm(c);
    if c_l1 == 0.0 {
        let zero = DMatrix::zeros(rows, cols);
        let state = SolverState {
            a: zero.clone(),
            b: zero.clone(),
            dual: zero,
            rho: config.rho_init.unwrap_or(1.0),
        };
        let res = DecompositionResult {
            a_hat: DenseMatrix::zeros(rows, cols),
            b_hat: DenseMatrix::zeros(rows, cols),
            iterations: 0,
            primal_residual: 0.0,
            objective: 0.0,
            converged: true,
            gamma_used: gamma,
            t: None,
        };
        return Ok((res, state));
    }

    let cm = c.as_matrix();
    let scale = c.frobenius_norm().max(1.0);
    let (mut a, mut b, mut dual, mut rho) = match warm {
        Some(s) if s.a.shape() == (rows, cols) => (s.a.clone(), s.b.clone(), s.dual.clone(), s.rho),
        _ => (
            DMatrix::zeros(rows, cols),
            DMatrix::zeros(rows, cols),
            DMatrix::zeros(rows, cols),
            config.rho_init.unwrap_or(0.25 * (rows * cols) as f64 / c_l1),
        ),
    };

    let mut converged = false;
    let mut iterations = 0;
    let mut primal = f64::INFINITY;
    while iterations < config.max_iters {
        iterations += 1;
        let scaled_dual = &dual / rho;
        let a_next = soft_threshold_raw(&(cm - &b + &scaled_dual), gamma / rho);
        let b_next = sv_threshold_raw(&(cm - &a_next + &scaled_dual), 1.0 / rho)?;
        let residual = cm - &a_next - &b_next;
        let r_norm = residual.norm();
        let db = (&b_next - &b).norm();
        let change = ((&a_next - &a).norm() + db) / scale;
        dual += &residual * rho;
        a = a_next;
        b = b_next;
        primal = r_norm / scale;
        if !primal.is_finite() || !change.is_finite() {
            return Err(Error::Diverged { iteration: iterations });
        }
        if primal <= config.tol_primal && change <= config.tol_change {
            converged = true;
            break;
        }
        if config.adaptive_rho && iterations % RHO_UPDATE_INTERVAL == 0 {
            let s_norm = rho * db;
            if r_norm > 10.0 * s_norm {
                rho *= 2.0;
            } else if s_norm > 10.0 * r_norm {
                rho /= 2.0;
            }
        }
    }

    let a_hat = DenseMatrix::new(a.clone()).map_err(|_| Error::Diverged { iteration: iterations })?;
    let b_hat = DenseMatrix::new(b.clone()).map_err(|_| Error::Diverged { iteration: iterations })?;
    let objective = gamma * l1_norm(&a_hat) + nuclear_norm(&b_hat)?;
    let res = DecompositionResult {
        a_hat,
        b_hat,
        iterations,
        primal_residual: primal,
        objective,
        converged,
        gamma_used: gamma,
        t: None,
    };
    Ok((res, SolverState { a, b, dual, rho }))
}

/// Relative rank cut applied to solver output when rebuilding `T(B̂)`.
pub const OUTPUT_RANK_TOL: f64 = 1e-9;

/// A-posteriori subgradient residuals for a candidate pair.
///
/// All residuals are zero for an optimal pair whose dual is the canonical
/// `Q̂ ∈ Ω ⊕ T`. When either component is zero the corresponding equality
/// conditions are skipped and the other side's subgradient stands in for `Q`.
#[derive(Debug, Clone, Serialize)]
pub struct OptimalityReport {
    /// `‖P_T(Q) - UVᵀ‖∞`
    pub r_tangent: f64,
    /// `‖P_Ω(Q) - γ·sign(A)‖∞`
    pub r_sign: f64,
    /// `max(0, ‖P_{Ωᶜ}(Q)‖∞ - γ)`
    pub r_off_support: f64,
    /// `max(0, ‖P_{T⊥}(Q)‖ - 1)`
    pub r_spectral: f64,
    pub sparse_skipped: bool,
    pub lowrank_skipped: bool,
    pub fixed_point_converged: bool,
}

impl OptimalityReport {
    pub fn max_residual(&self) -> f64 {
        self.r_tangent
            .max(self.r_sign)
            .max(self.r_off_support)
            .max(self.r_spectral)
    }
}

pub fn check_optimality(
    a: &DenseMatrix,
    b: &DenseMatrix,
    gamma: f64,
    zero_tol: f64,
) -> Result<OptimalityReport> {
    if !(gamma > 0.0) {
        return Err(Error::invalid("gamma must be positive"));
    }
    a.check_same_shape(b)?;
    let a_zero = a.iter().all(|x| x.abs() <= zero_tol);
    let b_zero = b.iter().all(|x| *x == 0.0);
    let mut report = OptimalityReport {
        r_tangent: 0.0,
        r_sign: 0.0,
        r_off_support: 0.0,
        r_spectral: 0.0,
        sparse_skipped: a_zero,
        lowrank_skipped: b_zero,
        fixed_point_converged: true,
    };
    match (a_zero, b_zero) {
        (true, true) => {}
        (true, false) => {
            let t = TangentSpaceLR::from_matrix(b, OUTPUT_RANK_TOL)?;
            report.r_off_support = (t.uv_t().amax() - gamma).max(0.0);
        }
        (false, true) => {
            let q = sign_pattern(a, zero_tol).into_matrix() * gamma;
            report.r_spectral = (spectral_norm_raw(&q)? - 1.0).max(0.0);
        }
        (false, false) => {
            let opts = CertificateOptions {
                zero_tol,
                rank_tol: Some(OUTPUT_RANK_TOL),
                ..Default::default()
            };
            let cert = build_certificate(a, b, gamma, &opts)?;
            let t = TangentSpaceLR::from_matrix(b, OUTPUT_RANK_TOL)?;
            let q = cert.q_hat.as_matrix();
            let sign = sign_pattern(a, zero_tol).into_matrix() * gamma;
            let omega: Vec<bool> = a.iter().map(|x| x.abs() > zero_tol).collect();
            let mut on = q.clone();
            let mut off = q.clone();
            for ((x, y), &inside) in on.iter_mut().zip(off.iter_mut()).zip(&omega) {
                if inside {
                    *y = 0.0;
                } else {
                    *x = 0.0;
                }
            }
            report.r_tangent = (t.project(q) - t.uv_t()).amax();
            report.r_sign = (on - sign).amax();
            report.r_off_support = (off.amax() - gamma).max(0.0);
            report.r_spectral = (cert.cond_tperp_norm - 1.0).max(0.0);
            report.fixed_point_converged = cert.fixed_point_converged;
            if !cert.fixed_point_converged {
                // the equality residuals of a diverged iterate are not meaningful
                report.r_tangent = report.r_tangent.max(cert.cond_pt_equals_uv);
                report.r_sign = report.r_sign.max(cert.cond_pomega_equals_sign);
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::hadamard;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DenseMatrix::new(DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))).unwrap()
    }

    #[test]
    fn soft_threshold_scalars() {
        let m = DenseMatrix::from_rows(&[&[3.0, -0.5, 1.0, -4.0]]).unwrap();
        let s = soft_threshold(&m, 1.0).unwrap();
        assert_eq!(s.to_row_major(), vec![2.0, 0.0, 0.0, -3.0]);
        assert!(soft_threshold(&m, -1.0).is_err());
    }

    /// Scalar KKT: `0 ∈ x - m + τ ∂|x|`.
    #[test]
    fn soft_threshold_kkt() {
        let m = gaussian(6, 5, 1);
        let tau = 0.7;
        let x = soft_threshold(&m, tau).unwrap();
        for (xi, mi) in x.iter().zip(m.iter()) {
            let g = mi - xi;
            if *xi == 0.0 {
                assert!(g.abs() <= tau + 1e-12);
            } else {
                assert!((g - tau * xi.signum()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sv_threshold_cases() {
        let d = DenseMatrix::from_diagonal(&[3.0, 1.0]).unwrap();
        let s = sv_threshold(&d, 2.0).unwrap();
        assert!((s.as_matrix() - DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0])).amax() < 1e-12);
        let m = gaussian(5, 4, 2);
        assert!((sv_threshold(&m, 0.0).unwrap().as_matrix() - m.as_matrix()).amax() < 1e-10);
    }

    /// `(M - B)/τ ∈ ∂‖B‖∗`: equals `UVᵀ` on `T(B)` and has spectral norm ≤ 1 off it.
    #[test]
    fn sv_threshold_subgradient() {
        let m = gaussian(6, 6, 3);
        let tau = 1.1;
        let b = sv_threshold(&m, tau).unwrap();
        let g = (m.as_matrix() - b.as_matrix()) / tau;
        let t = TangentSpaceLR::from_matrix(&b, 1e-10).unwrap();
        assert!((t.project(&g) - t.uv_t()).amax() < 1e-8);
        assert!(spectral_norm_raw(&t.project_perp(&g)).unwrap() <= 1.0 + 1e-8);
    }

    proptest! {
        #[test]
        fn prox_maps_are_nonexpansive(seed in 0u64..1000, tau in 0.0f64..2.0) {
            let x = gaussian(5, 4, seed);
            let y = gaussian(5, 4, seed + 7919);
            let d = (x.as_matrix() - y.as_matrix()).norm();
            let s = (soft_threshold(&x, tau).unwrap().into_matrix()
                - soft_threshold(&y, tau).unwrap().into_matrix()).norm();
            let v = (sv_threshold(&x, tau).unwrap().into_matrix()
                - sv_threshold(&y, tau).unwrap().into_matrix()).norm();
            prop_assert!(s <= d + 1e-12);
            prop_assert!(v <= d + 1e-10);
        }
    }

    #[test]
    fn zero_input_is_fixed_point() {
        let r = decompose(&DenseMatrix::zeros(4, 4), &SolverConfig::new(0.3)).unwrap();
        assert!(r.converged);
        assert_eq!(r.objective, 0.0);
        assert_eq!(r.a_hat, DenseMatrix::zeros(4, 4));
    }

    #[test]
    fn large_gamma_sends_everything_to_lowrank() {
        let c = gaussian(8, 8, 4);
        let r = decompose(&c, &SolverConfig::new(2.0)).unwrap();
        assert!(r.converged);
        assert!(l1_norm(&r.a_hat) < 1e-6 * l1_norm(&c));
        assert!((r.b_hat.as_matrix() - c.as_matrix()).norm() < 1e-5 * c.frobenius_norm());
    }

    #[test]
    fn small_t_sends_everything_to_sparse() {
        let c = gaussian(8, 8, 5);
        let r = decompose_t(&c, 0.02, &SolverConfig::default()).unwrap();
        assert!(r.converged);
        assert_eq!(r.t, Some(0.02));
        assert!(r.b_hat.frobenius_norm() < 1e-6 * c.frobenius_norm());
    }

    #[test]
    fn t_gamma_mapping() {
        assert_eq!(t_to_gamma(0.5).unwrap(), 1.0);
        for t in [0.01, 0.2, 0.77, 0.99] {
            assert!((gamma_to_t(t_to_gamma(t).unwrap()) - t).abs() < 1e-12);
        }
        assert!(t_to_gamma(0.0).is_err());
        assert!(t_to_gamma(1.0).is_err());
        assert!(decompose_t(&DenseMatrix::identity(2), 1.5, &SolverConfig::default()).is_err());
    }

    #[test]
    fn invalid_config_rejected() {
        let c = DenseMatrix::identity(3);
        assert!(decompose(&c, &SolverConfig::new(0.0)).is_err());
        let mut cfg = SolverConfig::new(1.0);
        cfg.max_iters = 0;
        assert!(decompose(&c, &cfg).is_err());
    }

    #[test]
    fn feasible_at_convergence_and_transpose_invariant() {
        let mut a = DMatrix::zeros(10, 10);
        a[(1, 2)] = 3.0;
        a[(7, 4)] = -2.0;
        a[(5, 9)] = 1.5;
        let x = gaussian(10, 1, 6);
        let y = gaussian(10, 1, 7);
        let c = DenseMatrix::new(a + x.as_matrix() * y.transpose()).unwrap();
        let cfg = SolverConfig::new(0.35);
        let r = decompose(&c, &cfg).unwrap();
        assert!(r.converged);
        let resid = (c.as_matrix() - r.a_hat.as_matrix() - r.b_hat.as_matrix()).norm();
        assert!(resid <= cfg.tol_primal * c.frobenius_norm().max(1.0));
        let rt = decompose(&c.transposed(), &cfg).unwrap();
        let tol = 2.0 * 1e-5 * c.frobenius_norm();
        assert!((rt.a_hat.as_matrix() - r.a_hat.transpose()).norm() < tol);
        assert!((rt.b_hat.as_matrix() - r.b_hat.transpose()).norm() < tol);
    }

    #[test]
    fn optimality_rejects_bad_inputs() {
        assert!(check_optimality(&DenseMatrix::identity(2), &DenseMatrix::identity(3), 1.0, 0.0).is_err());
        assert!(check_optimality(&DenseMatrix::identity(2), &DenseMatrix::identity(2), 0.0, 0.0).is_err());
    }

    #[test]
    fn optimality_of_hand_built_pair() {
        // A = 3·e₀e₁ᵀ, B = 11ᵀ: optimal for γ ∈ [1/2, 1] with Q = [[1-γ, γ], [γ, 1-γ]]
        let a = DenseMatrix::from_rows(&[&[0.0, 3.0], &[0.0, 0.0]]).unwrap();
        let b = DenseMatrix::from_rows(&[&[1.0, 1.0], &[1.0, 1.0]]).unwrap();
        let r = check_optimality(&a, &b, 0.75, 0.0).unwrap();
        assert!(r.max_residual() <= 1e-6, "{r:?}");
        // γ = 0.3 < 1/2 puts the off-support entry 1-γ above γ
        let r = check_optimality(&a, &b, 0.3, 0.0).unwrap();
        assert!(r.r_off_support > 0.01);
    }

    #[test]
    fn optimality_of_recovered_pair_and_perturbation() {
        // incoherent enough for the certificate: two entries against a flat rank-one
        let h = hadamard(64);
        let b = h.columns(1, 1) * h.columns(2, 1).transpose() * 5.0;
        let mut a = DMatrix::zeros(64, 64);
        a[(3, 7)] = 1.5;
        a[(10, 2)] = -0.7;
        let c = DenseMatrix::new(&a + &b).unwrap();
        let gamma = 0.3;
        let r = decompose(&c, &SolverConfig::new(gamma)).unwrap();
        assert!(r.converged);
        let opt = check_optimality(&r.a_hat, &r.b_hat, gamma, 1e-8).unwrap();
        assert!(opt.max_residual() < 1e-6, "{opt:?}");
        // shift a dense perturbation from the low-rank part into the sparse part
        let noise = gaussian(64, 64, 10).into_matrix() * 0.3;
        let bad_a = DenseMatrix::new(r.a_hat.as_matrix() + &noise).unwrap();
        let bad_b = DenseMatrix::new(r.b_hat.as_matrix() - &noise).unwrap();
        let opt = check_optimality(&bad_a, &bad_b, gamma, 1e-8).unwrap();
        assert!(opt.max_residual() > 0.01, "{opt:?}");
    }

    #[test]
    fn optimality_of_zero_pair_is_vacuous() {
        let z = DenseMatrix::zeros(3, 3);
        let r = check_optimality(&z, &z, 1.0, 0.0).unwrap();
        assert!(r.sparse_skipped && r.lowrank_skipped);
        assert_eq!(r.max_residual(), 0.0);
        // pure low-rank with γ above ‖UVᵀ‖∞ is optimal
        let ones: &[f64] = &[1.0, 1.0, 1.0];
        let b = DenseMatrix::from_rows(&[ones, ones, ones]).unwrap();
        assert_eq!(check_optimality(&z, &b, 0.5, 0.0).unwrap().max_residual(), 0.0);
    }
}
