//! Dual certificates for exact recovery and the admissible `γ` ranges.
//!
//! `(A, B)` is the unique minimiser of `γ‖A‖₁ + ‖B‖∗` subject to
//! `A + B = C` when `Ω(A) ∩ T(B) = {0}` and some `Q` satisfies
//!
//! * `P_T(Q) = UVᵀ`
//! * `P_Ω(Q) = γ·sign(A)`
//! * `‖P_{T⊥}(Q)‖ < 1`
//! * `‖P_{Ωᶜ}(Q)‖∞ < γ`
//!
//! [`build_certificate`] looks for `Q̂` inside `Ω ⊕ T` by alternating the two
//! equality constraints, then checks the two strict inequalities.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix::{default_rank_tol, sign_pattern, spectral_norm_raw, support_of, DenseMatrix};
use crate::tangent::{
    self, degrees, inc, mu_exact, project_omega_complement_mask, project_omega_mask,
    transversality_sigma_mask, ConditionVerdict, TangentSpaceLR, TRANSVERSAL_MARGIN,
};

/// Open interval of trade-off parameters with exact-recovery guarantees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GammaRange {
    pub lower: f64,
    pub upper: f64,
    /// Geometric-mean choice that always lies inside a valid range.
    pub recommended: f64,
    pub valid: bool,
}

impl GammaRange {
    pub fn contains(&self, gamma: f64) -> bool {
        self.valid && self.lower < gamma && gamma < self.upper
    }
}

fn check_positive(name: &str, x: f64) -> Result<()> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::invalid(format!("{name} must be positive and finite, got {x}")));
    }
    Ok(())
}

/// `γ ∈ (ξ/(1 - 4μξ), (1 - 3μξ)/μ)`, nonempty when `μξ < 1/6`.
pub fn gamma_range_theorem(mu: f64, xi: f64) -> Result<GammaRange> {
    check_positive("mu", mu)?;
    check_positive("xi", xi)?;
    let p = mu * xi;
    let lower = xi / (1.0 - 4.0 * p);
    let upper = (1.0 - 3.0 * p) / mu;
    let valid = p < 1.0 / 6.0 && lower < upper;
    Ok(GammaRange {
        lower,
        upper,
        recommended: (3.0 * xi / (2.0 * mu)).sqrt(),
        valid,
    })
}

/// `γ ∈ (2·inc/(1 - 8·d·inc), (1 - 6·d·inc)/d)`, nonempty when `d·inc < 1/12`.
///
/// Identical to [`gamma_range_theorem`] with `μ = d` and `ξ = 2·inc`.
pub fn gamma_range_corollary(deg_max: usize, inc: f64) -> Result<GammaRange> {
    if deg_max == 0 {
        return Err(Error::invalid("deg_max must be >= 1"));
    }
    check_positive("inc", inc)?;
    let d = deg_max as f64;
    let p = d * inc;
    let lower = 2.0 * inc / (1.0 - 8.0 * p);
    let upper = (1.0 - 6.0 * p) / d;
    let valid = p < 1.0 / 12.0 && lower < upper;
    Ok(GammaRange {
        lower,
        upper,
        recommended: (3.0 * inc / d).sqrt(),
        valid,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Debug, Clone)]
pub struct CertificateOptions {
    pub fp_tol: f64,
    pub fp_max_iters: usize,
    pub zero_tol: f64,
    /// Relative rank threshold for `b`; `None` uses [`default_rank_tol`].
    pub rank_tol: Option<f64>,
    /// Relative slack on the strict inequalities.
    pub margin: f64,
    pub power_iters: usize,
}

impl Default for CertificateOptions {
    fn default() -> Self {
        CertificateOptions {
            fp_tol: 1e-12,
            fp_max_iters: 20_000,
            zero_tol: 0.0,
            rank_tol: None,
            margin: 1e-6,
            power_iters: tangent::DEFAULT_POWER_ITERS,
        }
    }
}

/// Equality residuals above this make the certificate fail.
pub const EQUALITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Serialize)]
pub struct CertificateResult {
    pub gamma: f64,
    pub q_hat: DenseMatrix,
    /// `‖ε_Ω‖∞`
    pub eps_omega_inf: f64,
    /// `‖ε_T‖`
    pub eps_t_spec: f64,
    /// `‖P_T(Q̂) - UVᵀ‖_F`
    pub cond_pt_equals_uv: f64,
    /// `‖P_Ω(Q̂) - γ·sign(A)‖_F`
    pub cond_pomega_equals_sign: f64,
    /// `‖P_{T⊥}(Q̂)‖`, must be below 1.
    pub cond_tperp_norm: f64,
    /// `‖P_{Ωᶜ}(Q̂)‖∞`, must be below `γ`.
    pub cond_omegac_inf: f64,
    pub transversality_sigma: f64,
    pub fixed_point_iters: usize,
    pub fixed_point_converged: bool,
    pub verdict: Verdict,
}

/// Builds `Q̂ ∈ Ω ⊕ T` from the coupled equations
/// `ε_Ω = -P_Ω(UVᵀ + ε_T)` and `ε_T = -P_T(γ·sign(A) + ε_Ω)`, starting at
/// `ε_T = 0`, and checks every recovery condition.
///
/// The iteration contracts at rate `σ²` where `σ` is the transversality
/// number, so it converges whenever the tangent spaces are transversal.
/// Non-convergence within `fp_max_iters` yields [`Verdict::Inconclusive`].
pub fn build_certificate(
    a: &DenseMatrix,
    b: &DenseMatrix,
    gamma: f64,
    opts: &CertificateOptions,
) -> Result<CertificateResult> {
    check_positive("gamma", gamma)?;
    a.check_same_shape(b)?;
    let omega = support_of(a, opts.zero_tol);
    if omega.is_empty() {
        return Err(Error::ZeroMatrix { what: "sparse component" });
    }
    let rank_tol = opts
        .rank_tol
        .unwrap_or_else(|| default_rank_tol(b.rows(), b.cols()));
    let t = TangentSpaceLR::from_matrix(b, rank_tol)?;
    let mask = omega.mask();
    let sign = sign_pattern(a, opts.zero_tol).into_matrix();
    let gsign = &sign * gamma;
    let uv = t.uv_t();

    let sigma = transversality_sigma_mask(&mask, &t, opts.power_iters.max(1));

    let (rows, cols) = a.shape();
    let mut eps_t = DMatrix::zeros(rows, cols);
    let mut eps_omega = DMatrix::zeros(rows, cols);
    let mut iters = 0;
    let mut converged = false;
    while iters < opts.fp_max_iters {
        iters += 1;
        let next_omega = -project_omega_mask(&(&uv + &eps_t), &mask);
        let next_t = -t.project(&(&gsign + &next_omega));
        let change = ((&next_omega - &eps_omega).norm_squared() + (&next_t - &eps_t).norm_squared()).sqrt();
        eps_omega = next_omega;
        eps_t = next_t;
        if !change.is_finite() {
            break;
        }
        if change < opts.fp_tol {
            converged = true;
            break;
        }
    }

    let q = &gsign + &eps_omega + &uv + &eps_t;
    let finite = q.iter().all(|x| x.is_finite());
    let (cond_pt, cond_po, cond_tperp, cond_oc, eps_t_spec) = if finite {
        (
            (t.project(&q) - &uv).norm(),
            (project_omega_mask(&q, &mask) - &gsign).norm(),
            spectral_norm_raw(&t.project_perp(&q))?,
            project_omega_complement_mask(&q, &mask).amax(),
            spectral_norm_raw(&eps_t)?,
        )
    } else {
        (f64::INFINITY, f64::INFINITY, f64::INFINITY, f64::INFINITY, f64::INFINITY)
    };

    let transversal = sigma < 1.0 - TRANSVERSAL_MARGIN;
    let verdict = if !transversal {
        Verdict::Fail
    } else if !converged {
        Verdict::Inconclusive
    } else if cond_pt <= EQUALITY_TOL
        && cond_po <= EQUALITY_TOL
        && cond_tperp < 1.0 - opts.margin
        && cond_oc < gamma * (1.0 - opts.margin)
    {
        Verdict::Pass
    } else {
        Verdict::Fail
    };

    Ok(CertificateResult {
        gamma,
        q_hat: if finite {
            DenseMatrix::from_trusted(q)
        } else {
            DenseMatrix::zeros(rows, cols)
        },
        eps_omega_inf: if finite { eps_omega.amax() } else { f64::INFINITY },
        eps_t_spec,
        cond_pt_equals_uv: cond_pt,
        cond_pomega_equals_sign: cond_po,
        cond_tperp_norm: cond_tperp,
        cond_omegac_inf: cond_oc,
        transversality_sigma: sigma,
        fixed_point_iters: iters,
        fixed_point_converged: converged,
        verdict,
    })
}

/// Deterministic sufficient conditions for a (sparse, low-rank) pair.
#[derive(Debug, Clone, Serialize)]
pub struct ConditionReport {
    pub mu: f64,
    pub deg_max: usize,
    pub inc: f64,
    pub xi_upper: f64,
    pub mu_xi_upper: f64,
    pub deg_max_inc: f64,
    /// `μ·ξ_upper < 1/6`
    pub theorem: ConditionVerdict,
    /// `deg_max·inc < 1/12`
    pub corollary: ConditionVerdict,
    pub gamma_range_thm: GammaRange,
    pub gamma_range_cor: GammaRange,
    pub note: &'static str,
}

const CONSERVATIVE_NOTE: &str =
    "verdicts use xi_upper = 2*inc >= xi; they are sufficient for recovery, not necessary";

pub fn condition_report(a: &DenseMatrix, b: &DenseMatrix) -> Result<ConditionReport> {
    a.check_same_shape(b)?;
    let omega = support_of(a, 0.0);
    if omega.is_empty() {
        return Err(Error::ZeroMatrix { what: "sparse component" });
    }
    let t = TangentSpaceLR::from_matrix(b, default_rank_tol(b.rows(), b.cols()))?;
    let mu = mu_exact(&omega)?;
    let deg_max = degrees(&omega)?.max;
    let inc = inc(&t);
    let xi_upper = 2.0 * inc;
    let mu_xi_upper = mu * xi_upper;
    let deg_max_inc = deg_max as f64 * inc;
    let verdict = |ok: bool| {
        if ok {
            ConditionVerdict::Satisfied
        } else {
            ConditionVerdict::Violated
        }
    };
    Ok(ConditionReport {
        mu,
        deg_max,
        inc,
        xi_upper,
        mu_xi_upper,
        deg_max_inc,
        theorem: verdict(mu_xi_upper < 1.0 / 6.0),
        corollary: verdict(deg_max_inc < 1.0 / 12.0),
        gamma_range_thm: gamma_range_theorem(mu, xi_upper)?,
        gamma_range_cor: gamma_range_corollary(deg_max, inc)?,
        note: CONSERVATIVE_NOTE,
    })
}
