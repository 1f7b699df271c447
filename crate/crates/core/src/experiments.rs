//! Recovery experiments: the `tol` metric, the `t`-sweep stability heuristic
//! for choosing `γ`, success-probability phase diagrams and the rigidity
//! demonstration.

use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::certificate::{build_certificate, condition_report, CertificateOptions, Verdict};
use crate::ensembles::{random_pair, EnsembleSpec};
use crate::error::{Error, Result};
use crate::matrix::{l1_norm, numerical_rank, support_of, DenseMatrix};
use crate::rng::derive_seed;
use crate::solver::{
    decompose, decompose_t, decompose_t_warm, t_to_gamma, DecompositionResult, SolverConfig, SolverState,
    OUTPUT_RANK_TOL,
};

/// `‖Â - A⋆‖_F/‖A⋆‖_F + ‖B̂ - B⋆‖_F/‖B⋆‖_F`
pub fn tol_metric(
    a_hat: &DenseMatrix,
    b_hat: &DenseMatrix,
    a_true: &DenseMatrix,
    b_true: &DenseMatrix,
) -> Result<f64> {
    let na = a_true.frobenius_norm();
    let nb = b_true.frobenius_norm();
    if na == 0.0 {
        return Err(Error::ZeroMatrix { what: "true sparse component" });
    }
    if nb == 0.0 {
        return Err(Error::ZeroMatrix { what: "true low-rank component" });
    }
    Ok(a_hat.checked_sub(a_true)?.frobenius_norm() / na + b_hat.checked_sub(b_true)?.frobenius_norm() / nb)
}

/// Inclusive integer range `lo:step:hi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct IntGrid {
    pub lo: usize,
    pub step: usize,
    pub hi: usize,
}

impl IntGrid {
    pub fn new(lo: usize, step: usize, hi: usize) -> Result<Self> {
        if step == 0 || lo > hi {
            return Err(Error::invalid(format!("empty grid {lo}:{step}:{hi}")));
        }
        Ok(IntGrid { lo, step, hi })
    }

    pub fn values(&self) -> Vec<usize> {
        (self.lo..=self.hi).step_by(self.step).collect()
    }
}

impl FromStr for IntGrid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let [lo, step, hi] = split_grid(s)?;
        let parse = |x: &str| {
            x.parse::<usize>()
                .map_err(|_| Error::invalid(format!("bad integer '{x}' in grid '{s}'")))
        };
        IntGrid::new(parse(lo)?, parse(step)?, parse(hi)?)
    }
}

/// Inclusive real range `lo:step:hi`, evaluated as `lo + i·step`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RealGrid {
    pub lo: f64,
    pub step: f64,
    pub hi: f64,
}

impl RealGrid {
    pub fn new(lo: f64, step: f64, hi: f64) -> Result<Self> {
        if !(step > 0.0) || !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::invalid(format!("empty grid {lo}:{step}:{hi}")));
        }
        Ok(RealGrid { lo, step, hi })
    }

    pub fn values(&self) -> Vec<f64> {
        let count = ((self.hi - self.lo) / self.step + 1e-9).floor() as usize;
        (0..=count).map(|i| round_grid(self.lo + i as f64 * self.step)).collect()
    }
}

impl FromStr for RealGrid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let [lo, step, hi] = split_grid(s)?;
        let parse = |x: &str| {
            x.parse::<f64>()
                .map_err(|_| Error::invalid(format!("bad number '{x}' in grid '{s}'")))
        };
        RealGrid::new(parse(lo)?, parse(step)?, parse(hi)?)
    }
}

fn split_grid(s: &str) -> Result<[&str; 3]> {
    let parts: Vec<&str> = s.split(':').map(str::trim).collect();
    match parts.as_slice() {
        [lo, step, hi] => Ok([lo, step, hi]),
        _ => Err(Error::invalid(format!("grid '{s}' must have the form lo:step:hi"))),
    }
}

/// Snaps to a 1e-9 lattice so that `t` and `t' - ε` coincide when they should.
fn round_grid(x: f64) -> f64 {
    (x * 1e9).round() / 1e9
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepConfig {
    pub eps: f64,
    pub t_grid: Vec<f64>,
    /// Absolute threshold on `diff_t` below which a grid point counts as stable.
    pub diff_threshold: f64,
    /// Shorter runs of stable grid points are ignored.
    pub min_plateau_len: usize,
    /// Settings for the solves along the grid. A point whose solve hits
    /// `max_iters` is never counted as stable.
    pub solver: SolverConfig,
    /// Settings for the final solve at the chosen `t`.
    pub final_solver: SolverConfig,
}

impl SweepConfig {
    /// Grid solves stop at `1e-6` and 100 iterations. Warm-started points
    /// inside a plateau converge well within that, while points in the
    /// transitions between plateaus can take tens of thousands without
    /// changing the outcome.
    pub fn sweep_solver() -> SolverConfig {
        SolverConfig {
            tol_primal: 1e-6,
            tol_change: 1e-6,
            max_iters: 100,
            ..SolverConfig::default()
        }
    }
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            eps: 0.01,
            t_grid: RealGrid { lo: 0.02, step: 0.01, hi: 0.98 }.values(),
            diff_threshold: 1e-3,
            min_plateau_len: 3,
            solver: SweepConfig::sweep_solver(),
            final_solver: SolverConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlateauLabel {
    AllSparse,
    Middle,
    AllLowrank,
}

#[derive(Debug, Clone, Serialize)]
pub struct Plateau {
    pub t_start: f64,
    pub t_end: f64,
    pub label: PlateauLabel,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub t_grid: Vec<f64>,
    pub diff_t: Vec<f64>,
    pub tol_t: Option<Vec<f64>>,
    /// Both solves behind `diff_t[i]` converged.
    pub converged: Vec<bool>,
    pub plateaus: Vec<Plateau>,
    pub chosen_t: Option<f64>,
    pub chosen_gamma: Option<f64>,
    /// Solution at `chosen_t`, solved with `final_solver`.
    #[serde(skip)]
    pub chosen: Option<DecompositionResult>,
}

impl SweepResult {
    /// `chosen_t` if set, otherwise the midpoint of the only plateau labelled
    /// [`PlateauLabel::Middle`], if there is exactly one.
    ///
    /// The second case covers paths whose all-sparse range ends before the
    /// grid has room for a full plateau.
    pub fn middle_t(&self) -> Option<f64> {
        if self.chosen_t.is_some() {
            return self.chosen_t;
        }
        let mut middles = self.plateaus.iter().filter(|p| p.label == PlateauLabel::Middle);
        match (middles.next(), middles.next()) {
            (Some(p), None) => Some(round_grid(0.5 * (p.t_start + p.t_end))),
            _ => None,
        }
    }
}

/// Endpoint characterisation thresholds.
const ENDPOINT_RATIO: f64 = 0.01;

/// Solves along the `t` grid and locates the stable ranges of the solution path.
///
/// Solves run in increasing `t`, each warm-started from the previous one.
pub fn gamma_sweep(
    c: &DenseMatrix,
    config: &SweepConfig,
    truth: Option<(&DenseMatrix, &DenseMatrix)>,
) -> Result<SweepResult> {
    let eps = config.eps;
    if !(eps > 0.0) {
        return Err(Error::invalid("eps must be positive"));
    }
    let grid: Vec<f64> = config.t_grid.iter().map(|&t| round_grid(t)).collect();
    if grid.len() < 3 {
        return Err(Error::invalid("the t grid needs at least 3 points"));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("the t grid must be strictly increasing"));
    }
    if grid[0] <= eps || grid[grid.len() - 1] >= 1.0 {
        return Err(Error::invalid(format!("the t grid must lie inside ({eps}, 1)")));
    }

    let mut points: Vec<f64> = grid.iter().flat_map(|&t| [round_grid(t - eps), t]).collect();
    points.sort_by(f64::total_cmp);
    points.dedup();
    let mut solutions: Vec<DecompositionResult> = Vec::with_capacity(points.len());
    let mut state: Option<SolverState> = None;
    for &t in &points {
        let (res, next) = decompose_t_warm(c, t, &config.solver, state.as_ref())?;
        solutions.push(res);
        state = Some(next);
    }
    let at = |t: f64| {
        let idx = points
            .binary_search_by(|p| p.total_cmp(&t))
            .expect("every sweep point was solved");
        &solutions[idx]
    };

    let mut diff_t = Vec::with_capacity(grid.len());
    let mut converged = Vec::with_capacity(grid.len());
    let mut tol_t = truth.map(|_| Vec::with_capacity(grid.len()));
    for &t in &grid {
        let cur = at(t);
        let prev = at(round_grid(t - eps));
        diff_t.push(
            cur.a_hat.checked_sub(&prev.a_hat)?.frobenius_norm()
                + cur.b_hat.checked_sub(&prev.b_hat)?.frobenius_norm(),
        );
        converged.push(cur.converged && prev.converged);
        if let (Some((a, b)), Some(tols)) = (truth, tol_t.as_mut()) {
            tols.push(tol_metric(&cur.a_hat, &cur.b_hat, a, b)?);
        }
    }

    let stable: Vec<bool> = diff_t
        .iter()
        .zip(&converged)
        .map(|(&d, &ok)| ok && d < config.diff_threshold)
        .collect();
    let runs = stable_runs(&stable, config.min_plateau_len.max(1));
    let c_fro = c.frobenius_norm();
    let c_l1 = l1_norm(c);
    let ratio = |x: f64, scale: f64| if scale == 0.0 { 0.0 } else { x / scale };
    let last = runs.len().saturating_sub(1);
    let plateaus: Vec<Plateau> = runs
        .iter()
        .enumerate()
        .map(|(idx, &(s, e))| {
            let label = if idx == 0 && ratio(at(grid[s]).b_hat.frobenius_norm(), c_fro) < ENDPOINT_RATIO {
                PlateauLabel::AllSparse
            } else if idx == last && idx > 0 && ratio(l1_norm(&at(grid[e]).a_hat), c_l1) < ENDPOINT_RATIO {
                PlateauLabel::AllLowrank
            } else {
                PlateauLabel::Middle
            };
            Plateau { t_start: grid[s], t_end: grid[e], label }
        })
        .collect();

    let (mut chosen_t, mut chosen_gamma, mut chosen) = (None, None, None);
    if plateaus.len() == 3 {
        let mid = &plateaus[1];
        let t = round_grid(0.5 * (mid.t_start + mid.t_end));
        chosen_t = Some(t);
        chosen_gamma = Some(t_to_gamma(t)?);
        chosen = Some(decompose_t(c, t, &config.final_solver)?);
    }

    Ok(SweepResult {
        t_grid: grid,
        diff_t,
        tol_t,
        converged,
        plateaus,
        chosen_t,
        chosen_gamma,
        chosen,
    })
}

/// Maximal runs of `true`, at least `min_len` long, as inclusive index pairs.
fn stable_runs(stable: &[bool], min_len: usize) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start = None;
    for (i, &ok) in stable.iter().chain(std::iter::once(&false)).enumerate() {
        match (ok, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                if i - s >= min_len {
                    runs.push((s, i - 1));
                }
                start = None;
            }
            _ => {}
        }
    }
    runs
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "gamma")]
pub enum GammaPolicy {
    Fixed(f64),
    /// `√(3·inc/deg_max)` when `deg_max·inc < 1/12`, otherwise [`GammaPolicy::SweepMidpoint`].
    RecommendedFromTruth,
    SweepMidpoint,
}

impl GammaPolicy {
    pub fn name(&self) -> &'static str {
        match self {
            GammaPolicy::Fixed(_) => "fixed",
            GammaPolicy::RecommendedFromTruth => "recommended-from-truth",
            GammaPolicy::SweepMidpoint => "sweep-midpoint",
        }
    }
}

/// Where the `γ` of a particular solve came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GammaSource {
    Fixed,
    Corollary,
    SweepMidpoint,
    /// Not three plateaus, but exactly one labelled middle; see [`SweepResult::middle_t`].
    MiddlePlateau,
    /// The sweep found no usable middle plateau; `γ = 1/√n` was used.
    Fallback,
}

#[derive(Debug, Clone, Serialize)]
pub struct PolicySolve {
    pub gamma: f64,
    pub source: GammaSource,
    pub result: DecompositionResult,
}

/// Resolves `policy` for `C = A⋆ + B⋆` and solves at the resulting `γ`.
pub fn solve_with_policy(
    a_true: &DenseMatrix,
    b_true: &DenseMatrix,
    policy: &GammaPolicy,
    sweep: &SweepConfig,
) -> Result<PolicySolve> {
    let c = a_true.checked_add(b_true)?;
    let fixed = |gamma: f64, source| -> Result<PolicySolve> {
        let result = decompose(&c, &sweep.final_solver.with_gamma(gamma))?;
        Ok(PolicySolve { gamma, source, result })
    };
    match policy {
        GammaPolicy::Fixed(gamma) => fixed(*gamma, GammaSource::Fixed),
        GammaPolicy::RecommendedFromTruth => {
            let report = condition_report(a_true, b_true)?;
            if report.corollary.is_satisfied() {
                fixed(report.gamma_range_cor.recommended, GammaSource::Corollary)
            } else {
                sweep_or_fallback(&c, sweep)
            }
        }
        GammaPolicy::SweepMidpoint => sweep_or_fallback(&c, sweep),
    }
}

fn sweep_or_fallback(c: &DenseMatrix, sweep: &SweepConfig) -> Result<PolicySolve> {
    let mut res = gamma_sweep(c, sweep, None)?;
    if let (Some(gamma), Some(result)) = (res.chosen_gamma, res.chosen.take()) {
        return Ok(PolicySolve { gamma, source: GammaSource::SweepMidpoint, result });
    }
    let (gamma, source) = match res.middle_t() {
        Some(t) => (t_to_gamma(t)?, GammaSource::MiddlePlateau),
        None => (1.0 / (c.rows().max(c.cols()) as f64).sqrt(), GammaSource::Fallback),
    };
    let result = decompose(c, &sweep.final_solver.with_gamma(gamma))?;
    Ok(PolicySolve { gamma, source, result })
}

#[derive(Debug, Clone, Serialize)]
pub struct PhaseDiagramConfig {
    pub n: usize,
    pub m_grid: IntGrid,
    pub k_grid: IntGrid,
    pub trials_per_cell: usize,
    pub gamma_policy: GammaPolicy,
    pub success_tol: f64,
    pub seed: u64,
    pub sweep: SweepConfig,
    /// Also run the certificate on every generated truth.
    pub certify: bool,
}

impl Default for PhaseDiagramConfig {
    fn default() -> Self {
        PhaseDiagramConfig {
            n: 25,
            m_grid: IntGrid { lo: 10, step: 10, hi: 250 },
            k_grid: IntGrid { lo: 1, step: 1, hi: 12 },
            trials_per_cell: 10,
            gamma_policy: GammaPolicy::RecommendedFromTruth,
            success_tol: 1e-3,
            seed: 0,
            sweep: SweepConfig::default(),
            certify: false,
        }
    }
}

impl PhaseDiagramConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials_per_cell == 0 {
            return Err(Error::invalid("trials_per_cell must be >= 1"));
        }
        if self.n == 0 {
            return Err(Error::invalid("n must be positive"));
        }
        if self.m_grid.hi > self.n * self.n || self.m_grid.lo == 0 {
            return Err(Error::invalid(format!("m grid must lie in 1..={}", self.n * self.n)));
        }
        if self.k_grid.hi > self.n || self.k_grid.lo == 0 {
            return Err(Error::invalid(format!("k grid must lie in 1..={}", self.n)));
        }
        if !(self.success_tol > 0.0) {
            return Err(Error::invalid("success_tol must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrialOutcome {
    pub seed: u64,
    pub tol: Option<f64>,
    pub success: bool,
    pub gamma: Option<f64>,
    pub source: Option<GammaSource>,
    pub certified: Option<bool>,
    /// Set when the trial errored; such trials count as failures.
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PhaseCell {
    pub m: usize,
    pub k: usize,
    pub trials: usize,
    pub successes: usize,
    pub success_prob: f64,
    pub certified: usize,
    pub outcomes: Vec<TrialOutcome>,
}

impl PhaseCell {
    fn source_count(&self, source: GammaSource) -> usize {
        self.outcomes.iter().filter(|o| o.source == Some(source)).count()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PhaseDiagram {
    pub n: usize,
    pub m_values: Vec<usize>,
    pub k_values: Vec<usize>,
    pub gamma_policy: GammaPolicy,
    /// Row-major over `(k, m)`: all `m` for the first `k`, then the next `k`.
    pub cells: Vec<PhaseCell>,
}

fn run_trial(config: &PhaseDiagramConfig, m: usize, k: usize, trial: usize) -> TrialOutcome {
    let seed = derive_seed(config.seed, &[m as u64, k as u64, trial as u64]);
    let mut outcome = TrialOutcome {
        seed,
        tol: None,
        success: false,
        gamma: None,
        source: None,
        certified: None,
        error: None,
    };
    let mut attempt = || -> Result<()> {
        let (a, b) = random_pair(&EnsembleSpec::new(config.n, m, k, seed))?;
        if config.certify {
            let report = condition_report(&a, &b)?;
            let gamma = report.gamma_range_cor.recommended;
            let cert = build_certificate(&a, &b, gamma, &CertificateOptions::default())?;
            outcome.certified = Some(cert.verdict == Verdict::Pass);
        }
        let solve = solve_with_policy(&a, &b, &config.gamma_policy, &config.sweep)?;
        let tol = tol_metric(&solve.result.a_hat, &solve.result.b_hat, &a, &b)?;
        outcome.tol = Some(tol);
        outcome.success = tol < config.success_tol;
        outcome.gamma = Some(solve.gamma);
        outcome.source = Some(solve.source);
        Ok(())
    };
    if let Err(e) = attempt() {
        outcome.success = false;
        outcome.error = Some(e.to_string());
    }
    outcome
}

/// Success probability over `(m, k)`. Trials run in parallel; the output
/// depends only on the configuration.
pub fn phase_diagram(config: &PhaseDiagramConfig) -> Result<PhaseDiagram> {
    config.validate()?;
    let m_values = config.m_grid.values();
    let k_values = config.k_grid.values();
    let jobs: Vec<(usize, usize, usize)> = k_values
        .iter()
        .flat_map(|&k| m_values.iter().map(move |&m| (m, k)))
        .flat_map(|(m, k)| (0..config.trials_per_cell).map(move |t| (m, k, t)))
        .collect();
    let outcomes: Vec<TrialOutcome> = jobs
        .par_iter()
        .map(|&(m, k, t)| run_trial(config, m, k, t))
        .collect();
    let cells = jobs
        .chunks(config.trials_per_cell)
        .zip(outcomes.chunks(config.trials_per_cell))
        .map(|(job, outs)| {
            let successes = outs.iter().filter(|o| o.success).count();
            PhaseCell {
                m: job[0].0,
                k: job[0].1,
                trials: outs.len(),
                successes,
                success_prob: successes as f64 / outs.len() as f64,
                certified: outs.iter().filter(|o| o.certified == Some(true)).count(),
                outcomes: outs.to_vec(),
            }
        })
        .collect();
    Ok(PhaseDiagram {
        n: config.n,
        m_values,
        k_values,
        gamma_policy: config.gamma_policy.clone(),
        cells,
    })
}

impl PhaseDiagram {
    pub fn cell(&self, m: usize, k: usize) -> Option<&PhaseCell> {
        self.cells.iter().find(|c| c.m == m && c.k == k)
    }

    /// `m,k,success_prob,gamma_policy` rows, LF line endings.
    ///
    /// For the truth-dependent policy the last column counts how each
    /// trial's `γ` was obtained.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("m,k,success_prob,gamma_policy\n");
        for cell in &self.cells {
            let policy = match self.gamma_policy {
                GammaPolicy::RecommendedFromTruth | GammaPolicy::SweepMidpoint => format!(
                    "{}[corollary={};sweep={};middle={};fallback={}]",
                    self.gamma_policy.name(),
                    cell.source_count(GammaSource::Corollary),
                    cell.source_count(GammaSource::SweepMidpoint),
                    cell.source_count(GammaSource::MiddlePlateau),
                    cell.source_count(GammaSource::Fallback),
                ),
                GammaPolicy::Fixed(g) => format!("fixed[{g}]"),
            };
            let _ = writeln!(out, "{},{},{},{}", cell.m, cell.k, cell.success_prob, policy);
        }
        out
    }

    /// 8-bit ASCII PGM: one pixel per cell, `m` along x, largest `k` in the top row,
    /// probability 1 white and 0 black.
    pub fn to_pgm(&self) -> String {
        let (w, h) = (self.m_values.len(), self.k_values.len());
        let mut out = format!("P2\n{w} {h}\n255\n");
        for (row, _) in self.k_values.iter().enumerate().rev() {
            let line: Vec<String> = self.cells[row * w..(row + 1) * w]
                .iter()
                .map(|c| ((c.success_prob * 255.0).round() as u8).to_string())
                .collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RigidityResult {
    pub n: usize,
    pub epsilon: f64,
    /// `⌊n/ln n⌋` entries in the sparse part.
    pub m: usize,
    /// `⌈εn⌉`
    pub k_target: usize,
    /// `|support(Â)|`, an upper bound on the rigidity at rank `k_target`.
    pub support_size_found: usize,
    pub rank_found: usize,
    pub certified: bool,
    pub verdict: Verdict,
    pub gamma: f64,
    pub gamma_source: GammaSource,
    pub tol: f64,
    pub primal_residual: f64,
}

/// Plants a sparse-plus-rank-`⌈εn⌉` matrix, recovers it and certifies the
/// recovered pair.
pub fn rigidity_demo(n: usize, epsilon: f64, seed: u64, sweep: &SweepConfig) -> Result<RigidityResult> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::invalid("epsilon must lie in (0, 1)"));
    }
    if n < 3 {
        return Err(Error::invalid("n must be >= 3"));
    }
    let nf = n as f64;
    let m = ((nf / nf.ln()).floor() as usize).max(1);
    let k_target = ((epsilon * nf).ceil() as usize).clamp(1, n);
    let (a, b) = random_pair(&EnsembleSpec::new(n, m, k_target, seed))?;
    let solve = solve_with_policy(&a, &b, &GammaPolicy::RecommendedFromTruth, sweep)?;
    let (a_hat, b_hat) = (&solve.result.a_hat, &solve.result.b_hat);
    let c = a.checked_add(&b)?;
    let zero_tol = 1e-8 * crate::matrix::linf_norm(&c);
    let support_size_found = support_of(a_hat, zero_tol).len();
    let rank_found = if b_hat.frobenius_norm() == 0.0 {
        0
    } else {
        numerical_rank(b_hat, OUTPUT_RANK_TOL)?
    };
    let verdict = if support_size_found == 0 || rank_found == 0 {
        Verdict::Fail
    } else {
        let opts = CertificateOptions {
            zero_tol,
            rank_tol: Some(OUTPUT_RANK_TOL),
            ..Default::default()
        };
        build_certificate(a_hat, b_hat, solve.gamma, &opts)?.verdict
    };
    Ok(RigidityResult {
        n,
        epsilon,
        m,
        k_target,
        support_size_found,
        rank_found,
        certified: verdict == Verdict::Pass && rank_found <= k_target,
        verdict,
        gamma: solve.gamma,
        gamma_source: solve.source,
        tol: tol_metric(a_hat, b_hat, &a, &b)?,
        primal_residual: solve.result.primal_residual,
    })
}
