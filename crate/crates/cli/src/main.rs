//! `slrd`: sparse plus low-rank decomposition from the command line.
//!
//! Exit codes: 0 on success, 1 on usage or input errors, 2 on numerical
//! failure (divergence, failed SVD, or a solve that hit its iteration cap).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use slrd::certificate::{build_certificate, CertificateOptions};
use slrd::ensembles::{random_pair, EnsembleSpec};
use slrd::experiments::{
    gamma_sweep, phase_diagram, rigidity_demo, GammaPolicy, IntGrid, PhaseDiagramConfig, RealGrid, SweepConfig,
};
use slrd::io::{read_matrix, write_matrix, MatrixFormat};
use slrd::matrix::{numerical_rank, support_of};
use slrd::solver::{decompose, t_to_gamma, SolverConfig, OUTPUT_RANK_TOL};
use slrd::tangent::{incoherence_report, ReportOptions};
use slrd::DenseMatrix;

#[derive(Parser)]
#[command(name = "slrd", version, about = "Sparse plus low-rank matrix decomposition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split C into sparse and low-rank parts at a given γ (or t).
    Decompose(DecomposeArgs),
    /// Incoherence diagnostics for a (sparse, low-rank) pair.
    Analyze(AnalyzeArgs),
    /// Build and check the dual certificate for a (sparse, low-rank) pair.
    Certify(CertifyArgs),
    /// Success probability over a grid of support sizes and ranks.
    Phase(PhaseArgs),
    /// Solve along a t grid and report the stable ranges.
    GammaSweep(SweepArgs),
    /// Plant, recover and certify a sparse plus rank-⌈εn⌉ matrix.
    Rigidity(RigidityArgs),
}

#[derive(Args)]
struct FormatArg {
    /// Matrix file format (mtx or csv); guessed from the extension by default.
    #[arg(long)]
    format: Option<String>,
}

#[derive(Args)]
struct DecomposeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, conflicts_with = "t")]
    gamma: Option<f64>,
    /// Use γ = t/(1-t).
    #[arg(long)]
    t: Option<f64>,
    #[arg(long)]
    out_sparse: Option<PathBuf>,
    #[arg(long)]
    out_lowrank: Option<PathBuf>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, default_value_t = 50_000)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-7)]
    tol_primal: f64,
    #[arg(long, default_value_t = 1e-9)]
    tol_change: f64,
    #[command(flatten)]
    format: FormatArg,
}

#[derive(Args)]
struct PairArgs {
    #[arg(long)]
    sparse: PathBuf,
    #[arg(long)]
    lowrank: PathBuf,
    /// Entries at or below this magnitude are outside the support.
    #[arg(long, default_value_t = 0.0)]
    zero_tol: f64,
    #[command(flatten)]
    format: FormatArg,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    pair: PairArgs,
    /// Also estimate ξ from below with this many random tangent samples.
    #[arg(long)]
    xi_samples: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Print the full report as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct CertifyArgs {
    #[command(flatten)]
    pair: PairArgs,
    /// Defaults to the recommended γ of the incoherence report.
    #[arg(long)]
    gamma: Option<f64>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Include the certificate matrix in the report.
    #[arg(long)]
    with_q: bool,
}

#[derive(Args)]
struct PhaseArgs {
    #[arg(long, default_value_t = 25)]
    n: usize,
    /// Support sizes, lo:step:hi.
    #[arg(long, default_value = "10:10:250")]
    m: IntGrid,
    /// Ranks, lo:step:hi.
    #[arg(long, default_value = "1:1:12")]
    k: IntGrid,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// recommended, sweep, or fixed:<gamma>.
    #[arg(long, default_value = "recommended")]
    gamma_policy: String,
    #[arg(long, default_value_t = 1e-3)]
    success_tol: f64,
    /// Also certify every generated truth.
    #[arg(long)]
    certify: bool,
    /// CSV output; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    pgm: Option<PathBuf>,
    /// Per-trial details as JSON.
    #[arg(long)]
    details: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Matrix to sweep; otherwise a random instance is generated from --n, --m, --k.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, default_value_t = 25)]
    n: usize,
    #[arg(long, default_value_t = 25)]
    m: usize,
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.01)]
    eps: f64,
    #[arg(long, default_value = "0.02:0.01:0.98")]
    t_grid: RealGrid,
    #[arg(long, default_value_t = 1e-3)]
    threshold: f64,
    /// Per-point CSV: t,diff_t,converged[,tol_t].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the JSON summary here instead of stdout.
    #[arg(long)]
    report: Option<PathBuf>,
    #[command(flatten)]
    format: FormatArg,
}

#[derive(Args)]
struct RigidityArgs {
    #[arg(long, default_value_t = 50)]
    n: usize,
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    report: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Numerical(String),
}

impl From<slrd::Error> for Failure {
    fn from(e: slrd::Error) -> Self {
        use slrd::Error::*;
        match e {
            SvdFailed | Diverged { .. } | NotOrthonormal { .. } => Failure::Numerical(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

type CliResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.command {
        Command::Decompose(a) => run_decompose(a),
        Command::Analyze(a) => run_analyze(a),
        Command::Certify(a) => run_certify(a),
        Command::Phase(a) => run_phase(a),
        Command::GammaSweep(a) => run_sweep(a),
        Command::Rigidity(a) => run_rigidity(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("numerical failure: {msg}");
            ExitCode::from(2)
        }
    }
}

fn format_for(path: &Path, arg: &FormatArg) -> Result<MatrixFormat, Failure> {
    match &arg.format {
        Some(f) => Ok(f.parse()?),
        None => Ok(MatrixFormat::from_path(path)),
    }
}

fn load(path: &Path, arg: &FormatArg) -> Result<DenseMatrix, Failure> {
    let format = format_for(path, arg)?;
    read_matrix(path, format).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn save(m: &DenseMatrix, path: &Path, arg: &FormatArg) -> CliResult {
    write_matrix(m, path, format_for(path, arg)?)?;
    Ok(())
}

fn emit_json(value: &Value, path: Option<&Path>) -> CliResult {
    let text = serde_json::to_string_pretty(value).expect("reports serialize") + "\n";
    match path {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn to_value(x: &impl serde::Serialize) -> Value {
    serde_json::to_value(x).expect("reports serialize")
}

fn rank_of(m: &DenseMatrix) -> Result<usize, Failure> {
    if m.frobenius_norm() == 0.0 {
        return Ok(0);
    }
    Ok(numerical_rank(m, OUTPUT_RANK_TOL)?)
}

fn run_decompose(args: DecomposeArgs) -> CliResult {
    let c = load(&args.input, &args.format)?;
    let gamma = match (args.gamma, args.t) {
        (Some(g), None) => g,
        (None, Some(t)) => t_to_gamma(t)?,
        _ => return Err(Failure::Usage("one of --gamma or --t is required".into())),
    };
    let config = SolverConfig {
        max_iters: args.max_iters,
        tol_primal: args.tol_primal,
        tol_change: args.tol_change,
        ..SolverConfig::new(gamma)
    };
    let res = decompose(&c, &config)?;
    if let Some(p) = &args.out_sparse {
        save(&res.a_hat, p, &args.format)?;
    }
    if let Some(p) = &args.out_lowrank {
        save(&res.b_hat, p, &args.format)?;
    }
    let zero_tol = 1e-8 * slrd::matrix::linf_norm(&c);
    let report = json!({
        "gamma": res.gamma_used,
        "t": args.t,
        "iterations": res.iterations,
        "converged": res.converged,
        "primal_residual": res.primal_residual,
        "objective": res.objective,
        "sparse_support_size": support_of(&res.a_hat, zero_tol).len(),
        "lowrank_rank": rank_of(&res.b_hat)?,
    });
    emit_json(&report, args.report.as_deref())?;
    if !res.converged {
        return Err(Failure::Numerical(format!(
            "no convergence within {} iterations (primal residual {:.3e})",
            res.iterations, res.primal_residual
        )));
    }
    Ok(())
}

fn load_pair(pair: &PairArgs) -> Result<(DenseMatrix, DenseMatrix), Failure> {
    let a = load(&pair.sparse, &pair.format)?;
    let b = load(&pair.lowrank, &pair.format)?;
    if a.shape() != b.shape() {
        return Err(Failure::Usage(format!(
            "sparse is {:?} but low-rank is {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok((a, b))
}

fn run_analyze(args: AnalyzeArgs) -> CliResult {
    let (a, b) = load_pair(&args.pair)?;
    let opts = ReportOptions {
        zero_tol: args.pair.zero_tol,
        xi_samples: args.xi_samples,
        seed: args.seed,
        ..Default::default()
    };
    let report = incoherence_report(&a, &b, &opts)?;
    if args.json {
        return emit_json(&to_value(&report), None);
    }
    let opt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.6}"));
    let mut out = String::new();
    let _ = writeln!(out, "mu                  {:.6}", report.mu);
    let _ = writeln!(out, "deg_min / deg_max   {} / {}", report.deg_min, report.deg_max);
    let _ = writeln!(out, "inc                 {:.6}", report.inc);
    let _ = writeln!(out, "xi bounds           [{:.6}, {:.6}]", report.xi_lower, report.xi_upper);
    let _ = writeln!(out, "xi sampled lower    {}", opt(report.xi_sampled_lower));
    let _ = writeln!(out, "mu * xi_upper       {:.6}", report.uncertainty_product_upper);
    let _ = writeln!(out, "theorem condition   {:?}", report.theorem_condition);
    let _ = writeln!(out, "corollary condition {:?}", report.corollary_condition);
    let _ = writeln!(out, "gamma recommended   {}", opt(report.gamma_recommended));
    print!("{out}");
    Ok(())
}

fn run_certify(args: CertifyArgs) -> CliResult {
    let (a, b) = load_pair(&args.pair)?;
    let gamma = match args.gamma {
        Some(g) => g,
        None => {
            let opts = ReportOptions { zero_tol: args.pair.zero_tol, ..Default::default() };
            incoherence_report(&a, &b, &opts)?.gamma_recommended.ok_or_else(|| {
                Failure::Usage("no γ range is guaranteed for this pair; pass --gamma".into())
            })?
        }
    };
    let opts = CertificateOptions { zero_tol: args.pair.zero_tol, ..Default::default() };
    let cert = build_certificate(&a, &b, gamma, &opts)?;
    let mut value = to_value(&cert);
    if !args.with_q {
        if let Some(obj) = value.as_object_mut() {
            obj.remove("q_hat");
        }
    }
    emit_json(&value, args.report.as_deref())
}

fn parse_policy(s: &str) -> Result<GammaPolicy, Failure> {
    match s {
        "recommended" | "recommended-from-truth" => Ok(GammaPolicy::RecommendedFromTruth),
        "sweep" | "sweep-midpoint" => Ok(GammaPolicy::SweepMidpoint),
        _ => match s.strip_prefix("fixed:").map(str::parse::<f64>) {
            Some(Ok(g)) if g > 0.0 => Ok(GammaPolicy::Fixed(g)),
            _ => Err(Failure::Usage(format!(
                "bad --gamma-policy '{s}'; use recommended, sweep or fixed:<gamma>"
            ))),
        },
    }
}

fn run_phase(args: PhaseArgs) -> CliResult {
    let config = PhaseDiagramConfig {
        n: args.n,
        m_grid: args.m,
        k_grid: args.k,
        trials_per_cell: args.trials,
        gamma_policy: parse_policy(&args.gamma_policy)?,
        success_tol: args.success_tol,
        seed: args.seed,
        certify: args.certify,
        ..Default::default()
    };
    let diagram = phase_diagram(&config)?;
    let csv = diagram.to_csv();
    match &args.out {
        Some(p) => fs::write(p, &csv)?,
        None => print!("{csv}"),
    }
    if let Some(p) = &args.pgm {
        fs::write(p, diagram.to_pgm())?;
    }
    if let Some(p) = &args.details {
        emit_json(&to_value(&diagram), Some(p))?;
    }
    for cell in &diagram.cells {
        for o in cell.outcomes.iter().filter(|o| o.error.is_some()) {
            eprintln!("m={} k={} seed={}: {}", cell.m, cell.k, o.seed, o.error.as_deref().unwrap_or(""));
        }
    }
    Ok(())
}

fn run_sweep(args: SweepArgs) -> CliResult {
    let config = SweepConfig {
        eps: args.eps,
        t_grid: args.t_grid.values(),
        diff_threshold: args.threshold,
        ..Default::default()
    };
    let (c, truth) = match &args.input {
        Some(p) => (load(p, &args.format)?, None),
        None => {
            let (a, b) = random_pair(&EnsembleSpec::new(args.n, args.m, args.k, args.seed))?;
            (a.checked_add(&b)?, Some((a, b)))
        }
    };
    let res = gamma_sweep(&c, &config, truth.as_ref().map(|(a, b)| (a, b)))?;
    if let Some(p) = &args.out {
        let mut csv = String::from(if res.tol_t.is_some() { "t,diff_t,converged,tol_t\n" } else { "t,diff_t,converged\n" });
        for (i, t) in res.t_grid.iter().enumerate() {
            let _ = write!(csv, "{t},{:e},{}", res.diff_t[i], res.converged[i]);
            if let Some(tols) = &res.tol_t {
                let _ = write!(csv, ",{:e}", tols[i]);
            }
            csv.push('\n');
        }
        fs::write(p, csv)?;
    }
    let chosen_tol = match (&res.chosen, &truth) {
        (Some(r), Some((a, b))) => Some(slrd::experiments::tol_metric(&r.a_hat, &r.b_hat, a, b)?),
        _ => None,
    };
    let report = json!({
        "plateaus": to_value(&res.plateaus),
        "chosen_t": res.chosen_t,
        "chosen_gamma": res.chosen_gamma,
        "middle_t": res.middle_t(),
        "chosen_tol": chosen_tol,
    });
    emit_json(&report, args.report.as_deref())
}

fn run_rigidity(args: RigidityArgs) -> CliResult {
    let res = rigidity_demo(args.n, args.epsilon, args.seed, &SweepConfig::default())?;
    emit_json(&to_value(&res), args.report.as_deref())
}
