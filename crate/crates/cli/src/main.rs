use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use pkconvex::io::{read_field_csv, write_json, write_outputs};
use pkconvex::solver::{continuation_solve, homogeneous_solve, uniform_steps, SolverConfig};
use pkconvex::verify::{
    audit_field, audit_solution, format_table, run_derivative_checks, run_exterior_suite, run_symfun_suite,
    spheroid_convergence,
};
use pkconvex::{Discretization, JacobianMode, ProblemSpec, Regime, SphereGrid};

const MIN_RES: usize = 16;
const MAX_RES: usize = 128;

/// Exit code for a run that finished but did not converge or failed a check.
const EXIT_UNCONVERGED: u8 = 2;

#[derive(Parser)]
#[command(name = "pkconvex", version, about = "Prescribed (p,k)-curvature solvers on star-shaped hypersurfaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a nonhomogeneous problem along the continuity path.
    Solve(SolveArgs),
    /// Solve a homogeneous (eigenvalue) problem along the regularisation path.
    Homogeneous(SolveArgs),
    /// Run the seeded property suites and derivative checks.
    Verify(VerifyArgs),
    /// Audit a stored field against a problem.
    Audit(AuditArgs),
    /// Measure the curvature convergence order of the sphere discretisation.
    GeometryCheck(GeometryArgs),
}

#[derive(Args)]
struct ProblemArgs {
    /// Problem JSON file, or a catalog name (e.g. sphere_const).
    #[arg(long)]
    problem: String,
    /// Grid points per angle, in [16, 128].
    #[arg(long, default_value_t = 16)]
    res: usize,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Output directory for report.json, solution.csv, trace.csv and audits.json.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Solver configuration JSON; the flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Residual tolerance (sup-norm).
    #[arg(long)]
    tol: Option<f64>,
    /// Continuation steps: a count m (uniform 1/m, …, 1) or a comma-separated list.
    #[arg(long)]
    t_steps: Option<String>,
    /// Comma-separated decreasing regularisation exponents.
    #[arg(long)]
    eps_schedule: Option<String>,
    #[arg(long, value_enum)]
    jacobian: Option<JacobianArg>,
    /// Accepted for symmetry with `verify`; solves are deterministic.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum JacobianArg {
    Exact,
    Frozen,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Also write verify.json into this directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AuditArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Field CSV with a `u` column (e.g. a previous solution.csv).
    #[arg(long)]
    field: PathBuf,
    /// Eigenvalue for homogeneous problems; read from report.json next to
    /// the field when omitted.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    /// Also write audits.json into this directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GeometryArgs {
    /// Coarsest resolution; the check also runs at 2x and 4x.
    #[arg(long, default_value_t = 16)]
    res: usize,
    /// Flattening ε of the spheroid ρ = (1 + ε y₀²)^{-1/2}.
    #[arg(long, default_value_t = 0.3)]
    flattening: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Solve(args) => solve(args, false),
        Command::Homogeneous(args) => solve(args, true),
        Command::Verify(args) => verify(args),
        Command::Audit(args) => audit(args),
        Command::GeometryCheck(args) => geometry(args),
    }
}

/// Loads a catalog problem or a JSON file; relative table paths resolve
/// against the file's directory.
fn load_problem(arg: &str) -> Result<ProblemSpec> {
    let path = Path::new(arg);
    let spec = if !path.exists() {
        ProblemSpec::catalog(arg).ok_or_else(|| {
            anyhow!(
                "no problem file `{arg}` and no catalog entry of that name (catalog: {})",
                ProblemSpec::catalog_names().join(", ")
            )
        })?
    } else {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {arg}"))?;
        let spec: ProblemSpec = serde_json::from_str(&text)
            .map_err(|e| anyhow!("{arg}:{}:{}: {e}", e.line(), e.column()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        ProblemSpec {
            f: spec.f.resolve_table(base)?,
            ..spec
        }
    };
    spec.validate()?;
    Ok(spec)
}

fn discretize(args: &ProblemArgs) -> Result<Discretization> {
    if !(MIN_RES..=MAX_RES).contains(&args.res) {
        bail!("--res must lie in [{MIN_RES}, {MAX_RES}], got {}", args.res);
    }
    let spec = load_problem(&args.problem)?;
    for w in spec.hypothesis_warnings() {
        eprintln!("warning: {w}");
    }
    let grid = Arc::new(SphereGrid::new(spec.n, args.res)?);
    Ok(Discretization::new(spec, grid)?)
}

fn parse_list(flag: &str, text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|e| anyhow!("{flag}: `{s}`: {e}")))
        .collect()
}

fn solver_config(args: &SolveArgs) -> Result<SolverConfig> {
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).map_err(|e| anyhow!("{}:{}:{}: {e}", path.display(), e.line(), e.column()))?
        }
        None => SolverConfig::default(),
    };
    if let Some(tol) = args.tol {
        config.newton_tol = tol;
        config.path_tol = config.path_tol.max(tol);
    }
    if let Some(t) = &args.t_steps {
        config.t_steps = match t.trim().parse::<usize>() {
            Ok(m) if m > 0 => uniform_steps(m),
            _ => parse_list("--t-steps", t)?,
        };
    }
    if let Some(e) = &args.eps_schedule {
        config.eps_schedule = parse_list("--eps-schedule", e)?;
    }
    match args.jacobian {
        Some(JacobianArg::Exact) => config.jacobian = JacobianMode::Exact,
        Some(JacobianArg::Frozen) => config.jacobian = JacobianMode::Frozen,
        None => {}
    }
    config.validate()?;
    Ok(config)
}

fn solve(args: SolveArgs, homogeneous: bool) -> Result<ExitCode> {
    let disc = discretize(&args.problem)?;
    let config = solver_config(&args)?;
    match (homogeneous, disc.spec().regime()) {
        (false, Regime::Homogeneous) => bail!("-b-q-k+l = 0: use the `homogeneous` subcommand"),
        (true, Regime::Nonhomogeneous) => bail!("-b-q-k+l > 0: use the `solve` subcommand"),
        _ => {}
    }
    let report = if homogeneous {
        homogeneous_solve(&disc, &config)?
    } else {
        continuation_solve(&disc, &config)?
    };
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    let audits = audit_solution(&report, &disc, config.newton_tol);
    if let Err(e) = write_outputs(&args.out, &disc, &report, &audits) {
        eprintln!("error: {e}");
        return Ok(ExitCode::from(EXIT_UNCONVERGED));
    }
    let s = report.summary();
    println!(
        "{}: {} after {} Newton iterations, residual {:e}",
        if report.converged { "converged" } else { "not converged" },
        report.message,
        report.newton_iterations,
        report.residual
    );
    println!("rho in [{}, {}], mean {}", s.min_rho, s.max_rho, s.mean_rho);
    if let Some(g) = report.gamma {
        println!("gamma = {g}");
    }
    println!("wrote {}", args.out.display());
    Ok(if report.converged {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_UNCONVERGED)
    })
}

fn verify(args: VerifyArgs) -> Result<ExitCode> {
    if args.trials == 0 {
        bail!("--trials must be positive");
    }
    let mut reports = run_symfun_suite(args.trials, args.seed);
    reports.extend(run_exterior_suite(args.trials, args.seed));
    reports.extend(run_derivative_checks(args.trials.min(200), args.seed));
    print!("{}", format_table(&reports));
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        write_json(&dir.join("verify.json"), &reports)?;
    }
    Ok(if reports.iter().all(|r| r.pass) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_UNCONVERGED)
    })
}

/// `gamma` from a `report.json` beside the field file.
fn gamma_beside(field: &Path) -> Option<f64> {
    let report = field.parent()?.join("report.json");
    let value: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(report).ok()?).ok()?;
    value.get("gamma")?.as_f64()
}

fn audit(args: AuditArgs) -> Result<ExitCode> {
    let disc = discretize(&args.problem)?;
    let field = read_field_csv(&args.field, disc.grid().clone())?;
    let homogeneous = disc.spec().regime() == Regime::Homogeneous && disc.spec().epsilon == 0.0;
    let gamma = args.gamma.or_else(|| gamma_beside(&args.field));
    if homogeneous && gamma.is_none() {
        bail!("homogeneous problem: pass --gamma or keep report.json next to the field");
    }
    let audits = audit_field(&disc, &field, gamma, args.tol.unwrap_or(SolverConfig::default().newton_tol));
    print!("{}", format_table(&audits.checks));
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        write_json(&dir.join("audits.json"), &audits)?;
    }
    Ok(if audits.pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_UNCONVERGED)
    })
}

fn geometry(args: GeometryArgs) -> Result<ExitCode> {
    let resolutions = [args.res, 2 * args.res, 4 * args.res];
    let g = spheroid_convergence(&resolutions, args.flattening)?;
    println!("{:>6} {:>14} {:>8}", "res", "max error", "order");
    for (i, (res, err)) in g.resolutions.iter().zip(&g.errors).enumerate() {
        let order = if i == 0 { "-".to_string() } else { format!("{:.3}", g.orders[i - 1]) };
        println!("{res:>6} {err:>14.6e} {order:>8}");
    }
    let worst = g.orders.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(if worst >= 1.9 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_UNCONVERGED)
    })
}
