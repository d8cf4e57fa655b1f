//! `pmm`: run the Pareto majorization-minimization solver, the PNG baseline
//! and the lattice oracle on JSON problem files.

mod plot;

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use pareto_mm::baselines::{png_descent, PngConfig, PngStatus};
use pareto_mm::instances::{self, seeded_rng, Family};
use pareto_mm::oracle::{grid_search_preference_opt, write_grid_csv};
use pareto_mm::pmm::{pmm_solve, IterateTrace, SolverConfig, Status};
use pareto_mm::problem::ProblemInstance;
use pareto_mm::problem_file::ProblemFile;
use pareto_mm::simplex::SimplexPoint;
use serde_json::json;

#[derive(Parser)]
#[command(name = "pmm", version, about = "Preference optimization over Pareto sets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the majorization-minimization solver until the iterate is certified.
    Solve(SolveArgs),
    /// Run the PNG baseline dynamics from a starting point.
    Png(PngArgs),
    /// Evaluate the preference over the simplex lattice.
    Oracle(OracleArgs),
    /// Draw the Pareto set of a two-dimensional problem as SVG.
    Plot(PlotArgs),
    /// Write a named or random problem file.
    Generate(GenerateArgs),
}

#[derive(clap::Args)]
struct SolveArgs {
    #[arg(long)]
    problem: PathBuf,
    #[arg(long)]
    eps0: f64,
    /// Inner residual target; must not exceed eps0^2.
    #[arg(long)]
    eps: f64,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long)]
    max_outer: Option<usize>,
    /// Starting weights, comma separated. Defaults to uniform.
    #[arg(long, value_delimiter = ',')]
    beta0: Option<Vec<f64>>,
    /// Per-iteration CSV trace.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(clap::Args)]
struct PngArgs {
    #[arg(long)]
    problem: PathBuf,
    #[arg(long)]
    c: f64,
    #[arg(long)]
    eps_stop: f64,
    /// Starting point, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    x0: Vec<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Trajectory CSV with columns `k,x_0..x_{d-1}`.
    #[arg(long)]
    trajectory: Option<PathBuf>,
}

#[derive(clap::Args)]
struct OracleArgs {
    #[arg(long)]
    problem: PathBuf,
    /// Lattice denominator.
    #[arg(long)]
    resolution: usize,
    /// CSV with one `beta_0..beta_{n-1},f0` row per lattice point.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct PlotArgs {
    #[arg(long)]
    problem: PathBuf,
    #[arg(long, default_value_t = 20)]
    resolution: usize,
    #[arg(long)]
    svg: PathBuf,
    /// Trace or trajectory CSVs whose `x_0,x_1` paths and endpoints are drawn.
    #[arg(long)]
    overlay: Vec<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Shared,
    Quadratic,
    Softplus,
    Png,
    IdentityPair,
    ThreeQuadratics,
}

#[derive(clap::Args)]
struct GenerateArgs {
    #[arg(long, value_enum)]
    family: Kind,
    /// Number of objectives (random families only).
    #[arg(long, default_value_t = 2)]
    n: usize,
    /// Dimension (random families only).
    #[arg(long, default_value_t = 2)]
    d: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// How a command finished when it did not fail outright.
enum Finish {
    Done,
    /// Budget exhausted or the PNG system is infeasible: exit code 2.
    Incomplete,
}

fn load_problem(path: &Path) -> anyhow::Result<ProblemInstance> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file = ProblemFile::from_json(&text).with_context(|| format!("{}", path.display()))?;
    file.build().with_context(|| format!("{}", path.display()))
}

/// Writes through a temporary file in the target directory, then renames it
/// into place so readers never see a partial file.
fn write_atomic(path: &Path, body: impl FnOnce(&mut dyn Write) -> anyhow::Result<()>) -> anyhow::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating a file in {}", dir.display()))?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        body(&mut w)?;
        w.flush()?;
    }
    // Temporary files are created owner-only; outputs should be ordinary files.
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file().set_permissions(fs::Permissions::from_mode(0o644))?;
    }
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn write_trace(path: &Path, trace: &IterateTrace, n: usize, d: usize) -> anyhow::Result<()> {
    write_atomic(path, |w| Ok(trace.write_csv(n, d, w)?))
}

fn cmd_solve(args: SolveArgs) -> anyhow::Result<Finish> {
    let problem = load_problem(&args.problem)?;
    let mut config = SolverConfig::new(args.eps0, args.eps)?;
    config.alpha = args.alpha;
    if let Some(max) = args.max_outer {
        config.max_outer = max;
    }
    config.validate()?;
    let init = match args.beta0 {
        Some(w) => {
            let beta = SimplexPoint::new(w).context("--beta0")?;
            if beta.len() != problem.num_objectives() {
                bail!("--beta0 has {} weights but the problem has {} objectives", beta.len(), problem.num_objectives());
            }
            Some((problem.objectives().weighted_minimizer(&beta), beta))
        }
        None => None,
    };
    let (n, d) = (problem.num_objectives(), problem.dim());
    let out = match pmm_solve(&problem, &config, init) {
        Ok(out) => out,
        Err(failure) => {
            if let Some(path) = &args.trace {
                write_trace(path, &failure.trace, n, d)?;
            }
            return Err(failure.into());
        }
    };
    if let Some(path) = &args.trace {
        write_trace(path, &out.trace, n, d)?;
    }
    let certified = out.status == Status::Certified;
    let line = json!({
        "status": if certified { "certified" } else { "budget_exceeded" },
        "steps": out.steps(),
        "x": out.point.x.as_slice(),
        "beta": out.point.beta.to_vec(),
        "f0": problem.preference().value(&out.point.x),
        "certificate": out.certificate,
    });
    println!("{line}");
    Ok(if certified { Finish::Done } else { Finish::Incomplete })
}

fn cmd_png(args: PngArgs) -> anyhow::Result<Finish> {
    let problem = load_problem(&args.problem)?;
    if args.x0.len() != problem.dim() {
        bail!("--x0 has {} coordinates but the problem has dimension {}", args.x0.len(), problem.dim());
    }
    let mut config = PngConfig::new(args.c, args.eps_stop)?;
    if let Some(max) = args.max_iters {
        config.max_iters = max;
    }
    config.validate()?;
    let f0 = problem.preference();
    let run = match png_descent(problem.objectives(), f0.as_ref(), DVector::from_vec(args.x0), &config) {
        Ok(run) => run,
        Err(pareto_mm::Error::Infeasible(msg)) => {
            eprintln!("png: no direction decreases every objective at rate c = {}: {msg}", args.c);
            return Ok(Finish::Incomplete);
        }
        Err(e) => return Err(e.into()),
    };
    if let Some(path) = &args.trajectory {
        write_atomic(path, |w| {
            let mut csv = csv::Writer::from_writer(w);
            let mut header = vec!["k".to_string()];
            header.extend((0..problem.dim()).map(|i| format!("x_{i}")));
            csv.write_record(&header)?;
            for (k, x) in run.trajectory.iter().enumerate() {
                let mut row = vec![k.to_string()];
                row.extend(x.iter().map(f64::to_string));
                csv.write_record(&row)?;
            }
            csv.flush()?;
            Ok(())
        })?;
    }
    let stationary = run.status == PngStatus::Stationary;
    let test = &run.last_test;
    let line = json!({
        "status": if stationary { "stationary" } else { "budget_exceeded" },
        "steps": run.trajectory.len() - 1,
        "x": run.point.as_slice(),
        "f0": f0.value(&run.point),
        "pareto_residual": test.pareto_residual,
        "angle": test.angle,
        "lambda": test.lambda,
    });
    println!("{line}");
    Ok(if stationary { Finish::Done } else { Finish::Incomplete })
}

fn cmd_oracle(args: OracleArgs) -> anyhow::Result<Finish> {
    let problem = load_problem(&args.problem)?;
    let grid = grid_search_preference_opt(&problem, args.resolution)?;
    if let Some(path) = &args.out {
        write_atomic(path, |w| {
            write_grid_csv(&problem, args.resolution, w)?;
            Ok(())
        })?;
    }
    let line = json!({
        "points": grid.points,
        "best_beta": grid.best.beta.to_vec(),
        "best_x": grid.best.x.as_slice(),
        "f_min": grid.f_min,
        "f_max": grid.f_max,
    });
    println!("{line}");
    Ok(Finish::Done)
}

fn cmd_plot(args: PlotArgs) -> anyhow::Result<Finish> {
    let problem = load_problem(&args.problem)?;
    if problem.dim() != 2 {
        bail!("unsupported dimension: plots need d = 2, the problem has d = {}", problem.dim());
    }
    let overlays = args
        .overlay
        .iter()
        .map(|p| plot::Overlay::read(p))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let svg = plot::render(&problem, args.resolution, &overlays)?;
    write_atomic(&args.svg, |w| Ok(w.write_all(svg.as_bytes())?))?;
    Ok(Finish::Done)
}

fn cmd_generate(args: GenerateArgs) -> anyhow::Result<Finish> {
    let file = match args.family {
        Kind::Png => instances::png_example(),
        Kind::IdentityPair => instances::identity_pair(),
        Kind::ThreeQuadratics => instances::three_quadratics(),
        random => {
            if args.n == 0 || args.d == 0 {
                bail!("--n and --d must be positive");
            }
            let family = match random {
                Kind::Shared => Family::SharedQuadratic,
                Kind::Quadratic => Family::Quadratic,
                _ => Family::Softplus,
            };
            family.generate(&mut seeded_rng(args.seed), args.n, args.d)
        }
    };
    let text = file.to_json();
    match &args.out {
        Some(path) => write_atomic(path, |w| Ok(writeln!(w, "{text}")?))?,
        None => println!("{text}"),
    }
    Ok(Finish::Done)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PMM_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Png(a) => cmd_png(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Plot(a) => cmd_plot(a),
        Command::Generate(a) => cmd_generate(a),
    };
    match result {
        Ok(Finish::Done) => ExitCode::SUCCESS,
        Ok(Finish::Incomplete) => ExitCode::from(2),
        Err(e) => {
            let _ = writeln!(io::stderr(), "error: {e:#}");
            ExitCode::from(1)
        }
    }
}
