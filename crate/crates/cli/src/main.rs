use std::fmt;
use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use qval::analysis::{
    check_monotonicity, default_cluster_tol, holder_estimate, profile, rate_check, singular_clusters, RATE_NOISE_FLOOR,
};
use qval::dirichlet::{
    analytic_example, decompose_minimizer, minimize, resample_trace, DecomposeOptions,
    HomogeneousPiece, QFunction, SolveOptions,
};
use qval::embedding::{build_lambda_seeded, verify_lambda, EmbeddingBasis};
use qval::extension::{lipschitz_extend, GridQFunction};
use qval::io::{from_document, read_path, read_problem, to_document, MeshSpec, Pieces, Problem};
use qval::selection::SampledQPath;
use qval::QPoint;

#[derive(Parser)]
#[command(name = "qval", version, about = "Q-valued functions: Dirichlet minimizers, frequency analysis, embeddings and extensions")]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true, env = "QVAL_THREADS")]
    threads: Option<usize>,
    /// Seed for every randomized step.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Minimize the Dirichlet energy for a boundary trace.
    Solve(SolveArgs),
    /// Frequency profile (CSV r,D,H,I) of a solution, with an optional JSON summary.
    Analyze(AnalyzeArgs),
    /// Build the embedding basis for A_Q(R^n).
    Embed(EmbedArgs),
    /// Split a solution whose values form separated clusters.
    Decompose(DecomposeArgs),
    /// Extend a partially defined grid function to the whole grid.
    Extend(ExtendArgs),
    /// Write a preset problem document.
    Examples(ExamplesArgs),
}

#[derive(clap::Args)]
struct MeshArgs {
    /// Mesh kind; only disks are supported.
    #[arg(long, value_enum, default_value_t = MeshKind::Disk)]
    mesh: MeshKind,
    /// Number of rings of the disk mesh.
    #[arg(long, default_value_t = 64)]
    resolution: usize,
    #[arg(long, default_value_t = 1.0)]
    radius: f64,
    /// Ring k sits at radius R (k/N)^grading.
    #[arg(long, default_value_t = 1.0)]
    grading: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum MeshKind {
    Disk,
}

#[derive(clap::Args)]
struct SolveArgs {
    /// Problem document, or `-` for stdin.
    input: Option<String>,
    /// Boundary trace document; the mesh is then taken from the mesh options.
    #[arg(long, conflicts_with = "input")]
    boundary: Option<String>,
    #[command(flatten)]
    mesh: MeshArgs,
    /// Expected Q of the boundary trace.
    #[arg(long)]
    q: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long, default_value = "-")]
    out: String,
    /// Solver report (JSON).
    #[arg(long)]
    report: Option<PathBuf>,
    /// Per-iteration energies (CSV).
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(clap::Args)]
struct AnalyzeArgs {
    /// Solution document, or `-` for stdin.
    #[arg(long = "in", value_name = "INPUT")]
    input_flag: Option<String>,
    #[arg(conflicts_with = "input_flag")]
    input: Option<String>,
    /// Center of the profile; must be a mesh vertex.
    #[arg(long, default_value = "0,0", value_parser = parse_point)]
    center: [f64; 2],
    /// Radii as start:stop:step, stop included.
    #[arg(long, default_value = "0.1:0.9:0.05", value_parser = parse_range)]
    radii: Radii,
    #[arg(long, default_value = "-")]
    out: String,
    /// Write a JSON summary: monotonicity, Hölder estimate, singular clusters and rate fit.
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Frequency for the rate fit (default: I at the smallest radius).
    #[arg(long)]
    alpha: Option<f64>,
    /// Radius of the ball for the Hölder estimate.
    #[arg(long, default_value_t = 0.5)]
    delta: f64,
}

#[derive(clap::Args)]
struct EmbedArgs {
    #[arg(long)]
    q: usize,
    #[arg(long)]
    n: usize,
    /// Check the separation constant on this many random trial sets.
    #[arg(long)]
    verify: Option<usize>,
    #[arg(long, default_value = "-")]
    out: String,
}

#[derive(clap::Args)]
struct DecomposeArgs {
    /// Solution document, or `-` for stdin.
    input: String,
    /// Also require the quantitative closeness hypothesis.
    #[arg(long)]
    strict: bool,
    #[arg(long, default_value = "-")]
    out: String,
}

#[derive(clap::Args)]
struct ExtendArgs {
    /// Grid function document, or `-` for stdin.
    input: String,
    #[arg(long, default_value = "-")]
    out: String,
}

#[derive(clap::Args)]
struct ExamplesArgs {
    #[arg(value_enum)]
    name: Preset,
    #[command(flatten)]
    mesh: MeshArgs,
    /// Q for the harmonic and constant presets.
    #[arg(long, default_value_t = 2)]
    q: usize,
    #[arg(long, default_value = "-")]
    out: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// Σ_{z²=w} ⟦z⟧, Q = 2.
    Sqrt,
    /// Σ_{z³=w} ⟦z⟧, Q = 3.
    Cbrt,
    /// Q⟦w⟧.
    Harmonic,
    /// Q⟦(1, 0)⟧.
    Constant,
}

/// Marks a run that finished but did not meet its convergence criterion.
#[derive(Debug)]
struct NotConverged(String);

impl fmt::Display for NotConverged {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for NotConverged {}

fn parse_point(s: &str) -> Result<[f64; 2], String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err(format!("expected x,y, got {s:?}"));
    }
    let x = parts[0].trim().parse::<f64>().map_err(|e| e.to_string())?;
    let y = parts[1].trim().parse::<f64>().map_err(|e| e.to_string())?;
    Ok([x, y])
}

#[derive(Clone)]
struct Radii(Vec<f64>);

fn parse_range(s: &str) -> Result<Radii, String> {
    let parts: Vec<f64> = s
        .split(':')
        .map(|p| p.trim().parse::<f64>().map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    let [a, b, h] = parts[..] else {
        return Err(format!("expected start:stop:step, got {s:?}"));
    };
    if !(a > 0.0 && b >= a && h > 0.0) {
        return Err("need 0 < start <= stop and step > 0".into());
    }
    let count = ((b - a) / h + 1e-9).floor() as usize;
    Ok(Radii((0..=count).map(|k| a + k as f64 * h).collect()))
}

fn read_input(path: &str) -> Result<String> {
    let mut s = String::new();
    if path == "-" {
        io::stdin().read_to_string(&mut s).context("reading stdin")?;
    } else {
        s = fs::read_to_string(path).with_context(|| format!("reading {path}"))?;
    }
    Ok(s)
}

fn write_output(path: &str, text: &str) -> Result<()> {
    if path == "-" {
        let mut out = io::stdout().lock();
        out.write_all(text.as_bytes())?;
        if !text.ends_with('\n') {
            out.write_all(b"\n")?;
        }
        out.flush()?;
    } else {
        let mut text = text.to_string();
        if !text.ends_with('\n') {
            text.push('\n');
        }
        fs::write(path, text).with_context(|| format!("writing {path}"))?;
    }
    Ok(())
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    write_output(&path.to_string_lossy(), text)
}

fn mesh_spec(m: &MeshArgs) -> MeshSpec {
    match m.mesh {
        MeshKind::Disk => MeshSpec::Disk { radius: m.radius, resolution: m.resolution, grading: m.grading },
    }
}

fn cmd_solve(args: &SolveArgs, seed: u64) -> Result<()> {
    let problem = match (&args.input, &args.boundary) {
        (Some(input), None) => read_problem(&read_input(input)?)?,
        (None, Some(b)) => {
            let trace = read_path(&read_input(b)?)?;
            Problem { mesh: mesh_spec(&args.mesh), boundary: trace }
        }
        _ => bail!(qval::Error::InvalidInput("give a problem document or --boundary".into())),
    };
    if let Some(q) = args.q {
        if problem.boundary.q() != q {
            bail!(qval::Error::InvalidInput(format!("--q {q} but the boundary has Q = {}", problem.boundary.q())));
        }
    }
    let mesh = Arc::new(problem.mesh.build()?);
    let trace = if problem.boundary.len() == mesh.boundary_loop().len() {
        problem.boundary
    } else {
        resample_trace(&problem.boundary, &mesh)?
    };
    let mut opts = SolveOptions { seed, ..SolveOptions::default() };
    if let Some(t) = args.tol {
        opts.tol = t;
    }
    if let Some(m) = args.max_iters {
        opts.max_iters = m;
    }
    let (f, report) = minimize(mesh, &trace, &opts)?;
    write_output(&args.out, &to_document("qfunction", &f)?)?;
    if let Some(p) = &args.report {
        write_file(p, &to_document("solve_report", &report)?)?;
    }
    if let Some(p) = &args.history {
        write_file(p, &report.to_csv())?;
    }
    eprintln!("energy {:.12e} after {} iterations", report.final_energy, report.iterations);
    if !report.converged {
        bail!(NotConverged(format!("solver stopped after {} iterations without converging", report.iterations)));
    }
    Ok(())
}

fn cmd_analyze(args: &AnalyzeArgs) -> Result<()> {
    let input = args.input_flag.as_deref().or(args.input.as_deref()).unwrap_or("-");
    let f: QFunction = from_document("qfunction", &read_input(input)?)?;
    let mesh = f.mesh();
    let v = mesh.nearest_vertex(args.center);
    let p = mesh.vertex(v);
    if (p[0] - args.center[0]).hypot(p[1] - args.center[1]) > 1e-9 {
        bail!(qval::Error::InvalidInput(format!("center {:?} is not a mesh vertex", args.center)));
    }
    let prof = profile(&f, p, &args.radii.0)?;
    write_output(&args.out, &prof.to_csv())?;
    if let Some(path) = &args.summary {
        let mono = check_monotonicity(&prof, 5.0 * prof.mesh_size);
        let holder = holder_estimate(&f, p, args.delta)?;
        let clusters = singular_clusters(&f, default_cluster_tol(&f))?;
        let alpha = args.alpha.or_else(|| prof.i.iter().flatten().next().copied());
        let rate = match alpha {
            Some(a) => Some(rate_check(&prof, a, RATE_NOISE_FLOOR)?),
            None => None,
        };
        let summary = serde_json::json!({
            "profile": prof,
            "monotonicity": mono,
            "holder": holder,
            "singular_clusters": clusters,
            "rate": rate,
        });
        write_file(path, &to_document("analysis", &summary)?)?;
    }
    Ok(())
}

fn cmd_embed(args: &EmbedArgs, seed: u64) -> Result<()> {
    let basis: EmbeddingBasis = build_lambda_seeded(args.n, args.q, seed)?;
    write_output(&args.out, &to_document("basis", &basis)?)?;
    if let Some(trials) = args.verify {
        let check = verify_lambda(&basis, trials, seed);
        let verdict = if check.pass { "pass" } else { "FAIL" };
        eprintln!(
            "verify: {verdict} ({trials} trials, worst margin {:.6e}, alpha {:.6e})",
            check.worst_margin, basis.alpha
        );
        if !check.pass {
            bail!(NotConverged("separation constant not attained".into()));
        }
    }
    Ok(())
}

fn cmd_decompose(args: &DecomposeArgs) -> Result<()> {
    let f: QFunction = from_document("qfunction", &read_input(&args.input)?)?;
    let pieces = decompose_minimizer(&f, &DecomposeOptions { strict_hypothesis: args.strict })?;
    eprintln!("{} pieces", pieces.len());
    write_output(&args.out, &to_document("pieces", &Pieces { pieces })?)
}

fn cmd_extend(args: &ExtendArgs) -> Result<()> {
    let f: GridQFunction = from_document("grid_qfunction", &read_input(&args.input)?)?;
    let g = lipschitz_extend(&f)?;
    let (lin, lout) = (f.lipschitz(), g.grid_lipschitz());
    eprintln!("lipschitz: input {lin:.6e}, output {lout:.6e}");
    write_output(&args.out, &to_document("grid_qfunction", &g)?)
}

fn cmd_examples(args: &ExamplesArgs) -> Result<()> {
    let spec = mesh_spec(&args.mesh);
    let mesh = Arc::new(spec.build()?);
    let identity = |k: usize| HomogeneousPiece { k, l: [vec![1.0, 0.0], vec![0.0, 1.0]] };
    let boundary = match args.name {
        Preset::Sqrt => analytic_example(1, 2, 0, &[identity(1)], Arc::clone(&mesh))?.1,
        Preset::Cbrt => analytic_example(1, 3, 0, &[identity(1)], Arc::clone(&mesh))?.1,
        Preset::Harmonic => analytic_example(1, 1, 0, &[identity(args.q)], Arc::clone(&mesh))?.1,
        Preset::Constant => {
            if args.q == 0 {
                bail!(qval::Error::InvalidInput("q must be positive".into()));
            }
            let value = QPoint::repeated(args.q, &[1.0, 0.0]);
            let params: Vec<f64> = mesh
                .boundary_loop()
                .iter()
                .map(|&v| {
                    let p = mesh.vertex(v);
                    p[1].atan2(p[0]).rem_euclid(std::f64::consts::TAU)
                })
                .collect();
            let values = vec![value; params.len()];
            SampledQPath::circle(params, values)?
        }
    };
    write_output(&args.out, &to_document("problem", &Problem { mesh: spec, boundary })?)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<NotConverged>().is_some() {
        return 3;
    }
    match err.downcast_ref::<qval::Error>() {
        Some(qval::Error::NonConvergence { .. }) | Some(qval::Error::Solver(_)) => 3,
        _ => 2,
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            bail!(qval::Error::InvalidInput("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| anyhow!("thread pool: {e}"))?;
    }
    match &cli.command {
        Command::Solve(a) => cmd_solve(a, cli.seed),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Embed(a) => cmd_embed(a, cli.seed),
        Command::Decompose(a) => cmd_decompose(a),
        Command::Extend(a) => cmd_extend(a),
        Command::Examples(a) => cmd_examples(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
