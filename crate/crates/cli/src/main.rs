use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use netdirichlet::config::RunConfig;
use netdirichlet::energy::assemble_form;
use netdirichlet::graph::{build_graph, discretize_function};
use netdirichlet::harness::convergence::default_ladder;
use netdirichlet::harness::{run_convergence, verify_suite, ConvergenceOptions, Fault};
use netdirichlet::io::{read_probes, Writer};
use netdirichlet::net::build_full;
use netdirichlet::project::ProjectedField;
use netdirichlet::solver::{solve, SolveStatus};
use netdirichlet::Error;

const CONFIG_HELP: &str = "\
CONFIGURATION (TOML; unknown keys are rejected, `--set key=value` overrides any key)

  name = \"\"                               label copied into reports
  [space]
  kind             (required)  euclidean | weighted_euclidean | koranyi
  weights          none        axis weights, required for weighted_euclidean
  lo, hi           (required)  corners of the bounding box X, 1 to 3 coordinates
  measure          lebesgue    { kind = \"lebesgue\" }
                               { kind = \"linear\", offset, slope = [..] }  density offset + slope·(x − centre)
                               { kind = \"gaussian\", amplitude, center = [..], sigma }
  domain           (required)  { kind = \"box\", lo = [..], hi = [..] } | { kind = \"ball\", center = [..], radius }
  boundary         zero        boundary data f: { kind = \"zero\" } | \"constant\" {value}
                               | \"affine\" {gradient, offset} | \"saddle\" | \"sin_cos\" | \"coordinate\" {axis}
  reference        none        analytic solution for error columns, same forms as boundary
  mc_rel_tol       1e-3        relative standard error target of Monte Carlo ball measures
  mc_seed          0
  [net]
  r                none        scale for net, solve, project, verify
  r_ladder         none        strictly decreasing scales for converge; default r, r/2, r/4, r/8,
                               or four halvings from the largest scale with interior vertices
  seed             0
  margin_factor    20          vertex is interior when its distance to X \\ Ω is at least margin_factor·r
  extra_candidates 256         random candidates added to the candidate grid
  [solver]
  tol              1e-10       relative residual target
  max_iter         0           0 selects 20·sqrt(n) + 200
  [project]
  kind             whitney     whitney | path_integral
  lattice_pitch_factor 0.125   path-integral lattice pitch in units of r (at most 1/8)
  cube_depth_cap   40          Whitney cube refinement depth
  [io]
  out_dir          \"out\"
  formats          [\"csv\", \"json\"]  table formats; JSON sidecars are always written
  [checks]
  quad_n 16, probes 1000, fields 20, trials 100, lipschitz_pairs 1000,
  lipschitz_cap 200, fd_pitch_factor 0.0625, dense_limit 500, seed 0

EXIT STATUS
  0 success, 1 usage or configuration error, 2 numerical failure, 3 verification failures";

#[derive(Parser)]
#[command(name = "netdirichlet", version, about = "Dirichlet problems on metric measure spaces via net graph energies")]
#[command(after_long_help = CONFIG_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML configuration file.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Override a configuration key, e.g. `--set net.r=0.05` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory (overrides io.out_dir).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads for parallel evaluation.
    #[arg(long, value_name = "N")]
    workers: Option<usize>,
    /// Seed for the net and the checks (overrides net.seed and checks.seed).
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Build the net and its graph; write net.csv, edges.csv and sidecars.
    #[command(after_long_help = CONFIG_HELP)]
    Net(Common),
    /// Assemble and solve the discrete problem; write the form and solution.
    #[command(after_long_help = CONFIG_HELP)]
    Solve(Common),
    /// Evaluate the projection of the solution at probe points.
    #[command(after_long_help = CONFIG_HELP)]
    Project {
        #[command(flatten)]
        common: Common,
        /// Comma-separated probe coordinates, one point per row.
        #[arg(long, value_name = "PATH")]
        probes: PathBuf,
    },
    /// Run the pipeline over a ladder of scales; write report.json and summary.csv.
    #[command(after_long_help = CONFIG_HELP)]
    Converge(Common),
    /// Run every module check at scale net.r and print a pass/fail table.
    #[command(after_long_help = CONFIG_HELP)]
    Verify {
        #[command(flatten)]
        common: Common,
        /// Corrupt one stage on purpose to see the suite catch it.
        #[arg(long, value_name = "FAULT", value_parser = ["negative_weight", "asymmetric_form"])]
        inject_fault: Option<String>,
    },
    /// Print the configuration with every default filled in.
    #[command(after_long_help = CONFIG_HELP)]
    ShowConfig(Common),
}

enum Failure {
    Error(Error),
    Verification(usize),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Usage(_) | Error::Config(_) | Error::Io(_) | Error::Json(_) | Error::Csv(_) => 1,
        Error::Accuracy(_) | Error::MonteCarlo { .. } | Error::Numerical(_) => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
        Err(Failure::Verification(n)) => {
            eprintln!("{n} asserted check(s) failed");
            ExitCode::from(3)
        }
    }
}

fn load(common: &Common) -> Result<(RunConfig, PathBuf), Error> {
    let mut cfg = RunConfig::load(&common.config, &common.set)?;
    if let Some(s) = common.seed {
        cfg.net.seed = s;
        cfg.checks.seed = s;
    }
    if let Some(n) = common.workers {
        if n == 0 {
            return Err(Error::Usage("--workers must be positive".into()));
        }
        // fails only if a pool already exists, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let out = common.out.clone().unwrap_or_else(|| cfg.io.out_dir.clone());
    Ok((cfg, out))
}

fn run(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Net(c) => cmd_net(&c),
        Command::Solve(c) => cmd_solve(&c),
        Command::Project { common, probes } => cmd_project(&common, &probes),
        Command::Converge(c) => cmd_converge(&c),
        Command::Verify { common, inject_fault } => cmd_verify(&common, inject_fault.as_deref()),
        Command::ShowConfig(c) => {
            let (cfg, _) = load(&c)?;
            print!("{}", cfg.to_toml());
            Ok(())
        }
    }
}

fn cmd_net(c: &Common) -> Result<(), Failure> {
    let (cfg, out) = load(c)?;
    let space = cfg.build_space()?;
    let net = build_full(&space, cfg.r()?, cfg.net.seed, &cfg.net_options())?;
    let graph = build_graph(&space, &net);
    let w = Writer::new(&out, &cfg.io.formats)?;
    w.net(&space, &net)?;
    w.graph(&graph)?;
    println!(
        "vertex_count={} interior_count={} edge_count={} max_degree={}",
        net.len(),
        net.interior_count(),
        graph.edge_count(),
        graph.max_degree()
    );
    Ok(())
}

fn cmd_solve(c: &Common) -> Result<(), Failure> {
    let (cfg, out) = load(c)?;
    let space = cfg.build_space()?;
    let net = build_full(&space, cfg.r()?, cfg.net.seed, &cfg.net_options())?;
    let graph = build_graph(&space, &net);
    let f = &cfg.space.boundary;
    let fr = discretize_function(&space, &net, |p| f.eval(p), cfg.checks.quad_n, cfg.net.seed)?;
    let form = assemble_form(&graph, &net, &fr)?;
    let sol = solve(&form, &cfg.solver_options())?;
    let w = Writer::new(&out, &cfg.io.formats)?;
    w.net(&space, &net)?;
    w.graph(&graph)?;
    w.form(&form)?;
    w.solution(&space, &net, &sol)?;
    println!(
        "unknowns={} iterations={} relative_residual={:e} energy={} status={:?}",
        form.unknowns(),
        sol.iterations,
        sol.relative_residual,
        sol.energy_value,
        sol.status
    );
    if sol.status != SolveStatus::Converged {
        return Err(Error::Numerical(format!("solver stopped with status {:?}", sol.status)).into());
    }
    Ok(())
}

fn cmd_project(c: &Common, probes: &Path) -> Result<(), Failure> {
    let (cfg, out) = load(c)?;
    let space = cfg.build_space()?;
    let points = read_probes(probes, space.dim())?;
    let net = build_full(&space, cfg.r()?, cfg.net.seed, &cfg.net_options())?;
    let graph = build_graph(&space, &net);
    let f = &cfg.space.boundary;
    let fr = discretize_function(&space, &net, |p| f.eval(p), cfg.checks.quad_n, cfg.net.seed)?;
    let form = assemble_form(&graph, &net, &fr)?;
    let sol = solve(&form, &cfg.solver_options())?;
    let opts = cfg.projection_options();
    let field = ProjectedField::new(&space, &graph, &net, &sol.minimizer, cfg.project.kind, &opts)?;
    let values = field.eval_many(&points)?;
    let mut meta = serde_json::json!({
        "kind": cfg.project.kind,
        "r": net.r(),
        "probe_count": points.len(),
        "diagnostics": field.diagnostics(),
    });
    match cfg.project.kind {
        netdirichlet::project::ProjectionKind::Whitney => meta["cube_depth_cap"] = opts.depth_cap.into(),
        netdirichlet::project::ProjectionKind::PathIntegral => {
            meta["lattice_pitch_factor"] = opts.lattice_pitch_factor.into()
        }
    }
    Writer::new(&out, &cfg.io.formats)?.probe_values(&points, &values, &meta)?;
    println!("probes={} kind={}", points.len(), cfg.project.kind.name());
    Ok(())
}

fn cmd_converge(c: &Common) -> Result<(), Failure> {
    let (cfg, out) = load(c)?;
    let space = cfg.build_space()?;
    let ladder = match &cfg.net.r_ladder {
        Some(l) => l.clone(),
        None => default_ladder(&space, &cfg.net_options(), cfg.net.seed, cfg.net.r)?,
    };
    let opts = ConvergenceOptions {
        name: cfg.name.clone(),
        net: cfg.net_options(),
        seed: cfg.net.seed,
        solver: cfg.solver_options(),
        projection: cfg.projection_options(),
        checks: cfg.checks.clone(),
        ..ConvergenceOptions::default()
    };
    info!("ladder {ladder:?}");
    let report = run_convergence(&space, &cfg.space.boundary, &ladder, &opts)?;
    Writer::new(&out, &cfg.io.formats)?.report(&report)?;
    for r in &report.records {
        match &r.error {
            None => println!(
                "r={} vertices={} energy={} minimality={}",
                r.r, r.vertex_count, r.energy_minimizer, r.minimality
            ),
            Some(e) => println!("r={} failed: {e}", r.r),
        }
    }
    if report.summary.rungs_completed == 0 {
        return Err(Error::Numerical("every rung failed".into()).into());
    }
    Ok(())
}

fn cmd_verify(c: &Common, fault: Option<&str>) -> Result<(), Failure> {
    let (cfg, out) = load(c)?;
    let fault = match fault {
        None => None,
        Some("negative_weight") => Some(Fault::NegativeWeight),
        Some("asymmetric_form") => Some(Fault::AsymmetricForm),
        Some(other) => return Err(Error::Usage(format!("unknown fault {other:?}")).into()),
    };
    let report = verify_suite(&cfg, fault)?;
    print!("{}", report.table());
    let doc = serde_json::json!({ "hard_failures": report.hard_failures(), "suite": report });
    Writer::new(&out, &cfg.io.formats)?.json("verify.json", &doc)?;
    match report.hard_failures() {
        0 => Ok(()),
        n => Err(Failure::Verification(n)),
    }
}
