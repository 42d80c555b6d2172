use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gpcg_core::bench::{self, Suite};
use gpcg_core::classic::{self, SchemeKind};
use gpcg_core::model::Model;
use gpcg_core::precond::{self, PreconditionerKind};
use gpcg_core::run::{self, write_atomic, RunConfig, RunResult, Summary};
use gpcg_core::spectral::Grid;
use gpcg_core::Error;

#[derive(Parser)]
#[command(name = "gpcg", version, about = "Ground states of the rotating Gross-Pitaevskii equation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve on a single grid.
    Solve(RunArgs),
    /// Coarse-to-fine continuation over the `[[multigrid]]` schedule.
    Multigrid(RunArgs),
    /// Run a benchmark suite and write a CSV table.
    Bench(BenchArgs),
    /// Solve, then report amplification factors and preconditioned condition numbers.
    Analyze(AnalyzeArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_name = "FILE")]
    config: PathBuf,
    /// Override a config key, e.g. `--set solver.precond=kinetic`.
    #[arg(long = "set", value_name = "K=V")]
    set: Vec<String>,
    /// Output directory (overrides `out` in the config).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// One of solvers_1d, precond_1d, eta_sweep_1d, rotation_2d, multigrid_2d.
    suite: String,
    #[arg(long, value_name = "DIR", default_value = "bench")]
    out: PathBuf,
    /// Use much larger grids and parameter ranges.
    #[arg(long)]
    full_scale: bool,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Time step for the amplification analysis.
    #[arg(long, default_value_t = 0.01)]
    dt: f64,
    /// Power iterations per scheme.
    #[arg(long, default_value_t = 500)]
    iterations: usize,
}

fn load(args: &RunArgs) -> Result<RunConfig, Error> {
    let sets = args.set.iter().map(|s| run::parse_override(s)).collect::<Result<Vec<_>, _>>()?;
    let mut cfg = RunConfig::load(&args.config, &sets).map_err(|e| match e {
        Error::Io(io) => Error::Config { path: args.config.display().to_string(), message: io.to_string() },
        other => other,
    })?;
    if let Some(out) = &args.out {
        cfg.out = out.clone();
    }
    Ok(cfg)
}

fn report(res: &RunResult, out: &Path) {
    let s = Summary::from_result(res);
    println!(
        "{}: E = {:.12}  lambda = {:.12}  |r|_inf = {:.3e}  iterations = {}  transforms = {}  ({:.3} s) -> {}",
        s.status.name(),
        s.energy,
        s.lambda,
        s.residual_inf,
        s.iterations,
        s.transforms,
        s.wall_time,
        out.display()
    );
}

fn solve(args: &RunArgs, multigrid: bool) -> Result<(), Error> {
    let cfg = load(args)?;
    let res = if multigrid { run::run_multigrid(&cfg)? } else { run::run_single(&cfg)? };
    report(&res, &cfg.out);
    Ok(())
}

fn bench(args: &BenchArgs) -> Result<(), Error> {
    let suite: Suite = args.suite.parse()?;
    let rows = bench::run_benchmark(suite, args.full_scale, args.threads)?;
    fs::create_dir_all(&args.out)?;
    let path = args.out.join(format!("{suite}.csv"));
    bench::write_bench_csv(&path, &rows)?;
    println!("{}", bench::BenchRow::CSV_HEADER);
    for r in &rows {
        println!("{}", r.csv_row());
    }
    println!("-> {}", path.display());
    Ok(())
}

fn analyze(args: &AnalyzeArgs) -> Result<(), Error> {
    let cfg = load(&args.run)?;
    let grid = Grid::new(cfg.grid)?;
    if grid.len() > 256 {
        return Err(Error::Config {
            path: "grid.points".into(),
            message: format!("analyze assembles dense operators; needs at most 256 nodes, got {}", grid.len()),
        });
    }
    let res = run::run_single(&cfg)?;
    report(&res, &cfg.out);
    let phi = &res.solution().phi;
    let model = Model::new(&grid, cfg.model.clone())?;
    let rho = phi.density();

    let h = classic::dense_hamiltonian(&model, &rho)?;
    let amp_path = cfg.out.join("amplification.csv");
    let mut rows = Vec::new();
    for kind in SchemeKind::ALL {
        let rep = classic::amplification_analysis(&h, kind, args.dt, args.iterations, cfg.seed)?;
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:.12e}")).unwrap_or_default();
        rows.push(format!(
            "{},{},{},{},{}",
            kind.name(),
            args.dt,
            fmt(rep.predicted_rate),
            fmt(rep.observed_rate),
            rep.degenerate
        ));
    }
    write_atomic(&amp_path, |w| {
        writeln!(w, "scheme,dt,predicted_rate,observed_rate,degenerate")?;
        for r in &rows {
            writeln!(w, "{r}")?;
        }
        Ok(())
    })?;
    println!("scheme,dt,predicted_rate,observed_rate,degenerate");
    for r in &rows {
        println!("{r}");
    }

    let cond_path = cfg.out.join("condition.csv");
    let mut cond = Vec::new();
    for kind in PreconditionerKind::ALL {
        let p = precond::build(kind, cfg.solver.precond_shift, phi, &model)?;
        let rep = classic::precond_hessian_condition(phi, &model, &p)?;
        cond.push(format!("{},{:.6e},{:.6e},{:.6e},{}", kind.name(), rep.sigma, rep.largest, rep.smallest_nonzero, rep.stationary));
    }
    write_atomic(&cond_path, |w| {
        writeln!(w, "precond,sigma,largest,smallest_nonzero,stationary")?;
        for r in &cond {
            writeln!(w, "{r}")?;
        }
        Ok(())
    })?;
    println!("precond,sigma,largest,smallest_nonzero,stationary");
    for r in &cond {
        println!("{r}");
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Solve(a) => solve(a, false),
        Command::Multigrid(a) => solve(a, true),
        Command::Bench(a) => bench(a),
        Command::Analyze(a) => analyze(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Config { .. }) => {
            eprintln!("config error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
