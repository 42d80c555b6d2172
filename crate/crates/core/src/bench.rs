//! Benchmark suites: iteration and transform counts over method,
//! preconditioner and parameter sweeps.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::classic::{Scheme, SchemeKind};
use crate::error::{Error, Result};
use crate::model::{InitialKind, ModelParams, PotentialSpec};
use crate::optim::{Method, SolverConfig};
use crate::precond::PreconditionerKind;
use crate::run::{compute_multigrid, write_atomic, Level, RunConfig, RunStatus};
use crate::spectral::GridSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Solvers1d,
    Precond1d,
    EtaSweep1d,
    Rotation2d,
    Multigrid2d,
}

impl Suite {
    pub const ALL: [Suite; 5] = [Suite::Solvers1d, Suite::Precond1d, Suite::EtaSweep1d, Suite::Rotation2d, Suite::Multigrid2d];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Solvers1d => "solvers_1d",
            Suite::Precond1d => "precond_1d",
            Suite::EtaSweep1d => "eta_sweep_1d",
            Suite::Rotation2d => "rotation_2d",
            Suite::Multigrid2d => "multigrid_2d",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::config("suite", format!("unknown suite '{s}'")))
    }
}

/// What iterates: an optimizer or an imaginary-time scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Algorithm {
    Optimizer(Method),
    TimeStepping(SchemeKind, f64),
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Optimizer(m) => m.name(),
            Algorithm::TimeStepping(k, _) => k.name(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchCase {
    pub algorithm: Algorithm,
    pub precond: PreconditionerKind,
    pub grid: GridSpec,
    pub model: ModelParams,
    pub initial: Option<InitialKind>,
    pub tol: f64,
    pub max_iter: usize,
    /// Multigrid schedule; empty for a fixed grid.
    pub schedule: Vec<Level>,
}

impl BenchCase {
    pub fn config(&self) -> RunConfig {
        let mut solver = SolverConfig::new(Method::Pcg, self.precond);
        solver.tol = self.tol;
        solver.max_iter = self.max_iter;
        let mut cfg = RunConfig::new(self.grid, self.model.clone(), solver);
        cfg.initial_guess = self.initial;
        cfg.multigrid = self.schedule.clone();
        match self.algorithm {
            Algorithm::Optimizer(m) => cfg.solver.method = m,
            Algorithm::TimeStepping(kind, dt) => cfg.scheme = Some(Scheme::new(kind, dt)),
        }
        cfg
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub method: String,
    pub precond: String,
    pub dim: usize,
    pub h: f64,
    pub half_width: f64,
    pub eta: f64,
    pub omega: f64,
    pub initial: String,
    pub levels: usize,
    pub iterations: usize,
    pub inner_iters: usize,
    pub transforms: u64,
    pub energy: f64,
    pub status: String,
    pub wall_time: f64,
}

impl BenchRow {
    pub const CSV_HEADER: &'static str =
        "method,precond,dim,h,L,eta,omega,initial,levels,iterations,inner_iters,transforms,energy,status,wall_time";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{:.15e},{},{:.6}",
            self.method,
            self.precond,
            self.dim,
            self.h,
            self.half_width,
            self.eta,
            self.omega,
            self.initial,
            self.levels,
            self.iterations,
            self.inner_iters,
            self.transforms,
            self.energy,
            self.status,
            self.wall_time
        )
    }

    /// Iterations, or total inner iterations for implicit schemes.
    pub fn cost(&self) -> usize {
        if self.inner_iters > 0 {
            self.inner_iters
        } else {
            self.iterations
        }
    }

    pub fn finished(&self) -> bool {
        self.status == RunStatus::Converged.name() || self.status == RunStatus::Stalled.name()
    }
}

fn lattice_1d() -> PotentialSpec {
    PotentialSpec::lattice(&[1.0], &[25.0], &[std::f64::consts::FRAC_PI_2])
}

fn quartic_2d() -> PotentialSpec {
    PotentialSpec::quartic(&[1.0, 1.0], 1.2, 0.3)
}

fn grid(dim: usize, l: f64, h: f64) -> GridSpec {
    GridSpec { dim, half_width: l, points: (2.0 * l / h).round() as usize }
}

const ONE_D_TOL: f64 = 1e-14;
const BE_DT: f64 = 0.01;

/// Cases of one suite, in output order.
pub fn suite_cases(suite: Suite, full_scale: bool) -> Vec<BenchCase> {
    let mut cases = Vec::new();
    let opt = |m| Algorithm::Optimizer(m);
    let one_d = |alg, precond, l: f64, h: f64, eta: f64| BenchCase {
        algorithm: alg,
        precond,
        grid: grid(1, l, h),
        model: ModelParams::new(eta, 0.0, lattice_1d()),
        initial: None,
        tol: ONE_D_TOL,
        max_iter: 20_000,
        schedule: Vec::new(),
    };
    match suite {
        Suite::Solvers1d => {
            let ls: &[f64] = if full_scale { &[8.0, 16.0, 32.0, 64.0, 128.0] } else { &[8.0, 16.0, 32.0] };
            let hs: &[f64] = if full_scale { &[0.125, 0.0625, 0.03125, 0.015625] } else { &[0.125, 0.0625, 0.03125] };
            let algs = [Algorithm::TimeStepping(SchemeKind::BeLambda, BE_DT), opt(Method::Pg), opt(Method::Pcg)];
            let preconds = [
                PreconditionerKind::Identity,
                PreconditionerKind::Potential,
                PreconditionerKind::Kinetic,
                PreconditionerKind::Sym,
            ];
            for &l in ls {
                for &h in hs {
                    for alg in algs {
                        for p in preconds {
                            cases.push(one_d(alg, p, l, h, 250.0));
                        }
                    }
                }
            }
        }
        Suite::Precond1d => {
            let (l, h) = if full_scale { (128.0, 1.0 / 64.0) } else { (32.0, 1.0 / 16.0) };
            for eta in [10.0, 250.0, 1000.0] {
                for p in PreconditionerKind::ALL.into_iter().filter(|p| *p != PreconditionerKind::Identity) {
                    for m in [Method::Pg, Method::Pcg] {
                        cases.push(one_d(opt(m), p, l, h, eta));
                    }
                }
            }
        }
        Suite::EtaSweep1d => {
            let (l, hs): (f64, &[f64]) = if full_scale { (128.0, &[1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0]) } else { (32.0, &[1.0 / 16.0]) };
            let etas: &[f64] = if full_scale { &[0.0, 10.0, 100.0, 1e3, 1e4, 1e5] } else { &[10.0, 100.0, 1e3, 1e4] };
            for &h in hs {
                for &eta in etas {
                    for m in [Method::Pg, Method::Pcg] {
                        cases.push(one_d(opt(m), PreconditionerKind::Sym, l, h, eta));
                    }
                }
            }
        }
        Suite::Rotation2d => {
            let g = if full_scale { grid(2, 16.0, 1.0 / 16.0) } else { GridSpec { dim: 2, half_width: 16.0, points: 128 } };
            let omegas: &[f64] = if full_scale { &[0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5] } else { &[0.0, 1.0, 2.0] };
            for &omega in omegas {
                for p in [PreconditionerKind::Sym, PreconditionerKind::C1] {
                    cases.push(BenchCase {
                        algorithm: opt(Method::Pcg),
                        precond: p,
                        grid: g,
                        model: ModelParams::new(1000.0, omega, quartic_2d()),
                        initial: None,
                        tol: 1e-12,
                        max_iter: 20_000,
                        schedule: Vec::new(),
                    });
                }
            }
        }
        Suite::Multigrid2d => {
            let (finest, omegas): (usize, &[f64]) =
                if full_scale { (512, &[0.5, 0.6, 0.7, 0.8, 0.9, 0.95]) } else { (256, &[0.5]) };
            for &omega in omegas {
                for init in [InitialKind::A, InitialKind::B, InitialKind::D, InitialKind::DBar] {
                    let model = ModelParams::new(500.0, omega, PotentialSpec::harmonic(&[0.5, 0.5]));
                    let mut schedule = Vec::new();
                    let mut m = 64;
                    while m <= finest {
                        schedule.push(Level { points: m, tol: if m == finest { 1e-14 } else { 1e-12 } });
                        m *= 2;
                    }
                    let base = BenchCase {
                        algorithm: opt(Method::Pcg),
                        precond: PreconditionerKind::Sym,
                        grid: GridSpec { dim: 2, half_width: 16.0, points: finest },
                        model,
                        initial: Some(init),
                        tol: 1e-14,
                        max_iter: 20_000,
                        schedule,
                    };
                    cases.push(BenchCase { schedule: Vec::new(), ..base.clone() });
                    cases.push(base);
                }
            }
        }
    }
    cases
}

/// Runs one case; solver failures become rows with status `failed`.
pub fn run_case(case: &BenchCase) -> BenchRow {
    let cfg = case.config();
    let start = Instant::now();
    let res = compute_multigrid(&cfg);
    let wall_time = start.elapsed().as_secs_f64();
    let mut row = BenchRow {
        method: case.algorithm.name().to_string(),
        precond: case.precond.name().to_string(),
        dim: case.grid.dim,
        h: case.grid.h(),
        half_width: case.grid.half_width,
        eta: case.model.eta,
        omega: case.model.omega,
        initial: cfg.initial_kind().name().to_string(),
        levels: case.schedule.len().max(1),
        iterations: 0,
        inner_iters: 0,
        transforms: 0,
        energy: f64::NAN,
        status: String::new(),
        wall_time,
    };
    match res {
        Ok(r) => {
            row.iterations = r.levels.iter().map(|l| l.solution.iterations).sum();
            row.inner_iters = r.levels.iter().map(|l| l.solution.inner_iters).sum();
            row.transforms = r.levels.iter().map(|l| l.solution.transforms).sum();
            row.energy = r.solution().energy.total;
            row.status = r.status().name().to_string();
        }
        Err(e) => {
            log::warn!("{} {} failed: {e}", row.method, row.precond);
            row.status = match e {
                Error::Diverged { .. } => "diverged",
                _ => "failed",
            }
            .to_string();
        }
    }
    row
}

/// Runs every case of `suite`, in parallel on `threads` workers (0 = rayon default).
/// Rows come back in case order.
pub fn run_benchmark(suite: Suite, full_scale: bool, threads: usize) -> Result<Vec<BenchRow>> {
    let cases = suite_cases(suite, full_scale);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(pool.install(|| cases.par_iter().map(run_case).collect()))
}

pub fn write_bench_csv(path: &Path, rows: &[BenchRow]) -> Result<()> {
    write_atomic(path, |w| {
        writeln!(w, "{}", BenchRow::CSV_HEADER)?;
        for r in rows {
            writeln!(w, "{}", r.csv_row())?;
        }
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        assert!("nope".parse::<Suite>().is_err());
    }

    #[test]
    fn cases_are_valid_configs() {
        for s in Suite::ALL {
            for full in [false, true] {
                let cases = suite_cases(s, full);
                assert!(!cases.is_empty());
                for c in cases {
                    c.config().validate().unwrap_or_else(|e| panic!("{s}: {e}"));
                }
            }
        }
    }

    #[test]
    fn desk_grids() {
        let c = &suite_cases(Suite::Precond1d, false)[0];
        assert_eq!((c.grid.half_width, c.grid.points), (32.0, 1024));
        let c = &suite_cases(Suite::Rotation2d, false)[0];
        assert_eq!(c.grid.points, 128);
    }
}
