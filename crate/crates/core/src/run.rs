//! Run configuration, single and multigrid runs, and their on-disk artifacts.
//!
//! A run directory holds `convergence.csv`, `field.gpef`, `density.csv`,
//! `timing.csv` and `summary.toml`. Every file is written to a temporary
//! sibling and renamed into place.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::classic::{run_imaginary_time, Scheme};
use crate::error::{Error, Result};
use crate::model::{initial_guess, InitialKind, Model, ModelParams};
use crate::optim::{self, ConvergenceRecord, Solution, SolveError, SolverConfig};
use crate::spectral::{io, spectral_interpolate, Grid, GridSpec, WaveField};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Level {
    pub points: usize,
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    /// Defaults to `tf`, or `a` when `η = 0`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_guess: Option<InitialKind>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    pub grid: GridSpec,
    pub model: ModelParams,
    #[serde(default)]
    pub solver: SolverConfig,
    /// Run an imaginary-time scheme instead of the optimizer. The scheme
    /// reuses `solver.precond`, `solver.stop`, `solver.tol` and `solver.max_iter`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<Scheme>,
    /// Coarse-to-fine schedule for `run_multigrid`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub multigrid: Vec<Level>,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl RunConfig {
    pub fn new(grid: GridSpec, model: ModelParams, solver: SolverConfig) -> Self {
        RunConfig {
            seed: 0,
            initial_guess: None,
            out: default_out(),
            grid,
            model,
            solver,
            scheme: None,
            multigrid: Vec::new(),
        }
    }

    /// Parses TOML text, applies `key = value` overrides with dotted keys,
    /// and validates.
    pub fn from_toml(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::config("<config>", e.message()))?;
        for (key, value) in overrides {
            set_dotted(&mut table, key, parse_value(value))?;
        }
        let cfg: RunConfig = serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| {
            let path = e.path().to_string();
            Error::config(if path == "." { "<config>".to_string() } else { path }, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_toml(&text, overrides)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("<config>", e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        // TOML integers are signed 64-bit.
        if self.seed > i64::MAX as u64 {
            return Err(Error::config("seed", format!("must be at most {}", i64::MAX)));
        }
        self.grid.validate().map_err(|e| Error::config("grid", e.to_string()))?;
        self.model.potential.validate(self.grid.dim).map_err(|e| Error::config("model.potential", e.to_string()))?;
        if !(self.model.eta >= 0.0) {
            return Err(Error::config("model.eta", "must be >= 0"));
        }
        if !self.model.omega.is_finite() {
            return Err(Error::config("model.omega", "must be finite"));
        }
        self.solver.validate().map_err(|e| Error::config("solver", e.to_string()))?;
        if let Some(s) = &self.scheme {
            s.validate().map_err(|e| Error::config("scheme", e.to_string()))?;
            if s.kind.is_implicit() && !self.solver.precond.is_hermitian() {
                return Err(Error::config(
                    "solver.precond",
                    format!("implicit schemes need a Hermitian preconditioner, got '{}'", self.solver.precond),
                ));
            }
        }
        let kind = self.initial_kind();
        if !matches!(kind, InitialKind::ThomasFermi | InitialKind::A) && self.grid.dim < 2 {
            return Err(Error::config("initial_guess", "only 'tf' and 'a' are available in 1D"));
        }
        if kind == InitialKind::ThomasFermi && !(self.model.eta > 0.0) {
            return Err(Error::config("initial_guess", "'tf' needs eta > 0"));
        }
        for (i, level) in self.multigrid.iter().enumerate() {
            let path = format!("multigrid[{i}]");
            GridSpec::new(self.grid.dim, self.grid.half_width, level.points)
                .map_err(|e| Error::config(format!("{path}.points"), e.to_string()))?;
            if !(level.tol > 0.0) {
                return Err(Error::config(format!("{path}.tol"), "must be positive"));
            }
            if i > 0 && level.points <= self.multigrid[i - 1].points {
                return Err(Error::config(format!("{path}.points"), "levels must strictly increase"));
            }
        }
        Ok(())
    }

    pub fn initial_kind(&self) -> InitialKind {
        match self.initial_guess {
            Some(k) => k,
            None if self.model.eta > 0.0 => InitialKind::ThomasFermi,
            None => InitialKind::A,
        }
    }

    fn grid_with(&self, points: usize) -> Result<Grid> {
        Grid::new(GridSpec { points, ..self.grid })
    }
}

fn parse_value(raw: &str) -> toml::Value {
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn set_dotted(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::config(key, "malformed override key"));
    }
    let mut cur = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cur.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| Error::config(key, format!("'{part}' is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Splits `key=value`.
pub fn parse_override(arg: &str) -> Result<(String, String)> {
    let (k, v) = arg.split_once('=').ok_or_else(|| Error::config(arg, "expected key=value"))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Converged,
    MaxIter,
    /// No energy decrease could be found; usually the roundoff floor.
    Stalled,
}

impl RunStatus {
    pub fn name(self) -> &'static str {
        match self {
            RunStatus::Converged => "converged",
            RunStatus::MaxIter => "max_iter",
            RunStatus::Stalled => "stalled",
        }
    }
}

#[derive(Debug, Clone)]
pub struct LevelResult {
    pub points: usize,
    pub solution: Solution,
    pub status: RunStatus,
    /// Energy of the interpolated initial guess on this level.
    pub initial_energy: f64,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub levels: Vec<LevelResult>,
    pub wall_time: f64,
}

impl RunResult {
    pub fn last(&self) -> &LevelResult {
        self.levels.last().expect("at least one level")
    }

    pub fn solution(&self) -> &Solution {
        &self.last().solution
    }

    pub fn status(&self) -> RunStatus {
        self.last().status
    }
}

fn finish(res: Result<Solution, SolveError>) -> Result<(Solution, RunStatus)> {
    match res {
        Ok(sol) => {
            let status = if sol.converged { RunStatus::Converged } else { RunStatus::MaxIter };
            Ok((sol, status))
        }
        Err(SolveError::Stalled { iteration, solution }) => {
            log::warn!("stalled at iteration {iteration}, E = {:.15}", solution.energy.total);
            Ok((*solution, RunStatus::Stalled))
        }
        Err(SolveError::Failed(e)) => Err(e),
    }
}

/// Solves on one grid from `phi0` with the configured method and `tol`.
pub fn solve_level(cfg: &RunConfig, model: &Model, phi0: &WaveField, tol: f64) -> Result<(Solution, RunStatus)> {
    let solver = SolverConfig { tol, ..cfg.solver.clone() };
    match &cfg.scheme {
        Some(s) => finish(run_imaginary_time(phi0, s, model, solver.precond, solver.stop, tol, solver.max_iter)),
        None => finish(optim::solve(phi0, model, &solver)),
    }
}

/// Computation of a single run on `cfg.grid`, without writing anything.
pub fn compute_single(cfg: &RunConfig) -> Result<RunResult> {
    cfg.validate()?;
    let start = Instant::now();
    let grid = Grid::new(cfg.grid)?;
    let model = Model::new(&grid, cfg.model.clone())?;
    let phi0 = initial_guess(cfg.initial_kind(), &grid, &cfg.model)?;
    let initial_energy = model.energy(&phi0)?.total;
    let (solution, status) = solve_level(cfg, &model, &phi0, cfg.solver.tol)?;
    Ok(RunResult {
        levels: vec![LevelResult { points: cfg.grid.points, solution, status, initial_energy }],
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// Multigrid continuation over `cfg.multigrid`; an empty schedule is a single run.
pub fn compute_multigrid(cfg: &RunConfig) -> Result<RunResult> {
    cfg.validate()?;
    if cfg.multigrid.is_empty() {
        return compute_single(cfg);
    }
    let start = Instant::now();
    let mut levels: Vec<LevelResult> = Vec::with_capacity(cfg.multigrid.len());
    for level in &cfg.multigrid {
        let grid = cfg.grid_with(level.points)?;
        let model = Model::new(&grid, cfg.model.clone())?;
        let phi0 = match levels.last() {
            None => initial_guess(cfg.initial_kind(), &grid, &cfg.model)?,
            Some(prev) => spectral_interpolate(&prev.solution.phi, &grid)?,
        };
        let initial_energy = model.energy(&phi0)?.total;
        let (solution, status) = solve_level(cfg, &model, &phi0, level.tol)?;
        log::info!(
            "level M = {}: E = {:.12}, {} iterations, {}",
            level.points,
            solution.energy.total,
            solution.iterations,
            status.name()
        );
        levels.push(LevelResult { points: level.points, solution, status, initial_energy });
    }
    Ok(RunResult { levels, wall_time: start.elapsed().as_secs_f64() })
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub status: RunStatus,
    pub energy: f64,
    pub lambda: f64,
    pub residual_inf: f64,
    pub iterations: usize,
    pub transforms: u64,
    pub inner_iters: usize,
    pub wall_time: f64,
    pub levels: usize,
    pub points: usize,
    pub kinetic: f64,
    pub potential: f64,
    pub interaction: f64,
    pub rotation: f64,
}

impl Summary {
    pub fn from_result(res: &RunResult) -> Self {
        let sol = res.solution();
        let e = sol.energy;
        Summary {
            status: res.status(),
            energy: e.total,
            lambda: sol.lambda,
            residual_inf: sol.residual_inf,
            iterations: res.levels.iter().map(|l| l.solution.iterations).sum(),
            transforms: res.levels.iter().map(|l| l.solution.transforms).sum(),
            inner_iters: res.levels.iter().map(|l| l.solution.inner_iters).sum(),
            wall_time: res.wall_time,
            levels: res.levels.len(),
            points: res.last().points,
            kinetic: e.kinetic,
            potential: e.potential,
            interaction: e.interaction,
            rotation: e.rotation,
        }
    }
}

/// Writes `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, body: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        body(&mut w)?;
        w.flush()?;
    }
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Writes the artifacts of `res` into `dir`.
pub fn write_artifacts(dir: &Path, res: &RunResult) -> Result<()> {
    fs::create_dir_all(dir)?;
    let multilevel = res.levels.len() > 1;
    write_atomic(&dir.join("convergence.csv"), |w| {
        if multilevel {
            writeln!(w, "level,points,{}", ConvergenceRecord::CSV_HEADER)?;
        } else {
            writeln!(w, "{}", ConvergenceRecord::CSV_HEADER)?;
        }
        for (p, level) in res.levels.iter().enumerate() {
            for rec in &level.solution.records {
                if multilevel {
                    write!(w, "{p},{},", level.points)?;
                }
                writeln!(w, "{}", rec.csv_row())?;
            }
        }
        Ok(())
    })?;
    write_atomic(&dir.join("timing.csv"), |w| {
        writeln!(w, "level,points,iterations,transforms,wall_time,cumulative_time")?;
        let mut cumulative = 0.0;
        for (p, level) in res.levels.iter().enumerate() {
            cumulative += level.solution.wall_time;
            writeln!(
                w,
                "{p},{},{},{},{:.6},{:.6}",
                level.points, level.solution.iterations, level.solution.transforms, level.solution.wall_time, cumulative
            )?;
        }
        Ok(())
    })?;
    let phi = &res.solution().phi;
    write_atomic(&dir.join("field.gpef"), |w| io::write_field(w, phi))?;
    write_atomic(&dir.join("density.csv"), |w| io::write_density_csv(w, phi))?;
    let summary = toml::to_string(&Summary::from_result(res)).map_err(|e| Error::Format(e.to_string()))?;
    write_atomic(&dir.join("summary.toml"), |w| Ok(w.write_all(summary.as_bytes())?))?;
    Ok(())
}

/// Solves `cfg` on its grid and writes the artifacts to `cfg.out`.
pub fn run_single(cfg: &RunConfig) -> Result<RunResult> {
    let res = compute_single(cfg)?;
    write_artifacts(&cfg.out, &res)?;
    Ok(res)
}

/// Multigrid continuation with artifacts written to `cfg.out`.
pub fn run_multigrid(cfg: &RunConfig) -> Result<RunResult> {
    let res = compute_multigrid(cfg)?;
    write_artifacts(&cfg.out, &res)?;
    Ok(res)
}
