use gpcg_core::model::{self, InitialKind, LatticeArgument, ModelParams, PotentialKind, PotentialSpec};
use gpcg_core::optim::{self, Method, SolveError, SolverConfig, StopCriterion};
use gpcg_core::precond::PreconditionerKind;
use gpcg_core::run::{self, RunStatus, Summary};
use gpcg_core::spectral::{self, GridSpec};
use gpcg_core::Error;
use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Config { .. } | Error::InvalidParameter(_) | Error::InvalidGrid(_) | Error::UnsupportedDimension { .. } => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn bad(msg: String) -> PyErr {
    PyValueError::new_err(msg)
}

/// Periodic tensor grid on `[-L, L)^d` with `M` points per axis.
#[pyclass(module = "gpcg")]
struct Grid {
    inner: spectral::Grid,
}

#[pymethods]
impl Grid {
    #[new]
    fn new(dim: usize, half_width: f64, points: usize) -> PyResult<Self> {
        let spec = GridSpec::new(dim, half_width, points).map_err(to_py)?;
        Ok(Grid { inner: spectral::Grid::new(spec).map_err(to_py)? })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn points(&self) -> usize {
        self.inner.points()
    }

    #[getter]
    fn half_width(&self) -> f64 {
        self.inner.half_width()
    }

    #[getter]
    fn h(&self) -> f64 {
        self.inner.h()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// Node coordinates, one `d`-tuple per node in storage order.
    fn nodes(&self) -> Vec<Vec<f64>> {
        (0..self.inner.len()).map(|i| self.inner.node(i)[..self.inner.dim()].to_vec()).collect()
    }

    fn __repr__(&self) -> String {
        format!("Grid(dim={}, half_width={}, points={})", self.inner.dim(), self.inner.half_width(), self.inner.points())
    }
}

/// Complex grid function.
#[pyclass(module = "gpcg")]
struct Field {
    inner: spectral::WaveField,
}

#[pymethods]
impl Field {
    #[new]
    fn new(grid: PyRef<'_, Grid>, values: Vec<Complex64>) -> PyResult<Self> {
        Ok(Field { inner: spectral::WaveField::from_values(&grid.inner, values).map_err(to_py)? })
    }

    fn values(&self) -> Vec<Complex64> {
        self.inner.values().to_vec()
    }

    fn density(&self) -> Vec<f64> {
        self.inner.density()
    }

    fn norm(&self) -> f64 {
        self.inner.norm()
    }

    fn normalized(&self) -> PyResult<Field> {
        Ok(Field { inner: self.inner.clone().normalized().map_err(to_py)? })
    }

    fn conj(&self) -> Field {
        Field { inner: self.inner.conj() }
    }

    /// `h^d Σ conj(u) v`
    fn inner(&self, other: PyRef<'_, Field>) -> PyResult<Complex64> {
        spectral::inner(&self.inner, &other.inner).map_err(to_py)
    }

    /// Trigonometric interpolation onto another grid of the same box.
    fn interpolate(&self, grid: PyRef<'_, Grid>) -> PyResult<Field> {
        Ok(Field { inner: spectral::spectral_interpolate(&self.inner, &grid.inner).map_err(to_py)? })
    }

    fn grid(&self) -> Grid {
        Grid { inner: self.inner.grid().clone() }
    }

    fn __len__(&self) -> usize {
        self.inner.values().len()
    }
}

fn potential_kind(s: &str) -> PyResult<PotentialKind> {
    Ok(match s {
        "harmonic" => PotentialKind::Harmonic,
        "harmonic_plus_lattice" | "lattice" => PotentialKind::HarmonicPlusLattice,
        "harmonic_plus_quartic" | "quartic" => PotentialKind::HarmonicPlusQuartic,
        "custom_isotropic_half_square" | "half_square" => PotentialKind::CustomIsotropicHalfSquare,
        _ => return Err(bad(format!("unknown potential '{s}'"))),
    })
}

/// Discretized energy functional on a grid.
#[pyclass(module = "gpcg")]
struct Model {
    inner: model::Model,
}

#[pymethods]
impl Model {
    #[new]
    #[pyo3(signature = (grid, eta, omega = 0.0, potential = "harmonic", gamma = None, lattice_kappa = None, lattice_q = None, lattice_argument = "nu_squared", quartic_alpha = 0.0, quartic_kappa = 0.0))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        grid: PyRef<'_, Grid>,
        eta: f64,
        omega: f64,
        potential: &str,
        gamma: Option<Vec<f64>>,
        lattice_kappa: Option<Vec<f64>>,
        lattice_q: Option<Vec<f64>>,
        lattice_argument: &str,
        quartic_alpha: f64,
        quartic_kappa: f64,
    ) -> PyResult<Self> {
        let lattice_argument = match lattice_argument {
            "nu_squared" => LatticeArgument::NuSquared,
            "nu" => LatticeArgument::Nu,
            s => return Err(bad(format!("unknown lattice argument '{s}'"))),
        };
        let spec = PotentialSpec {
            kind: potential_kind(potential)?,
            gamma: gamma.unwrap_or_else(|| PotentialSpec::default().gamma),
            lattice_kappa: lattice_kappa.unwrap_or_default(),
            lattice_q: lattice_q.unwrap_or_default(),
            lattice_argument,
            quartic_alpha,
            quartic_kappa,
        };
        let params = ModelParams::new(eta, omega, spec);
        Ok(Model { inner: model::Model::new(&grid.inner, params).map_err(to_py)? })
    }

    #[getter]
    fn eta(&self) -> f64 {
        self.inner.eta()
    }

    #[getter]
    fn omega(&self) -> f64 {
        self.inner.omega()
    }

    fn grid(&self) -> Grid {
        Grid { inner: self.inner.grid().clone() }
    }

    fn potential(&self) -> Vec<f64> {
        self.inner.potential().to_vec()
    }

    /// Total energy.
    fn energy(&self, phi: PyRef<'_, Field>) -> PyResult<f64> {
        Ok(self.inner.energy(&phi.inner).map_err(to_py)?.total)
    }

    /// `(kinetic, potential, interaction, rotation, total)`
    fn energy_parts(&self, phi: PyRef<'_, Field>) -> PyResult<(f64, f64, f64, f64, f64)> {
        let e = self.inner.energy(&phi.inner).map_err(to_py)?;
        Ok((e.kinetic, e.potential, e.interaction, e.rotation, e.total))
    }

    fn chemical_potential(&self, phi: PyRef<'_, Field>) -> PyResult<f64> {
        self.inner.chemical_potential(&phi.inner).map_err(to_py)
    }

    fn gradient(&self, phi: PyRef<'_, Field>) -> PyResult<Field> {
        Ok(Field { inner: self.inner.gradient(&phi.inner).map_err(to_py)? })
    }

    /// Residual field and its sup norm.
    fn residual(&self, phi: PyRef<'_, Field>) -> PyResult<(Field, f64)> {
        let (r, _) = optim::residual(&phi.inner, &self.inner).map_err(to_py)?;
        let inf = r.max_abs();
        Ok((Field { inner: r }, inf))
    }

    fn initial_guess(&self, kind: &str) -> PyResult<Field> {
        let kind = InitialKind::parse(kind).map_err(to_py)?;
        Ok(Field { inner: model::initial_guess(kind, self.inner.grid(), self.inner.params()).map_err(to_py)? })
    }
}

#[pyclass(module = "gpcg")]
struct Solution {
    #[pyo3(get)]
    energy: f64,
    #[pyo3(get)]
    lambda_: f64,
    #[pyo3(get)]
    residual_inf: f64,
    #[pyo3(get)]
    iterations: usize,
    #[pyo3(get)]
    transforms: u64,
    #[pyo3(get)]
    status: &'static str,
    #[pyo3(get)]
    energies: Vec<f64>,
    phi: spectral::WaveField,
}

#[pymethods]
impl Solution {
    #[getter]
    fn phi(&self) -> Field {
        Field { inner: self.phi.clone() }
    }

    fn __repr__(&self) -> String {
        format!("Solution(status={}, energy={:.12}, iterations={})", self.status, self.energy, self.iterations)
    }
}

impl Solution {
    fn from_core(sol: optim::Solution, status: RunStatus) -> Self {
        Solution {
            energy: sol.energy.total,
            lambda_: sol.lambda,
            residual_inf: sol.residual_inf,
            iterations: sol.iterations,
            transforms: sol.transforms,
            status: status.name(),
            energies: sol.records.iter().map(|r| r.energy).collect(),
            phi: sol.phi,
        }
    }
}

/// Minimize the energy on the unit sphere with PG or PCG.
#[pyfunction]
#[pyo3(signature = (model, phi0, method = "pcg", precond = "sym", tol = 1e-12, stop = "energy_diff", max_iter = 10_000))]
fn solve(
    py: Python<'_>,
    model: PyRef<'_, Model>,
    phi0: PyRef<'_, Field>,
    method: &str,
    precond: &str,
    tol: f64,
    stop: &str,
    max_iter: usize,
) -> PyResult<Solution> {
    let method = match method {
        "pg" => Method::Pg,
        "pcg" => Method::Pcg,
        s => return Err(bad(format!("unknown method '{s}'"))),
    };
    let stop = match stop {
        "energy_diff" => StopCriterion::EnergyDiff,
        "residual_inf" => StopCriterion::ResidualInf,
        "iterate_diff" => StopCriterion::IterateDiff,
        s => return Err(bad(format!("unknown stopping criterion '{s}'"))),
    };
    let precond: PreconditionerKind = precond.parse().map_err(to_py)?;
    let cfg = SolverConfig { stop, tol, max_iter, ..SolverConfig::new(method, precond) };
    let (m, phi) = (&model.inner, &phi0.inner);
    match py.detach(|| optim::solve(phi, m, &cfg)) {
        Ok(sol) => {
            let status = if sol.converged { RunStatus::Converged } else { RunStatus::MaxIter };
            Ok(Solution::from_core(sol, status))
        }
        Err(SolveError::Stalled { solution, .. }) => Ok(Solution::from_core(*solution, RunStatus::Stalled)),
        Err(SolveError::Failed(e)) => Err(to_py(e)),
    }
}

/// Run a TOML configuration and write its artifacts to its `out` directory.
#[pyfunction]
#[pyo3(signature = (config, overrides = Vec::new(), multigrid = false))]
fn run_config(py: Python<'_>, config: &str, overrides: Vec<(String, String)>, multigrid: bool) -> PyResult<Solution> {
    let cfg = run::RunConfig::from_toml(config, &overrides).map_err(to_py)?;
    let res = py
        .detach(|| if multigrid { run::run_multigrid(&cfg) } else { run::run_single(&cfg) })
        .map_err(to_py)?;
    let status = Summary::from_result(&res).status;
    Ok(Solution::from_core(res.solution().clone(), status))
}

/// Unit-winding phase singularities within `radius` of the origin, as `(x, y, winding)`.
#[pyfunction]
fn detect_vortices(phi: PyRef<'_, Field>, radius: f64) -> PyResult<Vec<(f64, f64, i32)>> {
    let v = model::detect_vortices(&phi.inner, radius).map_err(to_py)?;
    Ok(v.into_iter().map(|v| (v.x, v.y, v.winding)).collect())
}

#[pymodule]
fn gpcg(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Grid>()?;
    m.add_class::<Field>()?;
    m.add_class::<Model>()?;
    m.add_class::<Solution>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    m.add_function(wrap_pyfunction!(detect_vortices, m)?)?;
    Ok(())
}
