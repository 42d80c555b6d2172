//! Imaginary-time baselines (forward/backward Euler, Crank–Nicolson), the
//! preconditioned MINRES inner solver, and spectral diagnostics for linear
//! model problems.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{require_unit, LinearImage, Model};
use crate::optim::{check_stop, ConvergenceRecord, Solution, SolveError, SolverConfig, StopCriterion};
use crate::precond::{Preconditioner, PreconditionerKind};
use crate::spectral::WaveField;
use crate::vecops;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    Fe,
    FeLambda,
    Be,
    BeLambda,
    Cn,
    CnLambda,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 6] = [
        SchemeKind::Fe,
        SchemeKind::FeLambda,
        SchemeKind::Be,
        SchemeKind::BeLambda,
        SchemeKind::Cn,
        SchemeKind::CnLambda,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::Fe => "fe",
            SchemeKind::FeLambda => "fe_lambda",
            SchemeKind::Be => "be",
            SchemeKind::BeLambda => "be_lambda",
            SchemeKind::Cn => "cn",
            SchemeKind::CnLambda => "cn_lambda",
        }
    }

    pub fn uses_lambda(self) -> bool {
        matches!(self, SchemeKind::FeLambda | SchemeKind::BeLambda | SchemeKind::CnLambda)
    }

    pub fn is_implicit(self) -> bool {
        !matches!(self, SchemeKind::Fe | SchemeKind::FeLambda)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scheme {
    pub kind: SchemeKind,
    pub dt: f64,
    #[serde(default = "default_inner_tol")]
    pub inner_tol: f64,
    #[serde(default = "default_inner_max_iter")]
    pub inner_max_iter: usize,
}

fn default_inner_tol() -> f64 {
    1e-10
}

fn default_inner_max_iter() -> usize {
    1000
}

impl Scheme {
    pub fn new(kind: SchemeKind, dt: f64) -> Self {
        Scheme { kind, dt, inner_tol: default_inner_tol(), inner_max_iter: default_inner_max_iter() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.inner_tol > 0.0) {
            return Err(Error::InvalidParameter("inner_tol must be positive".into()));
        }
        Ok(())
    }
}

/// Outcome of one MINRES solve.
#[derive(Debug, Clone)]
pub struct KrylovSolution {
    pub x: Vec<Complex64>,
    pub iterations: usize,
    /// True relative residual `‖b - Ax‖ / ‖b‖` at exit.
    pub relative_residual: f64,
    /// Preconditioned residual-norm estimate after each iteration, relative to the start.
    pub estimates: Vec<f64>,
}

/// Preconditioned MINRES for `A x = b` with `A` Hermitian and `P` Hermitian
/// positive definite, both under the weighted inner product `weight * Σ conj(u) v`.
///
/// Stops once the true relative residual is at most `tol`.
pub fn krylov_solve(
    mut apply_a: impl FnMut(&[Complex64]) -> Vec<Complex64>,
    b: &[Complex64],
    mut apply_p: impl FnMut(&[Complex64]) -> Vec<Complex64>,
    tol: f64,
    max_iter: usize,
    weight: f64,
) -> Result<KrylovSolution> {
    let n = b.len();
    let zero = Complex64::new(0.0, 0.0);
    let bnorm = vecops::norm(b, weight);
    let mut x = vec![zero; n];
    if bnorm == 0.0 {
        return Ok(KrylovSolution { x, iterations: 0, relative_residual: 0.0, estimates: Vec::new() });
    }

    let mut r1 = b.to_vec();
    let mut y = apply_p(&r1);
    let beta1_sq = vecops::re_dot(&r1, &y, weight);
    if beta1_sq <= 0.0 {
        return Err(Error::InvalidParameter("preconditioner is not positive definite".into()));
    }
    let beta1 = beta1_sq.sqrt();
    let mut r2 = r1.clone();
    let (mut oldb, mut beta) = (0.0, beta1);
    let (mut dbar, mut epsln, mut phibar) = (0.0, 0.0, beta1);
    let (mut cs, mut sn) = (-1.0f64, 0.0f64);
    let mut w = vec![zero; n];
    let mut w2 = vec![zero; n];
    let mut estimates = Vec::new();

    for itn in 1..=max_iter {
        let s = 1.0 / beta;
        let v: Vec<Complex64> = y.iter().map(|z| z * s).collect();
        y = apply_a(&v);
        if itn >= 2 {
            vecops::axpy(-beta / oldb, &r1, &mut y);
        }
        let alfa = vecops::re_dot(&v, &y, weight);
        vecops::axpy(-alfa / beta, &r2, &mut y);
        r1 = std::mem::replace(&mut r2, y);
        y = apply_p(&r2);
        oldb = beta;
        let beta_sq = vecops::re_dot(&r2, &y, weight);
        if beta_sq < 0.0 {
            return Err(Error::InvalidParameter("preconditioner is not positive definite".into()));
        }
        beta = beta_sq.sqrt();

        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = gbar.hypot(beta).max(f64::EPSILON);
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar *= sn;

        let w1 = std::mem::replace(&mut w2, std::mem::take(&mut w));
        w = v
            .iter()
            .zip(w1.iter().zip(&w2))
            .map(|(vi, (a, b))| (vi - a * oldeps - b * delta) / gamma)
            .collect();
        vecops::axpy(phi, &w, &mut x);

        let estimate = phibar / beta1;
        estimates.push(estimate);
        if estimate <= tol || beta == 0.0 {
            let ax = apply_a(&x);
            let res: Vec<Complex64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
            let true_res = vecops::norm(&res, weight) / bnorm;
            if true_res <= tol || beta == 0.0 {
                return Ok(KrylovSolution { x, iterations: itn, relative_residual: true_res, estimates });
            }
        }
    }
    let ax = apply_a(&x);
    let res: Vec<Complex64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let true_res = vecops::norm(&res, weight) / bnorm;
    if true_res <= tol {
        return Ok(KrylovSolution { x, iterations: max_iter, relative_residual: true_res, estimates });
    }
    Err(Error::InnerSolver { iterations: max_iter, residual: true_res })
}

/// [`krylov_solve`] on fields, with a built preconditioner.
pub fn krylov_solve_field(
    mut apply_a: impl FnMut(&WaveField) -> WaveField,
    b: &WaveField,
    precond: &Preconditioner,
    tol: f64,
    max_iter: usize,
) -> Result<(WaveField, KrylovSolution)> {
    if !precond.kind().is_hermitian() {
        return Err(Error::InvalidParameter(format!(
            "MINRES needs a Hermitian preconditioner, '{}' is not",
            precond.kind()
        )));
    }
    let grid = b.grid().clone();
    let sol = krylov_solve(
        |v| apply_a(&WaveField::from_values(&grid, v.to_vec()).expect("grid size")).into_values(),
        b.values(),
        |v| precond.apply_values(v),
        tol,
        max_iter,
        grid.cell_volume(),
    )?;
    Ok((WaveField::from_values(&grid, sol.x.clone())?, sol))
}

/// One imaginary-time step before and after projection.
#[derive(Debug, Clone)]
pub struct TimeStep {
    pub phi: WaveField,
    /// `‖φ̃_{n+1}‖` before the projection.
    pub pre_norm: f64,
    pub inner_iters: usize,
}

/// One step of `scheme` from `phi_n`, with density and `λ` frozen at `phi_n`.
///
/// The implicit schemes solve
/// `(I/Δt + H - λ) φ̃ = φ_n/Δt` (BE) and
/// `(I/Δt + (H - λ)/2) φ̃ = (I/Δt - (H - λ)/2) φ_n` (CN),
/// with `λ = 0` for the variants without the multiplier.
pub fn imaginary_time_step(
    phi_n: &WaveField,
    scheme: &Scheme,
    model: &Model,
    precond: PreconditionerKind,
) -> Result<TimeStep> {
    scheme.validate()?;
    require_unit(phi_n)?;
    if phi_n.grid() != model.grid() {
        return Err(Error::GridMismatch);
    }
    let img = model.linear_image(phi_n.values());
    step_from_image(phi_n.values(), &img, scheme, model, precond)
}

fn step_from_image(
    phi: &[Complex64],
    img: &LinearImage,
    scheme: &Scheme,
    model: &Model,
    precond: PreconditionerKind,
) -> Result<TimeStep> {
    let grid = model.grid();
    let w = grid.cell_volume();
    let dt = scheme.dt;
    let rho: Vec<f64> = phi.iter().map(|z| z.norm_sqr()).collect();
    let h_phi = model.hamiltonian_from_image(phi, img, &rho);
    let lambda = if scheme.kind.uses_lambda() { vecops::re_dot(phi, &h_phi, w) } else { 0.0 };

    let (tilde, inner_iters) = match scheme.kind {
        SchemeKind::Fe | SchemeKind::FeLambda => {
            let mut t = phi.to_vec();
            vecops::axpy(-dt, &h_phi, &mut t);
            vecops::axpy(dt * lambda, phi, &mut t);
            (t, 0)
        }
        SchemeKind::Be | SchemeKind::BeLambda | SchemeKind::Cn | SchemeKind::CnLambda => {
            let cn = matches!(scheme.kind, SchemeKind::Cn | SchemeKind::CnLambda);
            let c = if cn { 0.5 } else { 1.0 };
            let mut rhs: Vec<Complex64> = phi.iter().map(|z| z / dt).collect();
            if cn {
                vecops::axpy(-c, &h_phi, &mut rhs);
                vecops::axpy(c * lambda, phi, &mut rhs);
            }
            let apply_a = |v: &[Complex64]| {
                let img = model.linear_image(v);
                let hv = model.hamiltonian_from_image(v, &img, &rho);
                v.iter().zip(&hv).map(|(vi, hi)| vi * (1.0 / dt - c * lambda) + hi * c).collect::<Vec<_>>()
            };
            if !precond.is_hermitian() {
                return Err(Error::InvalidParameter(format!(
                    "MINRES needs a Hermitian preconditioner, '{precond}' is not"
                )));
            }
            let p = Preconditioner::new(precond, 1.0 / (c * dt), &rho, model)?;
            let sol = krylov_solve(apply_a, &rhs, |v| p.apply_values(v), scheme.inner_tol, scheme.inner_max_iter, w)?;
            (sol.x, sol.iterations)
        }
    };
    let pre_norm = vecops::norm(&tilde, w);
    if !pre_norm.is_finite() || pre_norm == 0.0 {
        return Err(Error::NonFinite);
    }
    let phi_next = WaveField::from_values(grid, tilde)?.normalized()?;
    Ok(TimeStep { phi: phi_next, pre_norm, inner_iters })
}

/// Outer imaginary-time loop with the same stopping rules and record
/// layout as the optimizers. Aborts with [`Error::Diverged`] when the energy
/// increases.
pub fn run_imaginary_time(
    phi0: &WaveField,
    scheme: &Scheme,
    model: &Model,
    precond: PreconditionerKind,
    stop: StopCriterion,
    tol: f64,
    max_iter: usize,
) -> Result<Solution, SolveError> {
    scheme.validate()?;
    require_unit(phi0)?;
    let grid = model.grid();
    let start = Instant::now();
    let t0 = grid.transform_count();
    let cfg = SolverConfig { stop, tol, max_iter, ..Default::default() };

    let mut phi = phi0.clone();
    let mut img = model.linear_image(phi.values());
    let mut energy = model.energy_parts(phi.values(), &img);
    let residual_inf = |phi: &[Complex64], img: &LinearImage| {
        let rho: Vec<f64> = phi.iter().map(|z| z.norm_sqr()).collect();
        let h = model.hamiltonian_from_image(phi, img, &rho);
        let lambda = vecops::re_dot(phi, &h, grid.cell_volume());
        let r: Vec<Complex64> = h.iter().zip(phi).map(|(a, b)| a - b * lambda).collect();
        (vecops::max_abs(&r), lambda)
    };
    let (r0, l0) = residual_inf(phi.values(), &img);
    let mut records = vec![ConvergenceRecord {
        n: 0,
        energy: energy.total,
        lambda: l0,
        residual_inf: r0,
        transforms: grid.transform_count() - t0,
        ..Default::default()
    }];
    let mut inner_total = 0;
    let mut converged = check_stop(&records, &cfg);

    let mut n = 0;
    while !converged && n < max_iter {
        n += 1;
        let step = step_from_image(phi.values(), &img, scheme, model, precond)?;
        inner_total += step.inner_iters;
        let next_img = model.linear_image(step.phi.values());
        let next_energy = model.energy_parts(step.phi.values(), &next_img);
        if !next_energy.total.is_finite()
            || next_energy.total > energy.total + 1e-10 * energy.total.abs().max(1.0)
        {
            return Err(Error::Diverged { iteration: n, from: energy.total, to: next_energy.total }.into());
        }
        let (r, l) = residual_inf(step.phi.values(), &next_img);
        records.push(ConvergenceRecord {
            n,
            energy: next_energy.total,
            energy_change: next_energy.total - energy.total,
            lambda: l,
            residual_inf: r,
            step_inf: step.phi.max_abs_diff(&phi)?,
            transforms: grid.transform_count() - t0,
            inner_iters: inner_total,
            wall_time: start.elapsed().as_secs_f64(),
            ..Default::default()
        });
        phi = step.phi;
        img = next_img;
        energy = next_energy;
        converged = check_stop(&records, &cfg);
    }
    let last = *records.last().expect("initial record");
    Ok(Solution {
        phi,
        energy,
        lambda: last.lambda,
        residual_inf: last.residual_inf,
        iterations: n,
        transforms: grid.transform_count() - t0,
        inner_iters: inner_total,
        wall_time: start.elapsed().as_secs_f64(),
        converged,
        records,
    })
}

/// Eigenvalues, amplification factors and convergence rates of one scheme
/// viewed as a power iteration.
#[derive(Debug, Clone, Serialize)]
pub struct SpectralTransformReport {
    pub scheme: SchemeKind,
    pub dt: f64,
    /// Eigenvalues of `H`, ascending.
    pub eigenvalues: Vec<f64>,
    /// Amplification factor of each eigenvalue, same order.
    pub amplification: Vec<f64>,
    /// `|μ_{N-1}| / |μ_N|` for the two largest factors in modulus.
    pub predicted_rate: Option<f64>,
    /// Geometric decay rate of the error angle, fitted from the iteration.
    pub observed_rate: Option<f64>,
    /// Top two factors too close in modulus to assert a rate.
    pub degenerate: bool,
    pub iterations: usize,
}

fn hermitian_check(h: &DMatrix<Complex64>) -> Result<()> {
    if !h.is_square() || h.nrows() == 0 {
        return Err(Error::InvalidParameter("H must be square and nonempty".into()));
    }
    if h.nrows() > 256 {
        return Err(Error::InvalidParameter("dense analysis is limited to n <= 256".into()));
    }
    let scale = h.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
    for i in 0..h.nrows() {
        for j in 0..h.ncols() {
            if (h[(i, j)] - h[(j, i)].conj()).norm() > 1e-12 * scale {
                return Err(Error::InvalidParameter("H is not Hermitian".into()));
            }
        }
    }
    Ok(())
}

/// Applies one linear step of `scheme` to `x` by matrix products or solves.
/// The λ variants use the asymptotic multiplier `shift` (the eigenvalue the
/// iteration converges to).
struct DenseScheme {
    kind: SchemeKind,
    dt: f64,
    shift: f64,
    h: DMatrix<Complex64>,
    lu: Option<nalgebra::LU<Complex64, nalgebra::Dyn, nalgebra::Dyn>>,
}

impl DenseScheme {
    fn new(h: &DMatrix<Complex64>, kind: SchemeKind, dt: f64, shift: f64) -> Self {
        let n = h.nrows();
        let eye = DMatrix::<Complex64>::identity(n, n);
        let shift_m = &eye * Complex64::new(if kind.uses_lambda() { shift } else { 0.0 }, 0.0);
        let hs = h - &shift_m;
        let lu = match kind {
            SchemeKind::Be | SchemeKind::BeLambda => Some((&eye + &hs * Complex64::new(dt, 0.0)).lu()),
            SchemeKind::Cn | SchemeKind::CnLambda => Some((&eye + &hs * Complex64::new(dt / 2.0, 0.0)).lu()),
            _ => None,
        };
        DenseScheme { kind, dt, shift, h: hs, lu }
    }

    fn apply(&self, x: &DVector<Complex64>) -> DVector<Complex64> {
        let dt = Complex64::new(self.dt, 0.0);
        match self.kind {
            SchemeKind::Fe | SchemeKind::FeLambda => x - &self.h * x * dt,
            SchemeKind::Be | SchemeKind::BeLambda => self.lu.as_ref().unwrap().solve(x).expect("nonsingular"),
            SchemeKind::Cn | SchemeKind::CnLambda => {
                let rhs = x - &self.h * x * (dt / 2.0);
                self.lu.as_ref().unwrap().solve(&rhs).expect("nonsingular")
            }
        }
    }

    fn factor(&self, lambda: f64) -> f64 {
        let l = lambda - if self.kind.uses_lambda() { self.shift } else { 0.0 };
        let dt = self.dt;
        match self.kind {
            SchemeKind::Fe | SchemeKind::FeLambda => 1.0 - dt * l,
            SchemeKind::Be | SchemeKind::BeLambda => 1.0 / (1.0 + dt * l),
            SchemeKind::Cn | SchemeKind::CnLambda => (1.0 - 0.5 * dt * l) / (1.0 + 0.5 * dt * l),
        }
    }
}

/// Power-iteration view of an imaginary-time scheme on a dense Hermitian `H`.
///
/// The λ variants freeze the multiplier at the lowest eigenvalue of `H`.
pub fn amplification_analysis(
    h: &DMatrix<Complex64>,
    scheme: SchemeKind,
    dt: f64,
    iterations: usize,
    seed: u64,
) -> Result<SpectralTransformReport> {
    use rand::{Rng, SeedableRng};

    hermitian_check(h)?;
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter("dt must be positive".into()));
    }
    let n = h.nrows();
    let eig = h.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let dense = DenseScheme::new(h, scheme, dt, eigenvalues[0]);
    let amplification: Vec<f64> = eigenvalues.iter().map(|&l| dense.factor(l)).collect();

    let mut by_modulus: Vec<usize> = (0..n).collect();
    by_modulus.sort_by(|&a, &b| amplification[b].abs().total_cmp(&amplification[a].abs()));
    let (top, second) = (by_modulus[0], *by_modulus.get(1).unwrap_or(&by_modulus[0]));
    let degenerate = n < 2 || amplification[top].abs() - amplification[second].abs() < 1e-12;
    let predicted_rate = (!degenerate).then(|| amplification[second].abs() / amplification[top].abs());

    // Power iteration with the actual operator.
    let v_top = eig.eigenvectors.column(order[top]).into_owned();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut x = DVector::<Complex64>::from_fn(n, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    x /= Complex64::new(x.norm(), 0.0);
    let mut angles = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        x = dense.apply(&x);
        let nx = x.norm();
        x /= Complex64::new(nx, 0.0);
        let c = v_top.dotc(&x);
        let err = (&x - &v_top * c).norm();
        angles.push(err);
    }
    let observed_rate = if degenerate { None } else { fit_rate(&angles) };
    Ok(SpectralTransformReport {
        scheme,
        dt,
        eigenvalues,
        amplification,
        predicted_rate,
        observed_rate,
        degenerate,
        iterations,
    })
}

/// Least-squares slope of `ln s_k` over the second half of the samples
/// that stay above the roundoff floor.
fn fit_rate(samples: &[f64]) -> Option<f64> {
    let usable: Vec<(f64, f64)> = samples
        .iter()
        .enumerate()
        .take_while(|(_, s)| **s > 1e-11)
        .map(|(k, s)| (k as f64, s.ln()))
        .collect();
    let window = &usable[usable.len() / 2..];
    if window.len() < 5 {
        return None;
    }
    let m = window.len() as f64;
    let (sx, sy) = window.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (sx / m, sy / m);
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in window {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    Some((sxy / sxx).exp())
}

/// Rayleigh quotient iteration from `x0`; returns `‖Hx - ρx‖` after each step.
/// A demonstration of the cubic local rate, not a production solver.
pub fn rayleigh_quotient_iteration(h: &DMatrix<Complex64>, x0: &DVector<Complex64>, steps: usize) -> Result<Vec<f64>> {
    hermitian_check(h)?;
    let n = h.nrows();
    let mut x = x0 / Complex64::new(x0.norm(), 0.0);
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        let rho = x.dotc(&(h * &x)).re;
        let res = (h * &x - &x * Complex64::new(rho, 0.0)).norm();
        out.push(res);
        if res < 1e-14 {
            break;
        }
        let shifted = h - DMatrix::<Complex64>::identity(n, n) * Complex64::new(rho, 0.0);
        match shifted.lu().solve(&x) {
            Some(y) => x = &y / Complex64::new(y.norm(), 0.0),
            None => break,
        }
    }
    Ok(out)
}

/// Dense matrix of `H_ρ = -½Δ + V + ηρ - ΩL_z` with the density frozen,
/// in the node basis (Hermitian for the unweighted inner product).
pub fn dense_hamiltonian(model: &Model, rho: &[f64]) -> Result<DMatrix<Complex64>> {
    let n = model.grid().len();
    if rho.len() != n {
        return Err(Error::GridMismatch);
    }
    if n > 4096 {
        return Err(Error::InvalidParameter(format!("dense Hamiltonian limited to 4096 nodes, got {n}")));
    }
    let mut m = DMatrix::<Complex64>::zeros(n, n);
    for col in 0..n {
        let mut e = vec![Complex64::new(0.0, 0.0); n];
        e[col] = Complex64::new(1.0, 0.0);
        let img = model.linear_image(&e);
        let he = model.hamiltonian_from_image(&e, &img, rho);
        for (row, z) in he.into_iter().enumerate() {
            m[(row, col)] = z;
        }
    }
    Ok(m)
}

/// Spectral condition estimate of the projected, preconditioned Hessian.
#[derive(Debug, Clone, Serialize)]
pub struct ConditionReport {
    pub sigma: f64,
    pub largest: f64,
    pub smallest_nonzero: f64,
    pub residual_inf: f64,
    /// `false` when `‖r‖_∞ > 1e-6`: the estimate then describes a non-stationary point.
    pub stationary: bool,
}

/// `σ` of `M = Π P (∇²E/2 - λ) Π` at `phi`, with `Π f = f - Re<φ, f> φ`,
/// by dense assembly of the real-linear operator (needs `2 M^d <= 1024`).
pub fn precond_hessian_condition(phi: &WaveField, model: &Model, precond: &Preconditioner) -> Result<ConditionReport> {
    require_unit(phi)?;
    let grid = model.grid();
    let n = grid.len();
    if 2 * n > 1024 {
        return Err(Error::InvalidParameter(format!("dense condition estimate needs at most 512 nodes, got {n}")));
    }
    let w = grid.cell_volume();
    let eta = model.eta();
    let p = phi.values();
    let rho = phi.density();
    let img = model.linear_image(p);
    let h_phi = model.hamiltonian_from_image(p, &img, &rho);
    let lambda = vecops::re_dot(p, &h_phi, w);
    let residual_inf = h_phi.iter().zip(p).map(|(a, b)| (a - b * lambda).norm()).fold(0.0, f64::max);

    let project = |f: &mut Vec<Complex64>| {
        let c = vecops::re_dot(p, f, w);
        vecops::axpy(-c, p, f);
    };
    let mut m = DMatrix::<f64>::zeros(2 * n, 2 * n);
    for col in 0..2 * n {
        let mut f = vec![Complex64::new(0.0, 0.0); n];
        f[col % n] = if col < n { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 1.0) };
        project(&mut f);
        let img_f = model.linear_image(&f);
        let hf = model.hamiltonian_from_image(&f, &img_f, &rho);
        let af: Vec<Complex64> = hf
            .iter()
            .zip(&f)
            .zip(p.iter().zip(&rho))
            .map(|((h, fk), (pk, r))| h + fk * (eta * r - lambda) + pk * pk * fk.conj() * eta)
            .collect();
        let mut out = precond.apply_values(&af);
        project(&mut out);
        for (k, z) in out.iter().enumerate() {
            m[(k, col)] = z.re;
            m[(n + k, col)] = z.im;
        }
    }
    let eig = m.complex_eigenvalues();
    let moduli: Vec<f64> = eig.iter().map(|z| z.norm()).collect();
    let largest = moduli.iter().copied().fold(0.0, f64::max);
    let cutoff = 1e-8 * largest;
    let smallest_nonzero = moduli.iter().copied().filter(|&v| v > cutoff).fold(f64::INFINITY, f64::min);
    Ok(ConditionReport {
        sigma: largest / smallest_nonzero,
        largest,
        smallest_nonzero,
        residual_inf,
        stationary: residual_inf <= 1e-6,
    })
}
