//! Riemannian gradient (PG) and conjugate-gradient (PCG) descent on the
//! unit sphere.
//!
//! Each iteration touches the spectral transforms only through the
//! preconditioner's fused path: the iterate, the search direction and their
//! images under `-½Δ` and `L_z` are updated by linearity, so trial energies
//! along the retraction cost no transforms at all.

use std::fmt;
use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{require_unit, EnergyBreakdown, LinearImage, Model};
use crate::precond::{Preconditioner, PreconditionerKind, ShiftPolicy};
use crate::spectral::WaveField;
use crate::vecops;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Pg,
    #[default]
    Pcg,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Pg => "pg",
            Method::Pcg => "pcg",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StopCriterion {
    /// `|E(φ_{n+1}) - E(φ_n)| <= ε`
    #[default]
    EnergyDiff,
    /// `‖r_{n+1}‖_∞ <= ε`
    ResidualInf,
    /// `‖φ_{n+1} - φ_n‖_∞ <= ε`
    IterateDiff,
}

impl StopCriterion {
    pub fn name(self) -> &'static str {
        match self {
            StopCriterion::EnergyDiff => "energy_diff",
            StopCriterion::ResidualInf => "residual_inf",
            StopCriterion::IterateDiff => "iterate_diff",
        }
    }

    /// The indicator this criterion watches, read from a record.
    pub fn indicator(self, rec: &ConvergenceRecord) -> f64 {
        match self {
            StopCriterion::EnergyDiff => rec.energy_change.abs(),
            StopCriterion::ResidualInf => rec.residual_inf,
            StopCriterion::IterateDiff => rec.step_inf,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub method: Method,
    pub precond: PreconditionerKind,
    pub precond_shift: ShiftPolicy,
    pub stop: StopCriterion,
    pub tol: f64,
    pub max_iter: usize,
    pub theta_default: f64,
    pub backtrack_factor: f64,
    pub max_backtracks: usize,
    pub full_linesearch: bool,
    /// Use this angle for every step instead of the second-order heuristic.
    pub fixed_theta: Option<f64>,
    /// Recompute the linear images from scratch every this many iterations (0 = never).
    pub refresh_interval: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            method: Method::Pcg,
            precond: PreconditionerKind::Sym,
            precond_shift: ShiftPolicy::Adaptive,
            stop: StopCriterion::EnergyDiff,
            tol: 1e-12,
            max_iter: 10_000,
            theta_default: 0.1,
            backtrack_factor: 0.5,
            max_backtracks: 30,
            full_linesearch: false,
            fixed_theta: None,
            refresh_interval: 100,
        }
    }
}

impl SolverConfig {
    pub fn new(method: Method, precond: PreconditionerKind) -> Self {
        SolverConfig { method, precond, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol >= 0.0) {
            return Err(Error::InvalidParameter(format!("tol must be >= 0, got {}", self.tol)));
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "backtrack_factor must lie in (0, 1), got {}",
                self.backtrack_factor
            )));
        }
        if !(self.theta_default > 0.0) {
            return Err(Error::InvalidParameter("theta_default must be positive".into()));
        }
        if let Some(t) = self.fixed_theta {
            if !(t > 0.0) {
                return Err(Error::InvalidParameter("fixed_theta must be positive".into()));
            }
        }
        if let ShiftPolicy::Fixed(a) = self.precond_shift {
            if !(a > 0.0) {
                return Err(Error::InvalidParameter(format!("precond_shift must be positive, got {a}")));
            }
        }
        Ok(())
    }
}

/// One row of the convergence history. Row `n` describes iterate `φ_n`;
/// the step fields describe the move from `φ_{n-1}`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct ConvergenceRecord {
    pub n: usize,
    pub energy: f64,
    pub energy_change: f64,
    pub lambda: f64,
    pub residual_inf: f64,
    pub step_inf: f64,
    pub theta: f64,
    pub beta: f64,
    pub backtracks: usize,
    /// Cumulative transform count since the start of the run.
    pub transforms: u64,
    pub restarted: bool,
    /// Cumulative inner Krylov iterations (imaginary-time schemes only).
    pub inner_iters: usize,
    /// Seconds since the start of the run.
    pub wall_time: f64,
}

impl ConvergenceRecord {
    pub const CSV_HEADER: &'static str =
        "n,energy,energy_change,lambda,residual_inf,step_inf,theta,beta,backtracks,transforms,restarted,inner_iters";

    /// CSV row without the wall time, so reruns are byte-identical.
    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{},{},{},{}",
            self.n,
            self.energy,
            self.energy_change,
            self.lambda,
            self.residual_inf,
            self.step_inf,
            self.theta,
            self.beta,
            self.backtracks,
            self.transforms,
            self.restarted as u8,
            self.inner_iters
        )
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub phi: WaveField,
    pub energy: EnergyBreakdown,
    pub lambda: f64,
    pub residual_inf: f64,
    pub records: Vec<ConvergenceRecord>,
    pub converged: bool,
    pub iterations: usize,
    pub transforms: u64,
    pub inner_iters: usize,
    pub wall_time: f64,
}

#[derive(Debug)]
pub enum SolveError {
    /// The energy could not be decreased within the backtracking budget;
    /// carries the last accepted iterate.
    Stalled { iteration: usize, solution: Box<Solution> },
    Failed(Error),
}

impl fmt::Display for SolveError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolveError::Stalled { iteration, solution } => write!(
                f,
                "no energy decrease after backtracking at iteration {iteration} (E = {:.15}, last |dE| = {:e})",
                solution.energy.total,
                solution.records.last().map(|r| r.energy_change.abs()).unwrap_or(0.0)
            ),
            SolveError::Failed(e) => e.fmt(f),
        }
    }
}

impl std::error::Error for SolveError {}

impl From<Error> for SolveError {
    fn from(e: Error) -> Self {
        SolveError::Failed(e)
    }
}

/// `r = H_φ φ - λ φ` with `λ = Re<H_φ φ, φ>`.
pub fn residual(phi: &WaveField, model: &Model) -> Result<(WaveField, f64)> {
    require_unit(phi)?;
    let h = model.apply_hamiltonian(phi, phi)?;
    let lambda = vecops::re_dot(phi.values(), h.values(), model.grid().cell_volume());
    let r = h.add_scaled(-lambda, phi)?;
    Ok((r, lambda))
}

/// `d - Re<φ, d> φ`.
pub fn tangent_project(d: &WaveField, phi: &WaveField) -> Result<WaveField> {
    let c = crate::spectral::inner(phi, d)?.re;
    d.add_scaled(-c, phi)
}

/// Second-order step angle along `p_dir` from `φ`.
///
/// Returns `(θ, denom)` where `θ = -Re<∇E, p̂> / denom` and
/// `denom = ∇²E(φ)[p̂, p̂] - 2λ` is the curvature of `θ ↦ E(cos θ φ + sin θ p̂)` at 0.
/// The caller decides what to do when `denom <= 0`.
pub fn theta_opt(phi: &WaveField, p_dir: &WaveField, grad: &WaveField, model: &Model, lambda: f64) -> Result<(f64, f64)> {
    let n = p_dir.norm();
    if n == 0.0 || !n.is_finite() {
        return Err(Error::DegenerateDirection);
    }
    let p_hat = p_dir.scaled(Complex64::new(1.0 / n, 0.0));
    let num = -crate::spectral::inner(grad, &p_hat)?.re;
    let denom = model.hessian_quadratic_form(phi, &p_hat)? - 2.0 * lambda;
    let theta = if num == 0.0 { 0.0 } else { num / denom };
    Ok((theta, denom))
}

/// Retraction `cos θ φ + sin θ p/‖p‖`, renormalized.
pub fn step(phi: &WaveField, p_dir: &WaveField, theta: f64) -> Result<WaveField> {
    let n = p_dir.norm();
    if n == 0.0 {
        return Err(Error::DegenerateDirection);
    }
    let values = vecops::lincomb(theta.cos(), phi.values(), theta.sin() / n, p_dir.values());
    WaveField::from_values(phi.grid(), values)?.normalized()
}

/// Whether the configured criterion is met by the latest record.
pub fn check_stop(history: &[ConvergenceRecord], cfg: &SolverConfig) -> bool {
    match history.last() {
        Some(rec) if rec.n > 0 || cfg.stop == StopCriterion::ResidualInf => {
            cfg.tol > 0.0 && cfg.stop.indicator(rec) <= cfg.tol
        }
        _ => false,
    }
}

/// Exact minimizer of `θ ↦ E(cos θ φ + sin θ p̂)` over `(0, π)`.
pub fn linesearch_full(phi: &WaveField, p_dir: &WaveField, model: &Model) -> Result<f64> {
    let n = p_dir.norm();
    if n == 0.0 {
        return Err(Error::DegenerateDirection);
    }
    let p_hat: Vec<Complex64> = p_dir.values().iter().map(|z| z / n).collect();
    let img_phi = model.linear_image(phi.values());
    let img_p = model.linear_image(&p_hat);
    let curve = EnergyCurve::new(model, phi.values(), &img_phi, &p_hat, &img_p);
    Ok(curve.argmin())
}

/// `E(θ)` along the retraction, with the quadratic part reduced to three numbers.
struct EnergyCurve<'a> {
    model: &'a Model,
    phi: &'a [Complex64],
    p: &'a [Complex64],
    mean: f64,
    cos2: f64,
    sin2: f64,
}

impl<'a> EnergyCurve<'a> {
    fn new(
        model: &'a Model,
        phi: &'a [Complex64],
        img_phi: &LinearImage,
        p: &'a [Complex64],
        img_p: &LinearImage,
    ) -> Self {
        let zero = vec![0.0; phi.len()];
        let w = model.grid().cell_volume();
        let lin_phi = model.hamiltonian_from_image(phi, img_phi, &zero);
        let lin_p = model.hamiltonian_from_image(p, img_p, &zero);
        let a = vecops::re_dot(phi, &lin_phi, w);
        let b = vecops::re_dot(p, &lin_p, w);
        let c = vecops::re_dot(phi, &lin_p, w);
        EnergyCurve { model, phi, p, mean: 0.5 * (a + b), cos2: 0.5 * (a - b), sin2: c }
    }

    fn eval(&self, theta: f64) -> f64 {
        let (s, c) = theta.sin_cos();
        let quad = self.mean + self.cos2 * (2.0 * theta).cos() + self.sin2 * (2.0 * theta).sin();
        let eta = self.model.eta();
        if eta == 0.0 {
            return quad;
        }
        let mut acc = 0.0;
        for (u, v) in self.phi.iter().zip(self.p) {
            let rho = (u * c + v * s).norm_sqr();
            acc += rho * rho;
        }
        quad + 0.5 * eta * acc * self.model.grid().cell_volume()
    }

    fn argmin(&self) -> f64 {
        const SAMPLES: usize = 256;
        let h = std::f64::consts::PI / SAMPLES as f64;
        let mut best = 1;
        let mut best_e = f64::INFINITY;
        for k in 1..SAMPLES {
            let e = self.eval(k as f64 * h);
            if e < best_e {
                best_e = e;
                best = k;
            }
        }
        brent(|t| self.eval(t), (best - 1) as f64 * h, (best + 1) as f64 * h, 1e-12)
    }
}

/// Brent's minimizer on `[a, b]` (golden section with parabolic steps).
fn brent(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    const GOLD: f64 = 0.381_966_011_250_105_1;
    let mut x = a + GOLD * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = f(x);
    let (mut fw, mut fv) = (fx, fx);
    let (mut d, mut e) = (0.0f64, 0.0f64);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        let tol1 = tol * x.abs() + 1e-15;
        let tol2 = 2.0 * tol1;
        if (x - m).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            if p.abs() < (0.5 * q * e).abs() && p > q * (a - x) && p < q * (b - x) {
                e = d;
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if x < m { tol1 } else { -tol1 };
                }
                golden = false;
            }
        }
        if golden {
            e = if x < m { b - x } else { a - x };
            d = GOLD * e;
        }
        let u = if d.abs() >= tol1 { x + d } else { x + tol1.copysign(d) };
        let fu = f(u);
        if fu <= fx {
            if u < x {
                b = x;
            } else {
                a = x;
            }
            (v, fv, w, fw, x, fx) = (w, fw, x, fx, u, fu);
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                (v, fv, w, fw) = (w, fw, u, fu);
            } else if fu <= fv || v == x || v == w {
                (v, fv) = (u, fu);
            }
        }
    }
    x
}

/// Iterate with everything the next step needs, all transform-free to refresh.
struct Iterate {
    phi: Vec<Complex64>,
    img: LinearImage,
    rho: Vec<f64>,
    energy: EnergyBreakdown,
    lambda: f64,
    r: Vec<Complex64>,
}

impl Iterate {
    fn new(model: &Model, phi: Vec<Complex64>, img: LinearImage) -> Self {
        let w = model.grid().cell_volume();
        let rho: Vec<f64> = phi.iter().map(|z| z.norm_sqr()).collect();
        let energy = model.energy_parts(&phi, &img);
        let h = model.hamiltonian_from_image(&phi, &img, &rho);
        let lambda = vecops::re_dot(&phi, &h, w);
        let mut r = h;
        vecops::axpy(-lambda, &phi, &mut r);
        Iterate { phi, img, rho, energy, lambda, r }
    }
}

struct Direction {
    p: Vec<Complex64>,
    img: LinearImage,
}

pub fn solve_pg(phi0: &WaveField, model: &Model, cfg: &SolverConfig) -> Result<Solution, SolveError> {
    solve(phi0, model, &SolverConfig { method: Method::Pg, ..cfg.clone() })
}

pub fn solve_pcg(phi0: &WaveField, model: &Model, cfg: &SolverConfig) -> Result<Solution, SolveError> {
    solve(phi0, model, &SolverConfig { method: Method::Pcg, ..cfg.clone() })
}

/// Runs the method selected in `cfg`.
pub fn solve(phi0: &WaveField, model: &Model, cfg: &SolverConfig) -> Result<Solution, SolveError> {
    cfg.validate()?;
    if phi0.grid() != model.grid() {
        return Err(Error::GridMismatch.into());
    }
    if !phi0.is_finite() {
        return Err(Error::NonFinite.into());
    }
    require_unit(phi0)?;

    let grid = model.grid();
    let w = grid.cell_volume();
    let start = Instant::now();
    let t0 = grid.transform_count();

    let img0 = model.linear_image(phi0.values());
    let mut it = Iterate::new(model, phi0.values().to_vec(), img0);
    let mut records = vec![ConvergenceRecord {
        n: 0,
        energy: it.energy.total,
        lambda: it.lambda,
        residual_inf: vecops::max_abs(&it.r),
        transforms: grid.transform_count() - t0,
        wall_time: start.elapsed().as_secs_f64(),
        ..Default::default()
    }];

    let finish = |it: Iterate, records: Vec<ConvergenceRecord>, converged: bool| -> Solution {
        // Report energies from freshly computed images, free of update drift.
        let img = model.linear_image(&it.phi);
        let fresh = Iterate::new(model, it.phi, img);
        let phi = WaveField::from_values(grid, fresh.phi).expect("grid size");
        Solution {
            energy: fresh.energy,
            lambda: fresh.lambda,
            residual_inf: vecops::max_abs(&fresh.r),
            iterations: records.len() - 1,
            transforms: grid.transform_count() - t0,
            wall_time: start.elapsed().as_secs_f64(),
            inner_iters: 0,
            converged,
            records,
            phi,
        }
    };

    if check_stop(&records, cfg) {
        return Ok(finish(it, records, true));
    }

    let mut prev: Option<(Vec<Complex64>, f64, Direction)> = None; // (r, Re<r, Pr>, p)
    let mut restart_next = false;

    for n in 1..=cfg.max_iter {
        let alpha = cfg.precond_shift.resolve(it.energy.characteristic());
        let precond = Preconditioner::new(cfg.precond, alpha, &it.rho, model)?;
        let (q, img_q) = precond.apply_fused(&it.r, model);
        let rq = vecops::re_dot(&it.r, &q, w);

        // β (Polak–Ribière, clipped at zero)
        let mut beta = 0.0;
        if cfg.method == Method::Pcg && !restart_next {
            if let Some((r_prev, rq_prev, _)) = &prev {
                if *rq_prev != 0.0 {
                    let num = rq - vecops::re_dot(r_prev, &q, w);
                    beta = (num / rq_prev).max(0.0);
                }
            }
        }

        let make_direction = |beta: f64| -> Direction {
            // d = -q + β p_prev, then project onto the tangent space.
            let mut d = q.iter().map(|z| -z).collect::<Vec<_>>();
            let mut img_d = LinearImage { kin: img_q.kin.iter().map(|z| -z).collect(), lz: img_q.lz.iter().map(|z| -z).collect() };
            if beta != 0.0 {
                let (_, _, pp) = prev.as_ref().expect("β > 0 needs a previous direction");
                vecops::axpy(beta, &pp.p, &mut d);
                img_d.axpy(beta, &pp.img);
            }
            let c = vecops::re_dot(&it.phi, &d, w);
            vecops::axpy(-c, &it.phi, &mut d);
            img_d.axpy(-c, &it.img);
            Direction { p: d, img: img_d }
        };

        let mut restarted = false;
        let mut dir = make_direction(beta);
        let mut slope = vecops::re_dot(&it.r, &dir.p, w);
        if slope >= 0.0 && beta > 0.0 {
            beta = 0.0;
            restarted = true;
            dir = make_direction(0.0);
            slope = vecops::re_dot(&it.r, &dir.p, w);
        }
        if slope > 0.0 {
            // P is not positive on this residual (C1/C2 are not symmetric).
            vecops::scale(-1.0, &mut dir.p);
            dir.img.scale(-1.0);
            slope = -slope;
        }
        debug_assert!(beta == 0.0 || slope < 0.0);

        let pnorm = vecops::norm(&dir.p, w);
        if pnorm == 0.0 || slope == 0.0 {
            // Stationary to working precision.
            return Ok(finish(it, records, true));
        }
        let inv = 1.0 / pnorm;
        let p_hat: Vec<Complex64> = dir.p.iter().map(|z| z * inv).collect();
        let mut img_p = dir.img.clone();
        img_p.scale(inv);

        let mut theta = if let Some(t) = cfg.fixed_theta {
            t
        } else if cfg.full_linesearch {
            EnergyCurve::new(model, &it.phi, &it.img, &p_hat, &img_p).argmin()
        } else {
            let hp = model.hamiltonian_from_image(&p_hat, &img_p, &it.rho);
            let hess = 2.0 * (vecops::re_dot(&p_hat, &hp, w) + model.quartic_curvature(&it.phi, &p_hat));
            let denom = hess - 2.0 * it.lambda;
            let num = -2.0 * slope * inv;
            if denom > 0.0 {
                num / denom
            } else {
                cfg.theta_default
            }
        };
        if !cfg.full_linesearch {
            theta = theta.clamp(f64::MIN_POSITIVE, std::f64::consts::FRAC_PI_2);
        }

        let mut backtracks = 0;
        let accepted = loop {
            let (s, c) = theta.sin_cos();
            let mut phi_t = vecops::lincomb(c, &it.phi, s, &p_hat);
            let mut img_t = LinearImage::lincomb(c, &it.img, s, &img_p);
            let nt = vecops::norm(&phi_t, w);
            vecops::scale(1.0 / nt, &mut phi_t);
            img_t.scale(1.0 / nt);
            let trial = Iterate::new(model, phi_t, img_t);
            if trial.energy.total <= it.energy.total {
                break Some(trial);
            }
            if backtracks >= cfg.max_backtracks {
                break None;
            }
            backtracks += 1;
            theta *= cfg.backtrack_factor;
        };

        let Some(mut next) = accepted else {
            let sol = finish(it, records, false);
            return Err(SolveError::Stalled { iteration: n, solution: Box::new(sol) });
        };

        if cfg.refresh_interval > 0 && n % cfg.refresh_interval == 0 {
            let img = model.linear_image(&next.phi);
            next = Iterate::new(model, next.phi, img);
        }

        let step_inf = vecops::max_abs_diff(&next.phi, &it.phi);
        records.push(ConvergenceRecord {
            n,
            energy: next.energy.total,
            energy_change: next.energy.total - it.energy.total,
            lambda: next.lambda,
            residual_inf: vecops::max_abs(&next.r),
            step_inf,
            theta,
            beta,
            backtracks,
            transforms: grid.transform_count() - t0,
            restarted,
            inner_iters: 0,
            wall_time: start.elapsed().as_secs_f64(),
        });

        restart_next = backtracks >= 2;
        let r_old = std::mem::replace(&mut it, next).r;
        prev = Some((r_old, rq, dir));

        if check_stop(&records, cfg) {
            return Ok(finish(it, records, true));
        }
    }
    Ok(finish(it, records, false))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelParams, PotentialSpec};
    use crate::spectral::{inner, Grid, GridSpec};

    fn model_1d(eta: f64, m: usize) -> (Grid, Model) {
        let grid = Grid::new(GridSpec::new(1, 8.0, m).unwrap()).unwrap();
        let model = Model::new(&grid, ModelParams::new(eta, 0.0, PotentialSpec::harmonic(&[1.0]))).unwrap();
        (grid, model)
    }

    fn start(grid: &Grid) -> WaveField {
        WaveField::from_fn(grid, |x| Complex64::new((-(x[0] - 0.5).powi(2)).exp(), 0.2 * x[0] * (-x[0] * x[0]).exp()))
            .normalized()
            .unwrap()
    }

    #[test]
    fn tangent_projection_examples() {
        let (grid, _) = model_1d(0.0, 32);
        let phi = start(&grid);
        assert!(tangent_project(&phi, &phi).unwrap().norm() < 1e-15);
        let iphi = phi.scaled(Complex64::new(0.0, 1.0));
        assert!(tangent_project(&iphi, &phi).unwrap().max_abs_diff(&iphi).unwrap() < 1e-15);
        let d = WaveField::from_fn(&grid, |x| Complex64::new(x[0].sin(), 0.3));
        let t = tangent_project(&d, &phi).unwrap();
        assert!(inner(&t, &phi).unwrap().re.abs() < 1e-15);
        let tt = tangent_project(&t, &phi).unwrap();
        assert!(tt.max_abs_diff(&t).unwrap() < 1e-15);
    }

    #[test]
    fn step_examples() {
        let (grid, model) = model_1d(0.0, 32);
        let phi = start(&grid);
        let (r, _) = residual(&phi, &model).unwrap();
        assert!(inner(&r, &phi).unwrap().re.abs() < 1e-12);
        assert_eq!(step(&phi, &r, 0.0).unwrap().max_abs_diff(&phi).unwrap(), 0.0);
        let quarter = step(&phi, &r, std::f64::consts::FRAC_PI_2).unwrap();
        let r_hat = r.clone().normalized().unwrap();
        assert!(quarter.max_abs_diff(&r_hat).unwrap() < 1e-14);
        assert!((step(&phi, &r, 0.37).unwrap().norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn theta_zero_when_orthogonal() {
        let (grid, model) = model_1d(10.0, 32);
        let phi = start(&grid);
        let grad = model.gradient(&phi).unwrap();
        // direction orthogonal (in the real sense) to both φ and ∇E
        let d = WaveField::from_fn(&grid, |x| Complex64::new((x[0] * 2.0).cos(), 0.0));
        let d = tangent_project(&d, &phi).unwrap();
        let c = inner(&grad, &d).unwrap().re / inner(&grad, &grad).unwrap().re;
        let d = d.add_scaled(-c, &grad).unwrap();
        let d = tangent_project(&d, &phi).unwrap();
        let g_t = tangent_project(&grad, &phi).unwrap();
        let c2 = inner(&g_t, &d).unwrap().re / inner(&g_t, &g_t).unwrap().re;
        let d = d.add_scaled(-c2, &g_t).unwrap();
        let (theta, _) = theta_opt(&phi, &d, &grad, &model, 0.0).unwrap();
        assert!(theta.abs() < 1e-12, "{theta}");
        assert!(theta_opt(&phi, &WaveField::zeros(&grid), &grad, &model, 0.0).is_err());
    }

    #[test]
    fn theta_matches_energy_curve_derivatives() {
        let (grid, model) = model_1d(25.0, 64);
        let phi = start(&grid);
        let (r, lambda) = residual(&phi, &model).unwrap();
        let p = r.scaled(Complex64::new(-1.0, 0.0));
        let grad = model.gradient(&phi).unwrap();
        let (theta, denom) = theta_opt(&phi, &p, &grad, &model, lambda).unwrap();
        let e = |t: f64| model.energy(&step(&phi, &p, t).unwrap()).unwrap().total;
        let h = 1e-4;
        let d1 = (e(h) - e(-h)) / (2.0 * h);
        let d2 = (e(h) - 2.0 * e(0.0) + e(-h)) / (h * h);
        assert!((denom - d2).abs() < 1e-4 * d2.abs(), "{denom} vs {d2}");
        assert!((theta - (-d1 / d2)).abs() < 1e-4 * theta.abs());
    }

    #[test]
    fn full_linesearch_linear_closed_form() {
        let (grid, model) = model_1d(0.0, 64);
        let phi = start(&grid);
        let (r, _) = residual(&phi, &model).unwrap();
        let theta = linesearch_full(&phi, &r, &model).unwrap();
        let e = |t: f64| model.energy(&step(&phi, &r, t).unwrap()).unwrap().total;
        // scan
        let best = (1..10_000)
            .map(|k| k as f64 * std::f64::consts::PI / 10_000.0)
            .map(|t| (t, e(t)))
            .fold((0.0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
        assert!(e(theta) <= best.1 + 1e-12);
    }

    #[test]
    fn stop_rules() {
        let cfg = SolverConfig { tol: 0.0, ..Default::default() };
        let rec = ConvergenceRecord { n: 3, ..Default::default() };
        assert!(!check_stop(&[rec], &cfg));
        let cfg = SolverConfig { tol: 1e-12, ..Default::default() };
        assert!(check_stop(&[rec], &cfg));
        assert!(!check_stop(&[ConvergenceRecord { n: 0, ..Default::default() }], &cfg));
    }

    #[test]
    fn pg_and_pcg_reach_harmonic_ground_state() {
        let (grid, model) = model_1d(0.0, 64);
        let phi0 = start(&grid);
        for method in [Method::Pg, Method::Pcg] {
            for kind in PreconditionerKind::ALL {
                let cfg = SolverConfig { method, precond: kind, tol: 1e-14, max_iter: 5000, ..Default::default() };
                let sol = solve(&phi0, &model, &cfg).unwrap();
                assert!(sol.converged, "{method:?} {kind}");
                assert!((sol.energy.total - 0.5 * 2f64.sqrt()).abs() < 1e-10, "{method:?} {kind}: {}", sol.energy.total);
                for w in sol.records.windows(2) {
                    assert!(w[1].energy <= w[0].energy);
                }
            }
        }
    }

    #[test]
    fn rejects_bad_config() {
        let (grid, model) = model_1d(0.0, 16);
        let phi0 = start(&grid);
        let cfg = SolverConfig { backtrack_factor: 1.5, ..Default::default() };
        assert!(matches!(solve(&phi0, &model, &cfg), Err(SolveError::Failed(_))));
        let unnormalized = phi0.scaled(Complex64::new(2.0, 0.0));
        assert!(solve(&unnormalized, &model, &SolverConfig::default()).is_err());
    }
}
