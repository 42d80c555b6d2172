//! Energy functional, mean-field Hamiltonian and its derivatives, trap
//! potentials and initial data.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{Grid, WaveField};
use crate::vecops;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PotentialKind {
    #[default]
    Harmonic,
    HarmonicPlusLattice,
    HarmonicPlusQuartic,
    CustomIsotropicHalfSquare,
}

/// How the lattice term reads its argument: `sin²(q ν²)` or `sin²(q ν)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LatticeArgument {
    #[default]
    NuSquared,
    Nu,
}

/// Parametric trap. Per-axis vectors may be shorter than `d`; missing
/// entries default to `gamma = 1`, `lattice_kappa = 0`, `lattice_q = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PotentialSpec {
    pub kind: PotentialKind,
    pub gamma: Vec<f64>,
    pub lattice_kappa: Vec<f64>,
    pub lattice_q: Vec<f64>,
    pub lattice_argument: LatticeArgument,
    pub quartic_alpha: f64,
    pub quartic_kappa: f64,
}

impl Default for PotentialSpec {
    fn default() -> Self {
        PotentialSpec {
            kind: PotentialKind::Harmonic,
            gamma: vec![1.0, 1.0, 1.0],
            lattice_kappa: Vec::new(),
            lattice_q: Vec::new(),
            lattice_argument: LatticeArgument::NuSquared,
            quartic_alpha: 0.0,
            quartic_kappa: 0.0,
        }
    }
}

impl PotentialSpec {
    pub fn harmonic(gamma: &[f64]) -> Self {
        PotentialSpec { gamma: gamma.to_vec(), ..Default::default() }
    }

    pub fn lattice(gamma: &[f64], kappa: &[f64], q: &[f64]) -> Self {
        PotentialSpec {
            kind: PotentialKind::HarmonicPlusLattice,
            gamma: gamma.to_vec(),
            lattice_kappa: kappa.to_vec(),
            lattice_q: q.to_vec(),
            ..Default::default()
        }
    }

    pub fn quartic(gamma: &[f64], alpha: f64, kappa: f64) -> Self {
        PotentialSpec {
            kind: PotentialKind::HarmonicPlusQuartic,
            gamma: gamma.to_vec(),
            quartic_alpha: alpha,
            quartic_kappa: kappa,
            ..Default::default()
        }
    }

    pub fn half_square() -> Self {
        PotentialSpec { kind: PotentialKind::CustomIsotropicHalfSquare, ..Default::default() }
    }

    pub fn gamma(&self, axis: usize) -> f64 {
        self.gamma.get(axis).copied().unwrap_or(1.0)
    }

    fn lattice_kappa(&self, axis: usize) -> f64 {
        self.lattice_kappa.get(axis).copied().unwrap_or(0.0)
    }

    fn lattice_q(&self, axis: usize) -> f64 {
        self.lattice_q.get(axis).copied().unwrap_or(0.0)
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        let uses_gamma = self.kind != PotentialKind::CustomIsotropicHalfSquare;
        if uses_gamma {
            for axis in 0..dim {
                let g = self.gamma(axis);
                if !(g > 0.0 && g.is_finite()) {
                    return Err(Error::InvalidParameter(format!("gamma[{axis}] must be positive, got {g}")));
                }
            }
        }
        if self.kind == PotentialKind::HarmonicPlusLattice {
            for axis in 0..dim {
                if self.lattice_kappa(axis) < 0.0 {
                    return Err(Error::InvalidParameter(format!("lattice_kappa[{axis}] must be >= 0")));
                }
            }
        }
        if self.kind == PotentialKind::HarmonicPlusQuartic {
            if dim < 2 {
                return Err(Error::UnsupportedDimension { op: "harmonic plus quartic potential", dim });
            }
            if self.quartic_kappa < 0.0 {
                return Err(Error::InvalidParameter("quartic_kappa must be >= 0".into()));
            }
        }
        Ok(())
    }

    /// `V_d^0`: `γ_x² x²` in 1D, `Σ γ_ν ν²` otherwise.
    fn base_harmonic(&self, x: &[f64]) -> f64 {
        if x.len() == 1 {
            let g = self.gamma(0);
            g * g * x[0] * x[0]
        } else {
            x.iter().enumerate().map(|(a, v)| self.gamma(a) * v * v).sum()
        }
    }

    /// Value of the potential at one point (length of `x` is the dimension).
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self.kind {
            PotentialKind::Harmonic => self.base_harmonic(x),
            PotentialKind::HarmonicPlusLattice => {
                let lattice: f64 = x
                    .iter()
                    .enumerate()
                    .map(|(a, &v)| {
                        let arg = match self.lattice_argument {
                            LatticeArgument::NuSquared => self.lattice_q(a) * v * v,
                            LatticeArgument::Nu => self.lattice_q(a) * v,
                        };
                        self.lattice_kappa(a) * arg.sin().powi(2)
                    })
                    .sum();
                self.base_harmonic(x) + lattice
            }
            PotentialKind::HarmonicPlusQuartic => {
                let (gx, gy) = (self.gamma(0), self.gamma(1));
                let planar = gx * x[0] * x[0] + gy * x[1] * x[1];
                let r2 = x[0] * x[0] + x[1] * x[1];
                let mut v = (1.0 - self.quartic_alpha) * planar + self.quartic_kappa * r2 * r2 / 4.0;
                if x.len() == 3 {
                    let gz = self.gamma(2);
                    v += gz * gz * x[2] * x[2];
                }
                v
            }
            PotentialKind::CustomIsotropicHalfSquare => 0.5 * x.iter().map(|v| v * v).sum::<f64>(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub eta: f64,
    #[serde(default)]
    pub omega: f64,
    #[serde(default)]
    pub potential: PotentialSpec,
}

impl ModelParams {
    pub fn new(eta: f64, omega: f64, potential: PotentialSpec) -> Self {
        ModelParams { eta, omega, potential }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub kinetic: f64,
    pub potential: f64,
    pub interaction: f64,
    pub rotation: f64,
    pub total: f64,
}

impl EnergyBreakdown {
    /// `kinetic + potential + 2 interaction`, the shift used by the preconditioners.
    pub fn characteristic(&self) -> f64 {
        self.kinetic + self.potential + 2.0 * self.interaction
    }

    /// `E + interaction`, equal to `Re<H φ, φ>` for a unit field.
    pub fn chemical_potential(&self) -> f64 {
        self.total + self.interaction
    }
}

/// Images of a field under the linear operators `-½Δ` and `L_z`.
///
/// `lz` is empty when the rotation term is inactive.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearImage {
    pub kin: Vec<Complex64>,
    pub lz: Vec<Complex64>,
}

impl LinearImage {
    pub(crate) fn scale(&mut self, a: f64) {
        vecops::scale(a, &mut self.kin);
        vecops::scale(a, &mut self.lz);
    }

    /// `a*x + b*y` applied to both images.
    pub(crate) fn lincomb(a: f64, x: &LinearImage, b: f64, y: &LinearImage) -> LinearImage {
        LinearImage { kin: vecops::lincomb(a, &x.kin, b, &y.kin), lz: vecops::lincomb(a, &x.lz, b, &y.lz) }
    }

    pub(crate) fn axpy(&mut self, a: f64, x: &LinearImage) {
        vecops::axpy(a, &x.kin, &mut self.kin);
        vecops::axpy(a, &x.lz, &mut self.lz);
    }
}

/// Model parameters bound to a grid with the potential sampled once.
#[derive(Debug, Clone)]
pub struct Model {
    grid: Grid,
    params: ModelParams,
    potential: Arc<Vec<f64>>,
    omega: f64,
}

impl Model {
    pub fn new(grid: &Grid, params: ModelParams) -> Result<Self> {
        params.potential.validate(grid.dim())?;
        if !params.eta.is_finite() || !params.omega.is_finite() {
            return Err(Error::InvalidParameter("eta and omega must be finite".into()));
        }
        let d = grid.dim();
        let potential = (0..grid.len())
            .map(|idx| {
                let x = grid.node(idx);
                params.potential.eval(&x[..d])
            })
            .collect();
        // Rotation has no meaning on a line.
        let omega = if d >= 2 { params.omega } else { 0.0 };
        Ok(Model { grid: grid.clone(), params, potential: Arc::new(potential), omega })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn eta(&self) -> f64 {
        self.params.eta
    }

    /// Rotation speed actually used (zero in 1D).
    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn rotating(&self) -> bool {
        self.omega != 0.0
    }

    /// Sampled potential values.
    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    /// Same model on another grid.
    pub fn on_grid(&self, grid: &Grid) -> Result<Model> {
        Model::new(grid, self.params.clone())
    }

    fn check(&self, phi: &WaveField) -> Result<()> {
        if phi.grid() != &self.grid {
            return Err(Error::GridMismatch);
        }
        if !phi.is_finite() {
            return Err(Error::NonFinite);
        }
        Ok(())
    }

    /// `-½Δv` and (when rotating) `L_z v`, sharing one forward transform.
    pub fn linear_image(&self, v: &[Complex64]) -> LinearImage {
        let spectrum = self.grid.forward(v);
        self.image_from_spectrum(&spectrum)
    }

    pub(crate) fn image_from_spectrum(&self, spectrum: &[Complex64]) -> LinearImage {
        let mut kin = self.grid.laplacian_from_spectrum(spectrum);
        vecops::scale(-0.5, &mut kin);
        let lz = if self.rotating() {
            self.grid.lz_from_spectrum(spectrum).expect("rotation requires d >= 2")
        } else {
            Vec::new()
        };
        LinearImage { kin, lz }
    }

    /// Energy terms from a field and its precomputed linear image.
    pub(crate) fn energy_parts(&self, phi: &[Complex64], img: &LinearImage) -> EnergyBreakdown {
        let w = self.grid.cell_volume();
        let kinetic = vecops::re_dot(phi, &img.kin, w);
        let mut potential = 0.0;
        let mut quartic = 0.0;
        for (z, v) in phi.iter().zip(self.potential.iter()) {
            let rho = z.norm_sqr();
            potential += v * rho;
            quartic += rho * rho;
        }
        let potential = potential * w;
        let interaction = 0.5 * self.params.eta * quartic * w;
        let rotation = if self.rotating() { -self.omega * vecops::re_dot(phi, &img.lz, w) } else { 0.0 };
        EnergyBreakdown {
            kinetic,
            potential,
            interaction,
            rotation,
            total: kinetic + potential + interaction + rotation,
        }
    }

    /// `H_ρ v` from the image of `v`, where `rho` is the frozen density.
    pub(crate) fn hamiltonian_from_image(
        &self,
        v: &[Complex64],
        img: &LinearImage,
        rho: &[f64],
    ) -> Vec<Complex64> {
        let eta = self.params.eta;
        let mut out: Vec<Complex64> = v
            .iter()
            .zip(&img.kin)
            .zip(self.potential.iter().zip(rho))
            .map(|((z, k), (pot, r))| k + z * (pot + eta * r))
            .collect();
        if self.rotating() {
            vecops::axpy(-self.omega, &img.lz, &mut out);
        }
        out
    }

    pub fn energy(&self, phi: &WaveField) -> Result<EnergyBreakdown> {
        self.check(phi)?;
        let img = self.linear_image(phi.values());
        Ok(self.energy_parts(phi.values(), &img))
    }

    /// `(-½Δ + V + η|density|² - ω L_z) phi`.
    pub fn apply_hamiltonian(&self, phi: &WaveField, density: &WaveField) -> Result<WaveField> {
        self.check(phi)?;
        self.check(density)?;
        let img = self.linear_image(phi.values());
        let rho = density.density();
        WaveField::from_values(&self.grid, self.hamiltonian_from_image(phi.values(), &img, &rho))
    }

    /// `∇E(φ) = 2 H_φ φ`.
    pub fn gradient(&self, phi: &WaveField) -> Result<WaveField> {
        let mut g = self.apply_hamiltonian(phi, phi)?;
        vecops::scale(2.0, g.values_mut());
        Ok(g)
    }

    /// Second derivative `∇²E(φ)[f, f]` of the energy along `f`.
    pub fn hessian_quadratic_form(&self, phi: &WaveField, f: &WaveField) -> Result<f64> {
        self.check(phi)?;
        self.check(f)?;
        let img = self.linear_image(f.values());
        let rho = phi.density();
        let hf = self.hamiltonian_from_image(f.values(), &img, &rho);
        let w = self.grid.cell_volume();
        Ok(2.0 * (vecops::re_dot(f.values(), &hf, w) + self.quartic_curvature(phi.values(), f.values())))
    }

    /// `η h^d Σ (|φ|²|f|² + Re(conj(φ)² f²))`.
    pub(crate) fn quartic_curvature(&self, phi: &[Complex64], f: &[Complex64]) -> f64 {
        if self.params.eta == 0.0 {
            return 0.0;
        }
        let mut acc = 0.0;
        for (p, q) in phi.iter().zip(f) {
            acc += p.norm_sqr() * q.norm_sqr() + (p.conj() * p.conj() * q * q).re;
        }
        self.params.eta * acc * self.grid.cell_volume()
    }

    /// `λ = Re<H_φ φ, φ>`; requires a unit field.
    pub fn chemical_potential(&self, phi: &WaveField) -> Result<f64> {
        require_unit(phi)?;
        Ok(self.energy(phi)?.chemical_potential())
    }

    /// `∫ ½|∇φ|² + V|φ|² + η|φ|⁴`.
    pub fn characteristic_energy(&self, phi: &WaveField) -> Result<f64> {
        Ok(self.energy(phi)?.characteristic())
    }
}

pub(crate) fn require_unit(phi: &WaveField) -> Result<()> {
    let norm = phi.norm();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(Error::NotNormalized { norm });
    }
    Ok(())
}

/// Closed-form Thomas–Fermi chemical potential for the trap frequencies in `params`.
pub fn thomas_fermi_mu(dim: usize, params: &ModelParams) -> Result<f64> {
    let eta = params.eta;
    if !(eta > 0.0) {
        return Err(Error::InvalidParameter(format!("Thomas-Fermi data needs eta > 0, got {eta}")));
    }
    let g = |a| params.potential.gamma(a);
    let mu = match dim {
        1 => 0.5 * (3.0 * eta * g(0)).powf(2.0 / 3.0),
        2 => 0.5 * (4.0 * eta * g(0) * g(1)).sqrt(),
        3 => 0.5 * (15.0 * eta * g(0) * g(1) * g(2)).powf(0.4),
        _ => return Err(Error::UnsupportedDimension { op: "Thomas-Fermi", dim }),
    };
    Ok(mu)
}

/// Normalized `sqrt(max(μ - V, 0)/η)`.
pub fn thomas_fermi_initial(grid: &Grid, params: &ModelParams) -> Result<WaveField> {
    let mu = thomas_fermi_mu(grid.dim(), params)?;
    let model = Model::new(grid, params.clone())?;
    let values: Vec<Complex64> = model
        .potential()
        .iter()
        .map(|v| Complex64::new(((mu - v).max(0.0) / params.eta).sqrt(), 0.0))
        .collect();
    if values.iter().all(|z| z.re == 0.0) {
        return Err(Error::InvalidParameter(format!("potential exceeds mu = {mu} everywhere")));
    }
    WaveField::from_values(grid, values)?.normalized()
}

/// Named initial data. `Bar` variants are complex conjugates of their base.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InitialKind {
    #[serde(rename = "a")]
    A,
    #[serde(rename = "b")]
    B,
    #[serde(rename = "b_bar")]
    BBar,
    #[serde(rename = "c")]
    C,
    #[serde(rename = "c_bar")]
    CBar,
    #[serde(rename = "d")]
    D,
    #[serde(rename = "d_bar")]
    DBar,
    #[serde(rename = "e")]
    E,
    #[serde(rename = "e_bar")]
    EBar,
    #[serde(rename = "tf")]
    ThomasFermi,
}

impl InitialKind {
    pub const ALL: [InitialKind; 10] = [
        InitialKind::A,
        InitialKind::B,
        InitialKind::BBar,
        InitialKind::C,
        InitialKind::CBar,
        InitialKind::D,
        InitialKind::DBar,
        InitialKind::E,
        InitialKind::EBar,
        InitialKind::ThomasFermi,
    ];

    pub fn name(self) -> &'static str {
        match self {
            InitialKind::A => "a",
            InitialKind::B => "b",
            InitialKind::BBar => "b_bar",
            InitialKind::C => "c",
            InitialKind::CBar => "c_bar",
            InitialKind::D => "d",
            InitialKind::DBar => "d_bar",
            InitialKind::E => "e",
            InitialKind::EBar => "e_bar",
            InitialKind::ThomasFermi => "tf",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        InitialKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown initial guess '{s}'")))
    }
}

pub fn initial_guess(kind: InitialKind, grid: &Grid, params: &ModelParams) -> Result<WaveField> {
    if kind == InitialKind::ThomasFermi {
        return thomas_fermi_initial(grid, params);
    }
    if grid.dim() < 2 && kind != InitialKind::A {
        return Err(Error::UnsupportedDimension { op: "vortex initial guess", dim: grid.dim() });
    }
    let w = params.omega;
    // (weight of φ_a, weight of φ_b, conjugate)
    let (ca, cb, conj) = match kind {
        InitialKind::A => (1.0, 0.0, false),
        InitialKind::B => (0.0, 1.0, false),
        InitialKind::BBar => (0.0, 1.0, true),
        InitialKind::C => (0.5, 0.5, false),
        InitialKind::CBar => (0.5, 0.5, true),
        InitialKind::D => (1.0 - w, w, false),
        InitialKind::DBar => (1.0 - w, w, true),
        InitialKind::E => (w, 1.0 - w, false),
        InitialKind::EBar => (w, 1.0 - w, true),
        InitialKind::ThomasFermi => unreachable!(),
    };
    let phi = WaveField::from_fn(grid, |x| {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        let a = (-r2 / 2.0).exp() / PI.sqrt();
        let y = x.get(1).copied().unwrap_or(0.0);
        let z = Complex64::new(ca + cb * x[0], cb * y) * a;
        if conj {
            z.conj()
        } else {
            z
        }
    });
    phi.normalized()
}

/// A point of the `z = 0`-plane where the phase winds around a plaquette.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vortex {
    pub x: f64,
    pub y: f64,
    pub winding: i32,
}

/// Plaquette phase winding of a 2D field, restricted to centres within `radius`.
pub fn detect_vortices(phi: &WaveField, radius: f64) -> Result<Vec<Vortex>> {
    let grid = phi.grid();
    if grid.dim() != 2 {
        return Err(Error::UnsupportedDimension { op: "vortex detection", dim: grid.dim() });
    }
    let m = grid.points();
    let h = grid.h();
    let coords = grid.coords();
    let v = phi.values();
    let at = |i: usize, j: usize| v[i * m + j];
    let wrap = |d: f64| {
        let mut d = d;
        while d > PI {
            d -= 2.0 * PI;
        }
        while d <= -PI {
            d += 2.0 * PI;
        }
        d
    };
    let zero = Complex64::new(0.0, 0.0);
    let winding = |ring: &[Complex64]| {
        let n = ring.len();
        let total: f64 = (0..n).map(|k| wrap(ring[(k + 1) % n].arg() - ring[k].arg())).sum();
        (total / (2.0 * PI)).round() as i32
    };
    let inside = |x: f64, y: f64| x * x + y * y <= radius * radius;
    let mut out = Vec::new();
    for i in 0..m - 1 {
        for j in 0..m - 1 {
            let (cx, cy) = (coords[i] + h / 2.0, coords[j] + h / 2.0);
            if !inside(cx, cy) {
                continue;
            }
            let ring = [at(i, j), at(i + 1, j), at(i + 1, j + 1), at(i, j + 1)];
            if ring.contains(&zero) {
                continue;
            }
            let n = winding(&ring);
            if n != 0 {
                out.push(Vortex { x: cx, y: cy, winding: n });
            }
        }
    }
    // A zero sitting exactly on a node is invisible to the plaquettes that
    // touch it; wind around its eight neighbours instead.
    for i in 1..m - 1 {
        for j in 1..m - 1 {
            if at(i, j) != zero || !inside(coords[i], coords[j]) {
                continue;
            }
            let ring = [
                at(i - 1, j - 1),
                at(i, j - 1),
                at(i + 1, j - 1),
                at(i + 1, j),
                at(i + 1, j + 1),
                at(i, j + 1),
                at(i - 1, j + 1),
                at(i - 1, j),
            ];
            if ring.contains(&zero) {
                continue;
            }
            let n = winding(&ring);
            if n != 0 {
                out.push(Vortex { x: coords[i], y: coords[j], winding: n });
            }
        }
    }
    Ok(out)
}
