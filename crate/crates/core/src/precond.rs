//! Shifted-inverse preconditioners for the kinetic and potential parts of
//! the Hessian, their compositions and the symmetrized combination.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::model::{require_unit, LinearImage, Model};
use crate::spectral::{Grid, WaveField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PreconditionerKind {
    Identity,
    /// `P_Δ = (α - Δ/2)^{-1}`
    Kinetic,
    /// `P_V = (α + V + η|φ|²)^{-1}`
    Potential,
    /// `P_V P_Δ`
    C1,
    /// `P_Δ P_V`
    C2,
    /// `P_V^{1/2} P_Δ P_V^{1/2}`
    #[default]
    Sym,
}

impl PreconditionerKind {
    pub const ALL: [PreconditionerKind; 6] = [
        PreconditionerKind::Identity,
        PreconditionerKind::Kinetic,
        PreconditionerKind::Potential,
        PreconditionerKind::C1,
        PreconditionerKind::C2,
        PreconditionerKind::Sym,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PreconditionerKind::Identity => "identity",
            PreconditionerKind::Kinetic => "kinetic",
            PreconditionerKind::Potential => "potential",
            PreconditionerKind::C1 => "c1",
            PreconditionerKind::C2 => "c2",
            PreconditionerKind::Sym => "sym",
        }
    }

    /// Whether the operator is Hermitian positive definite under the grid inner product.
    pub fn is_hermitian(self) -> bool {
        !matches!(self, PreconditionerKind::C1 | PreconditionerKind::C2)
    }
}

impl fmt::Display for PreconditionerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PreconditionerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PreconditionerKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown preconditioner '{s}'")))
    }
}

/// Shift `α` used in both diagonals.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum ShiftPolicy {
    /// `α = λ̃(φ_n)`, recomputed at every iterate.
    #[default]
    Adaptive,
    Fixed(f64),
}

impl ShiftPolicy {
    pub fn resolve(self, characteristic: f64) -> f64 {
        match self {
            ShiftPolicy::Adaptive => characteristic,
            ShiftPolicy::Fixed(a) => a,
        }
    }
}

impl fmt::Display for ShiftPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ShiftPolicy::Adaptive => f.write_str("adaptive"),
            ShiftPolicy::Fixed(a) => write!(f, "{a}"),
        }
    }
}

// Serialized as the string "adaptive" or a bare number.
impl Serialize for ShiftPolicy {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ShiftPolicy::Adaptive => s.serialize_str("adaptive"),
            ShiftPolicy::Fixed(a) => s.serialize_f64(*a),
        }
    }
}

impl<'de> Deserialize<'de> for ShiftPolicy {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Int(i64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(a) => Ok(ShiftPolicy::Fixed(a)),
            Raw::Int(a) => Ok(ShiftPolicy::Fixed(a as f64)),
            Raw::Text(t) if t == "adaptive" => Ok(ShiftPolicy::Adaptive),
            Raw::Text(t) => t
                .parse::<f64>()
                .map(ShiftPolicy::Fixed)
                .map_err(|_| serde::de::Error::custom(format!("expected \"adaptive\" or a number, got '{t}'"))),
        }
    }
}

/// A preconditioner frozen at one iterate.
#[derive(Debug, Clone)]
pub struct Preconditioner {
    kind: PreconditionerKind,
    grid: Grid,
    alpha: f64,
    /// `(α + V + η ρ)^{-1}` on the nodes.
    real_diag: Vec<f64>,
    /// `(α + |ξ|²/2)^{-1}` in spectral storage order.
    fourier_diag: Vec<f64>,
}

/// Builds `P` at `phi_n`, resolving an adaptive shift to `λ̃(φ_n)`.
pub fn build(kind: PreconditionerKind, shift: ShiftPolicy, phi_n: &WaveField, model: &Model) -> Result<Preconditioner> {
    require_unit(phi_n)?;
    let alpha = match shift {
        ShiftPolicy::Adaptive if kind != PreconditionerKind::Identity => model.characteristic_energy(phi_n)?,
        ShiftPolicy::Adaptive => 1.0,
        ShiftPolicy::Fixed(a) => a,
    };
    Preconditioner::new(kind, alpha, &phi_n.density(), model)
}

impl Preconditioner {
    /// Builds from an explicit shift and frozen density `ρ = |φ_n|²`.
    pub fn new(kind: PreconditionerKind, alpha: f64, rho: &[f64], model: &Model) -> Result<Self> {
        let grid = model.grid().clone();
        if kind == PreconditionerKind::Identity {
            return Ok(Preconditioner { kind, grid, alpha, real_diag: Vec::new(), fourier_diag: Vec::new() });
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!("preconditioner shift must be positive, got {alpha}")));
        }
        let eta = model.eta();
        let mut real_diag = Vec::new();
        if kind != PreconditionerKind::Kinetic {
            real_diag = Vec::with_capacity(rho.len());
            for (v, r) in model.potential().iter().zip(rho) {
                let s = alpha + v + eta * r;
                if s <= 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "potential preconditioner diagonal is not positive ({s}); use a larger shift"
                    )));
                }
                real_diag.push(1.0 / s);
            }
        }
        let fourier_diag = if kind == PreconditionerKind::Potential {
            Vec::new()
        } else {
            grid.k_squared().iter().map(|k| 1.0 / (alpha + 0.5 * k)).collect()
        };
        Ok(Preconditioner { kind, grid, alpha, real_diag, fourier_diag })
    }

    pub fn kind(&self) -> PreconditionerKind {
        self.kind
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    fn diag(&self, v: &[Complex64]) -> Vec<Complex64> {
        v.iter().zip(&self.real_diag).map(|(z, d)| z * d).collect()
    }

    fn sqrt_diag(&self, v: &[Complex64]) -> Vec<Complex64> {
        v.iter().zip(&self.real_diag).map(|(z, d)| z * d.sqrt()).collect()
    }

    fn fourier(&self, spectrum: &mut [Complex64]) {
        for (c, k) in spectrum.iter_mut().zip(&self.fourier_diag) {
            *c *= k;
        }
    }

    fn kinetic(&self, v: &[Complex64]) -> Vec<Complex64> {
        let mut s = self.grid.forward(v);
        self.fourier(&mut s);
        self.grid.inverse(&s)
    }

    /// `P r` on raw node values.
    pub fn apply_values(&self, r: &[Complex64]) -> Vec<Complex64> {
        match self.kind {
            PreconditionerKind::Identity => r.to_vec(),
            PreconditionerKind::Kinetic => self.kinetic(r),
            PreconditionerKind::Potential => self.diag(r),
            PreconditionerKind::C1 => self.diag(&self.kinetic(r)),
            PreconditionerKind::C2 => self.kinetic(&self.diag(r)),
            PreconditionerKind::Sym => self.sqrt_diag(&self.kinetic(&self.sqrt_diag(r))),
        }
    }

    pub fn apply(&self, r: &WaveField) -> Result<WaveField> {
        if r.grid() != &self.grid {
            return Err(Error::GridMismatch);
        }
        WaveField::from_values(&self.grid, self.apply_values(r.values()))
    }

    /// `q = P r` together with the linear image of `q`, sharing transforms.
    ///
    /// Transform cost with rotation active: identity, kinetic and
    /// potential take 3, C2 takes 4, C1 and sym take 5. Without rotation
    /// each costs one less.
    pub fn apply_fused(&self, r: &[Complex64], model: &Model) -> (Vec<Complex64>, LinearImage) {
        match self.kind {
            PreconditionerKind::Identity => (r.to_vec(), model.linear_image(r)),
            PreconditionerKind::Potential => {
                let q = self.diag(r);
                let img = model.linear_image(&q);
                (q, img)
            }
            PreconditionerKind::Kinetic => {
                let mut s = self.grid.forward(r);
                self.fourier(&mut s);
                let img = model.image_from_spectrum(&s);
                // (α - Δ/2) q = r, so q = (r + Δq/2)/α without another transform.
                let inv = 1.0 / self.alpha;
                let q = r.iter().zip(&img.kin).map(|(a, k)| (a - k) * inv).collect();
                (q, img)
            }
            PreconditionerKind::C2 => {
                let mut s = self.grid.forward(&self.diag(r));
                self.fourier(&mut s);
                let q = self.grid.inverse(&s);
                let img = model.image_from_spectrum(&s);
                (q, img)
            }
            PreconditionerKind::C1 | PreconditionerKind::Sym => {
                let q = self.apply_values(r);
                let img = model.linear_image(&q);
                (q, img)
            }
        }
    }
}
