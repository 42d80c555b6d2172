//! Periodic grid on `[-L, L]^d`, discrete Fourier transforms and the
//! matrix-free differential operators built on them.
//!
//! Storage is row-major with axis 0 (x) slowest. The forward transform
//! carries no prefactor; each inverse axis sweep divides by `M`.

mod field;
pub mod io;

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use field::{apply_laplacian, apply_lz, inner, spectral_interpolate, WaveField};

/// Plain description of a square periodic grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Spatial dimension, 1 to 3.
    pub dim: usize,
    /// Half-width `L` of the box `[-L, L]^d`.
    pub half_width: f64,
    /// Points per axis `M` (even, at least 4).
    pub points: usize,
}

impl GridSpec {
    pub fn new(dim: usize, half_width: f64, points: usize) -> Result<Self> {
        let spec = GridSpec { dim, half_width, points };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.dim) {
            return Err(Error::InvalidGrid(format!("dimension must be 1, 2 or 3, got {}", self.dim)));
        }
        if self.points < 4 || self.points % 2 != 0 {
            return Err(Error::InvalidGrid(format!(
                "points per axis must be even and >= 4, got {}",
                self.points
            )));
        }
        if !(self.half_width > 0.0 && self.half_width.is_finite()) {
            return Err(Error::InvalidGrid(format!("half width must be positive, got {}", self.half_width)));
        }
        Ok(())
    }

    /// Mesh size `h = 2L/M`.
    pub fn h(&self) -> f64 {
        2.0 * self.half_width / self.points as f64
    }

    /// Total number of nodes `M^d`.
    pub fn len(&self) -> usize {
        self.points.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Quadrature weight `h^d` of one node.
    pub fn cell_volume(&self) -> f64 {
        self.h().powi(self.dim as i32)
    }

    /// Frequencies `p*pi/L` for `p = -M/2 .. M/2-1`, in natural order.
    pub fn frequencies(&self) -> Vec<f64> {
        let m = self.points as i64;
        (-m / 2..m / 2).map(|p| p as f64 * std::f64::consts::PI / self.half_width).collect()
    }

    /// Node coordinates `-L + k h` along one axis.
    pub fn coordinates(&self) -> Vec<f64> {
        let h = self.h();
        (0..self.points).map(|k| -self.half_width + k as f64 * h).collect()
    }

    /// Frequencies in FFT storage order (`0, 1, .., M/2-1, -M/2, .., -1`).
    pub fn wavenumbers(&self) -> Vec<f64> {
        let m = self.points;
        (0..m)
            .map(|j| {
                let p = if j < m / 2 { j as i64 } else { j as i64 - m as i64 };
                p as f64 * std::f64::consts::PI / self.half_width
            })
            .collect()
    }
}

struct GridInner {
    spec: GridSpec,
    coords: Vec<f64>,
    wavenumbers: Vec<f64>,
    derivative_wavenumbers: Vec<f64>,
    k_squared: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    transforms: AtomicU64,
}

/// A grid with cached coordinates, frequencies and FFT plans.
///
/// Cloning is cheap and shares the caches. Every full-field transform issued
/// through the grid increments a counter readable with
/// [`Grid::transform_count`]: one per forward transform, one per inverse
/// transform, and one per angular-momentum evaluation (a pair of one-axis
/// inverse sweeps from an existing spectrum).
#[derive(Clone)]
pub struct Grid {
    inner: Arc<GridInner>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid").field("spec", &self.inner.spec).finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner) || self.inner.spec == other.inner.spec
    }
}

impl Grid {
    pub fn new(spec: GridSpec) -> Result<Self> {
        spec.validate()?;
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(spec.points);
        let inverse = planner.plan_fft_inverse(spec.points);
        let coords = spec.coordinates();
        let wavenumbers = spec.wavenumbers();
        let mut derivative_wavenumbers = wavenumbers.clone();
        derivative_wavenumbers[spec.points / 2] = 0.0;
        let k_squared = (0..spec.len())
            .map(|idx| {
                let mut acc = 0.0;
                let mut rest = idx;
                for _ in 0..spec.dim {
                    let k = wavenumbers[rest % spec.points];
                    acc += k * k;
                    rest /= spec.points;
                }
                acc
            })
            .collect();
        Ok(Grid {
            inner: Arc::new(GridInner {
                spec,
                coords,
                wavenumbers,
                derivative_wavenumbers,
                k_squared,
                forward,
                inverse,
                transforms: AtomicU64::new(0),
            }),
        })
    }

    pub fn spec(&self) -> GridSpec {
        self.inner.spec
    }

    pub fn dim(&self) -> usize {
        self.inner.spec.dim
    }

    pub fn points(&self) -> usize {
        self.inner.spec.points
    }

    pub fn half_width(&self) -> f64 {
        self.inner.spec.half_width
    }

    pub fn h(&self) -> f64 {
        self.inner.spec.h()
    }

    pub fn len(&self) -> usize {
        self.inner.k_squared.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.inner.spec.cell_volume()
    }

    /// Per-axis node coordinates (identical on every axis).
    pub fn coords(&self) -> &[f64] {
        &self.inner.coords
    }

    /// Per-axis frequencies in FFT order.
    pub fn wavenumbers(&self) -> &[f64] {
        &self.inner.wavenumbers
    }

    /// Frequencies for first derivatives: as [`Grid::wavenumbers`] with the
    /// unmatched `-M/2` mode set to zero, so that `∂(conj v) = conj(∂v)`.
    pub fn derivative_wavenumbers(&self) -> &[f64] {
        &self.inner.derivative_wavenumbers
    }

    /// `|xi|^2` for every spectral index, in storage order.
    pub fn k_squared(&self) -> &[f64] {
        &self.inner.k_squared
    }

    /// Coordinates of node `idx`; unused trailing entries are zero.
    pub fn node(&self, idx: usize) -> [f64; 3] {
        let m = self.points();
        let d = self.dim();
        let mut out = [0.0; 3];
        let mut rest = idx;
        for axis in (0..d).rev() {
            out[axis] = self.inner.coords[rest % m];
            rest /= m;
        }
        out
    }

    pub fn transform_count(&self) -> u64 {
        self.inner.transforms.load(Ordering::Relaxed)
    }

    fn tick(&self) {
        self.inner.transforms.fetch_add(1, Ordering::Relaxed);
    }

    /// Forward transform of a full field (no prefactor).
    pub fn forward(&self, values: &[Complex64]) -> Vec<Complex64> {
        let mut data = values.to_vec();
        for axis in 0..self.dim() {
            self.sweep(&mut data, axis, false);
        }
        self.tick();
        data
    }

    /// Inverse transform of a full spectrum (`1/M` per axis).
    pub fn inverse(&self, spectrum: &[Complex64]) -> Vec<Complex64> {
        let mut data = spectrum.to_vec();
        for axis in 0..self.dim() {
            self.sweep(&mut data, axis, true);
        }
        self.tick();
        data
    }

    /// `Δv` in real space from the spectrum of `v`.
    pub fn laplacian_from_spectrum(&self, spectrum: &[Complex64]) -> Vec<Complex64> {
        let ksq = self.k_squared();
        let scaled: Vec<Complex64> = spectrum.iter().zip(ksq).map(|(c, k)| -c * k).collect();
        self.inverse(&scaled)
    }

    /// `L_z v = -i (x ∂_y v - y ∂_x v)` in real space from the spectrum of `v`.
    ///
    /// Each partial derivative is finished by a one-axis inverse sweep after
    /// the coordinate factor is applied on the already-inverted axis.
    pub fn lz_from_spectrum(&self, spectrum: &[Complex64]) -> Result<Vec<Complex64>> {
        let d = self.dim();
        if d < 2 {
            return Err(Error::UnsupportedDimension { op: "L_z", dim: d });
        }
        let m = self.points();
        let stride_x = m.pow((d - 1) as u32);
        let stride_y = m.pow((d - 2) as u32);
        let coords = self.coords();
        let k = self.derivative_wavenumbers();

        let mut base = spectrum.to_vec();
        if d == 3 {
            self.sweep(&mut base, 2, true);
        }

        // x ∂_y: invert along x, multiply by i*mu*x, invert along y.
        let mut xdy = base.clone();
        self.sweep(&mut xdy, 0, true);
        for (idx, v) in xdy.iter_mut().enumerate() {
            let ix = (idx / stride_x) % m;
            let iy = (idx / stride_y) % m;
            *v *= Complex64::new(0.0, k[iy] * coords[ix]);
        }
        self.sweep(&mut xdy, 1, true);

        // y ∂_x: invert along y, multiply by i*xi*y, invert along x.
        let mut ydx = base;
        self.sweep(&mut ydx, 1, true);
        for (idx, v) in ydx.iter_mut().enumerate() {
            let ix = (idx / stride_x) % m;
            let iy = (idx / stride_y) % m;
            *v *= Complex64::new(0.0, k[ix] * coords[iy]);
        }
        self.sweep(&mut ydx, 0, true);

        let minus_i = Complex64::new(0.0, -1.0);
        let out = xdy.iter().zip(&ydx).map(|(a, b)| minus_i * (a - b)).collect();
        self.tick();
        Ok(out)
    }

    /// One-axis transform of every line along `axis`, in place.
    fn sweep(&self, data: &mut [Complex64], axis: usize, inverse: bool) {
        let m = self.points();
        let d = self.dim();
        let stride = m.pow((d - 1 - axis) as u32);
        let outer = data.len() / (m * stride);
        let plan = if inverse { &self.inner.inverse } else { &self.inner.forward };
        if stride == 1 {
            plan.process(data);
        } else {
            let mut buf = vec![Complex64::new(0.0, 0.0); data.len()];
            for o in 0..outer {
                for s in 0..stride {
                    let base = o * m * stride + s;
                    let line = (o * stride + s) * m;
                    for j in 0..m {
                        buf[line + j] = data[base + j * stride];
                    }
                }
            }
            plan.process(&mut buf);
            for o in 0..outer {
                for s in 0..stride {
                    let base = o * m * stride + s;
                    let line = (o * stride + s) * m;
                    for j in 0..m {
                        data[base + j * stride] = buf[line + j];
                    }
                }
            }
        }
        if inverse {
            let inv = 1.0 / m as f64;
            for v in data.iter_mut() {
                *v *= inv;
            }
        }
    }
}
