use num_complex::Complex64;

use super::{Grid, GridSpec};
use crate::error::{Error, Result};
use crate::vecops;

/// Complex amplitudes on the nodes of a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct WaveField {
    grid: Grid,
    values: Vec<Complex64>,
}

impl WaveField {
    pub fn zeros(grid: &Grid) -> Self {
        WaveField { grid: grid.clone(), values: vec![Complex64::new(0.0, 0.0); grid.len()] }
    }

    pub fn from_values(grid: &Grid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        Ok(WaveField { grid: grid.clone(), values })
    }

    /// Samples `f` at every node; `f` receives the node coordinates (length `d`).
    pub fn from_fn(grid: &Grid, mut f: impl FnMut(&[f64]) -> Complex64) -> Self {
        let d = grid.dim();
        let values = (0..grid.len())
            .map(|idx| {
                let x = grid.node(idx);
                f(&x[..d])
            })
            .collect();
        WaveField { grid: grid.clone(), values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn norm(&self) -> f64 {
        vecops::norm(&self.values, self.grid.cell_volume())
    }

    pub fn normalize(&mut self) -> Result<()> {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::InvalidParameter(format!("cannot normalize a field of norm {n}")));
        }
        vecops::scale(1.0 / n, &mut self.values);
        Ok(())
    }

    pub fn normalized(mut self) -> Result<Self> {
        self.normalize()?;
        Ok(self)
    }

    pub fn conj(&self) -> Self {
        WaveField { grid: self.grid.clone(), values: self.values.iter().map(|z| z.conj()).collect() }
    }

    pub fn scaled(&self, a: Complex64) -> Self {
        WaveField { grid: self.grid.clone(), values: self.values.iter().map(|z| z * a).collect() }
    }

    /// `self + a*other`.
    pub fn add_scaled(&self, a: f64, other: &WaveField) -> Result<Self> {
        self.check_same_grid(other)?;
        let mut values = self.values.clone();
        vecops::axpy(a, &other.values, &mut values);
        Ok(WaveField { grid: self.grid.clone(), values })
    }

    pub fn density(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.norm_sqr()).collect()
    }

    pub fn max_abs(&self) -> f64 {
        vecops::max_abs(&self.values)
    }

    pub fn max_abs_diff(&self, other: &WaveField) -> Result<f64> {
        self.check_same_grid(other)?;
        Ok(vecops::max_abs_diff(&self.values, &other.values))
    }

    pub fn is_finite(&self) -> bool {
        vecops::all_finite(&self.values)
    }

    pub(crate) fn check_same_grid(&self, other: &WaveField) -> Result<()> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }
}

/// Discrete L² inner product `h^d Σ conj(u_k) v_k`.
pub fn inner(u: &WaveField, v: &WaveField) -> Result<Complex64> {
    u.check_same_grid(v)?;
    Ok(vecops::dot(&u.values, &v.values, u.grid.cell_volume()))
}

/// Spectral Laplacian: Fourier coefficients multiplied by `-|xi|^2`.
pub fn apply_laplacian(phi: &WaveField) -> WaveField {
    let grid = phi.grid();
    let spectrum = grid.forward(phi.values());
    WaveField { grid: grid.clone(), values: grid.laplacian_from_spectrum(&spectrum) }
}

/// Angular momentum `L_z = -i(x ∂_y - y ∂_x)`; requires `d >= 2`.
pub fn apply_lz(phi: &WaveField) -> Result<WaveField> {
    let grid = phi.grid();
    if grid.dim() < 2 {
        return Err(Error::UnsupportedDimension { op: "L_z", dim: grid.dim() });
    }
    let spectrum = grid.forward(phi.values());
    Ok(WaveField { grid: grid.clone(), values: grid.lz_from_spectrum(&spectrum)? })
}

/// Fourier zero-padding onto a finer grid with the same `d` and `L`,
/// followed by renormalization to unit norm.
///
/// The unmatched `-M/2` coarse mode is split evenly between `±M/2` on each
/// axis where the target is strictly finer.
pub fn spectral_interpolate(phi: &WaveField, target: &Grid) -> Result<WaveField> {
    let source = phi.grid();
    let (s, t): (GridSpec, GridSpec) = (source.spec(), target.spec());
    if s.dim != t.dim || s.half_width != t.half_width {
        return Err(Error::InvalidParameter(format!(
            "interpolation needs the same dimension and half width (got d={} L={} -> d={} L={})",
            s.dim, s.half_width, t.dim, t.half_width
        )));
    }
    if t.points < s.points {
        return Err(Error::InvalidParameter(format!(
            "target grid must not be coarser ({} -> {})",
            s.points, t.points
        )));
    }

    let d = s.dim;
    let (mc, mf) = (s.points, t.points);
    let refine = mf > mc;
    let coarse = source.forward(phi.values());
    let gain = (mf as f64 / mc as f64).powi(d as i32);

    // Per-axis destinations of each coarse index: (fine index, weight).
    let targets: Vec<Vec<(usize, f64)>> = (0..mc)
        .map(|j| {
            let p = if j < mc / 2 { j as i64 } else { j as i64 - mc as i64 };
            let wrap = |p: i64| if p >= 0 { p as usize } else { (mf as i64 + p) as usize };
            if refine && p == -(mc as i64) / 2 {
                vec![(wrap(p), 0.5), (wrap(-p), 0.5)]
            } else {
                vec![(wrap(p), 1.0)]
            }
        })
        .collect();

    let mut fine = vec![Complex64::new(0.0, 0.0); target.len()];
    let mut digits = vec![0usize; d];
    for (idx, c) in coarse.iter().enumerate() {
        let mut rest = idx;
        for axis in (0..d).rev() {
            digits[axis] = rest % mc;
            rest /= mc;
        }
        scatter_mode(&targets, &digits, 0, 0, gain, *c, mf, &mut fine);
    }

    let values = target.inverse(&fine);
    WaveField::from_values(target, values)?.normalized()
}

#[allow(clippy::too_many_arguments)]
fn scatter_mode(
    targets: &[Vec<(usize, f64)>],
    digits: &[usize],
    axis: usize,
    offset: usize,
    weight: f64,
    value: Complex64,
    mf: usize,
    out: &mut [Complex64],
) {
    if axis == digits.len() {
        out[offset] += value * weight;
        return;
    }
    for &(j, w) in &targets[digits[axis]] {
        scatter_mode(targets, digits, axis + 1, offset * mf + j, weight * w, value, mf, out);
    }
}
