//! Slice-level kernels shared by the field types and the solvers.

use num_complex::Complex64;

pub(crate) fn dot(u: &[Complex64], v: &[Complex64], weight: f64) -> Complex64 {
    debug_assert_eq!(u.len(), v.len());
    let mut acc = Complex64::new(0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        acc += a.conj() * b;
    }
    acc * weight
}

pub(crate) fn re_dot(u: &[Complex64], v: &[Complex64], weight: f64) -> f64 {
    debug_assert_eq!(u.len(), v.len());
    let mut acc = 0.0;
    for (a, b) in u.iter().zip(v) {
        acc += a.re * b.re + a.im * b.im;
    }
    acc * weight
}

pub(crate) fn norm(u: &[Complex64], weight: f64) -> f64 {
    re_dot(u, u, weight).sqrt()
}

pub(crate) fn max_abs(u: &[Complex64]) -> f64 {
    u.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub(crate) fn max_abs_diff(u: &[Complex64], v: &[Complex64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
}

/// `y <- a*x + y`
pub(crate) fn axpy(a: f64, x: &[Complex64], y: &mut [Complex64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += xi * a;
    }
}

/// `a*x + b*y` into a fresh vector.
pub(crate) fn lincomb(a: f64, x: &[Complex64], b: f64, y: &[Complex64]) -> Vec<Complex64> {
    x.iter().zip(y).map(|(xi, yi)| xi * a + yi * b).collect()
}

pub(crate) fn scale(a: f64, x: &mut [Complex64]) {
    for xi in x.iter_mut() {
        *xi *= a;
    }
}

pub(crate) fn all_finite(u: &[Complex64]) -> bool {
    u.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}
