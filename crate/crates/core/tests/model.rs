use std::f64::consts::PI;

use gpcg_core::classic::dense_hamiltonian;
use gpcg_core::model::{
    detect_vortices, initial_guess, thomas_fermi_mu, InitialKind, Model, ModelParams, PotentialKind, PotentialSpec,
};
use gpcg_core::spectral::{inner, Grid, GridSpec, WaveField};
use num_complex::Complex64;
use proptest::prelude::*;

fn grid(dim: usize, l: f64, m: usize) -> Grid {
    Grid::new(GridSpec::new(dim, l, m).unwrap()).unwrap()
}

fn gaussian(g: &Grid, a: f64) -> WaveField {
    let d = g.dim() as i32;
    let c = (a / PI).powf(d as f64 / 4.0);
    WaveField::from_fn(g, |x| Complex64::new(c * (-a * x.iter().map(|v| v * v).sum::<f64>() / 2.0).exp(), 0.0))
}

/// Smooth field from a handful of low modes under a Gaussian envelope.
fn smooth(g: &Grid, c: &[f64]) -> WaveField {
    let l = g.half_width();
    WaveField::from_fn(g, |x| {
        let s: f64 = x.iter().sum::<f64>() * PI / l;
        let t: f64 = x.iter().enumerate().map(|(a, v)| v * (a + 1) as f64).sum::<f64>() * PI / l;
        let env = (-x.iter().map(|v| v * v).sum::<f64>() / 3.0).exp();
        Complex64::new(c[0] + c[1] * s.cos() + c[2] * t.sin(), c[3] * s.sin() + c[4] * t.cos() + 0.2) * env
    })
}

fn energy_at(model: &Model, phi: &WaveField, f: &WaveField, eps: f64) -> f64 {
    model.energy(&phi.add_scaled(eps, f).unwrap()).unwrap().total
}

#[test]
fn gaussian_energy_matches_closed_form() {
    let a = 1.3;
    let eta = 7.0;
    let g = grid(2, 10.0, 64);
    let model = Model::new(&g, ModelParams::new(eta, 0.8, PotentialSpec::harmonic(&[1.0, 1.0]))).unwrap();
    let e = model.energy(&gaussian(&g, a)).unwrap();
    assert!((e.kinetic - a / 2.0).abs() < 1e-12, "{}", e.kinetic);
    assert!((e.potential - 1.0 / a).abs() < 1e-12, "{}", e.potential);
    assert!((e.interaction - eta * a / (4.0 * PI)).abs() < 1e-12, "{}", e.interaction);
    // Radial real field carries no angular momentum.
    assert!(e.rotation.abs() < 1e-12);
}

#[test]
fn harmonic_ground_mode_in_1d() {
    // -½∂² + x² has ground mode with frequency √2 and energy √2/2.
    let g = grid(1, 16.0, 128);
    let model = Model::new(&g, ModelParams::new(0.0, 0.0, PotentialSpec::harmonic(&[1.0]))).unwrap();
    let phi = gaussian(&g, 2f64.sqrt());
    let e = model.energy(&phi).unwrap().total;
    assert!((e - 2f64.sqrt() / 2.0).abs() < 1e-13);
    let (r, lambda) = gpcg_core::optim::residual(&phi, &model).unwrap();
    assert!((lambda - e).abs() < 1e-13);
    assert!(r.max_abs() < 1e-12);
}

#[test]
fn potentials_evaluate_pointwise() {
    let h = PotentialSpec::harmonic(&[2.0]);
    assert_eq!(h.eval(&[1.5]), 4.0 * 2.25);
    let q = PotentialSpec::quartic(&[1.0, 1.0], 1.2, 0.3);
    let (x, y) = (0.7f64, -1.1f64);
    let r2 = x * x + y * y;
    assert!((q.eval(&[x, y]) - (-0.2 * r2 + 0.3 * r2 * r2 / 4.0)).abs() < 1e-15);
    let half = PotentialSpec::half_square();
    assert_eq!(half.kind, PotentialKind::CustomIsotropicHalfSquare);
    assert_eq!(half.eval(&[1.0, 2.0]), 2.5);
}

#[test]
fn thomas_fermi_profile_is_normalized_and_compact() {
    let params = ModelParams::new(250.0, 0.0, PotentialSpec::harmonic(&[1.0]));
    let mu = thomas_fermi_mu(1, &params).unwrap();
    assert!((mu - 0.5 * 750f64.powf(2.0 / 3.0)).abs() < 1e-12);
    let g = grid(1, 16.0, 256);
    let phi = initial_guess(InitialKind::ThomasFermi, &g, &params).unwrap();
    assert!((phi.norm() - 1.0).abs() < 1e-14);
    for (x, z) in g.coords().iter().zip(phi.values()) {
        if x * x > mu {
            assert_eq!(z.norm(), 0.0);
        }
    }
}

#[test]
fn thomas_fermi_needs_interaction() {
    let params = ModelParams::new(0.0, 0.0, PotentialSpec::harmonic(&[1.0]));
    assert!(thomas_fermi_mu(1, &params).is_err());
}

#[test]
fn conjugate_guesses_are_conjugates() {
    let g = grid(2, 6.0, 32);
    let params = ModelParams::new(100.0, 0.7, PotentialSpec::harmonic(&[1.0, 1.0]));
    for (k, kb) in [(InitialKind::B, InitialKind::BBar), (InitialKind::D, InitialKind::DBar)] {
        let u = initial_guess(k, &g, &params).unwrap();
        let v = initial_guess(kb, &g, &params).unwrap();
        assert!(u.conj().max_abs_diff(&v).unwrap() < 1e-15, "{}", k.name());
    }
    assert!(initial_guess(InitialKind::B, &grid(1, 6.0, 32), &params).is_err());
}

#[test]
fn dense_hamiltonian_is_hermitian() {
    let g = grid(2, 4.0, 8);
    let params = ModelParams::new(50.0, 0.9, PotentialSpec::quartic(&[1.0, 1.0], 1.2, 0.3));
    let model = Model::new(&g, params.clone()).unwrap();
    let phi = initial_guess(InitialKind::D, &g, &params).unwrap();
    let h = dense_hamiltonian(&model, &phi.density()).unwrap();
    let scale = h.iter().map(|z| z.norm()).fold(0.0, f64::max);
    assert!((&h - h.adjoint()).iter().all(|z| z.norm() < 1e-12 * scale));
}

#[test]
fn vortex_at_origin_is_found() {
    let g = grid(2, 6.0, 32);
    let phi = WaveField::from_fn(&g, |x| Complex64::new(x[0] - 0.1, x[1] - 0.05) * (-(x[0] * x[0] + x[1] * x[1])).exp());
    let v = detect_vortices(&phi, 2.0).unwrap();
    assert_eq!(v.len(), 1);
    assert_eq!(v[0].winding, 1);
    assert!((v[0].x - 0.1).abs() < g.h() && (v[0].y - 0.05).abs() < g.h());
    let w = detect_vortices(&phi.conj(), 2.0).unwrap();
    assert_eq!(w[0].winding, -1);
}

#[test]
fn unnormalized_fields_have_no_chemical_potential() {
    let g = grid(1, 8.0, 32);
    let model = Model::new(&g, ModelParams::new(1.0, 0.0, PotentialSpec::harmonic(&[1.0]))).unwrap();
    let phi = gaussian(&g, 1.0).scaled(Complex64::new(2.0, 0.0));
    assert!(model.chemical_potential(&phi).is_err());
}

fn coeffs() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0..1.0f64, 5)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn gradient_matches_central_differences(
        c in coeffs(), f in coeffs(), dim in 1usize..3, eta in 0.0..200.0f64, omega in -1.5..1.5f64,
    ) {
        let g = grid(dim, 4.0, 16);
        let model = Model::new(&g, ModelParams::new(eta, omega, PotentialSpec::harmonic(&[1.0, 1.0]))).unwrap();
        let phi = smooth(&g, &c).normalized().unwrap();
        let dir = smooth(&g, &f);
        let eps = 1e-5;
        let fd = (energy_at(&model, &phi, &dir, eps) - energy_at(&model, &phi, &dir, -eps)) / (2.0 * eps);
        let exact = inner(&model.gradient(&phi).unwrap(), &dir).unwrap().re;
        prop_assert!((fd - exact).abs() <= 1e-6 * exact.abs().max(1.0), "fd {} exact {}", fd, exact);
    }

    #[test]
    fn hessian_matches_second_differences(
        c in coeffs(), f in coeffs(), dim in 1usize..3, eta in 0.0..200.0f64, omega in -1.5..1.5f64,
    ) {
        let g = grid(dim, 4.0, 16);
        let model = Model::new(&g, ModelParams::new(eta, omega, PotentialSpec::harmonic(&[1.0, 1.0]))).unwrap();
        let phi = smooth(&g, &c).normalized().unwrap();
        let dir = smooth(&g, &f).normalized().unwrap();
        let eps = 1e-3;
        let e0 = model.energy(&phi).unwrap().total;
        let fd = (energy_at(&model, &phi, &dir, eps) - 2.0 * e0 + energy_at(&model, &phi, &dir, -eps)) / (eps * eps);
        let exact = model.hessian_quadratic_form(&phi, &dir).unwrap();
        prop_assert!((fd - exact).abs() <= 1e-4 * exact.abs().max(1.0), "fd {} exact {}", fd, exact);
    }

    #[test]
    fn energy_is_phase_invariant(c in coeffs(), alpha in 0.0..(2.0 * PI), omega in -1.0..1.0f64) {
        let g = grid(2, 4.0, 16);
        let model = Model::new(&g, ModelParams::new(30.0, omega, PotentialSpec::harmonic(&[1.0, 1.0]))).unwrap();
        let phi = smooth(&g, &c).normalized().unwrap();
        let rotated = phi.scaled(Complex64::from_polar(1.0, alpha));
        let (a, b) = (model.energy(&phi).unwrap().total, model.energy(&rotated).unwrap().total);
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn conjugation_reverses_rotation(c in coeffs(), omega in -1.5..1.5f64) {
        let g = grid(2, 4.0, 16);
        let pot = PotentialSpec::harmonic(&[1.0, 1.0]);
        let fwd = Model::new(&g, ModelParams::new(30.0, omega, pot.clone())).unwrap();
        let rev = Model::new(&g, ModelParams::new(30.0, -omega, pot)).unwrap();
        let phi = smooth(&g, &c).normalized().unwrap();
        let (a, b) = (fwd.energy(&phi.conj()).unwrap().total, rev.energy(&phi).unwrap().total);
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }
}
