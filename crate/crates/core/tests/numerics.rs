//! Cross-module checks against closed forms.

use num_complex::Complex64;
use quillen::green::{coeff_table, GreenModel};
use quillen::laurent::{exp_cocycle, laurent_product, CMatrix, DegreeWindow, LaurentCocycle};
use quillen::prodist::ProDistribution;
use quillen::spectral::{assemble_laplacian, eigen_spectrum, Generator};
use quillen::surface::{build_surface, bump_function, gauge_identity_check, BumpFunction, Model};
use quillen::symplectic::omega_series;
use quillen::zeta::{rational, zeta_from_source, ThetaSource};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn trace_free(a: [Complex64; 4]) -> CMatrix {
    let m = CMatrix::from_row_slice(2, 2, &a);
    &m - CMatrix::identity(2, 2) * (m.trace() / c(2.0, 0.0))
}

#[test]
fn finite_spectrum_determinant_is_the_product() {
    let spec = [0.5, 3.0, 7.0];
    let e: Vec<_> = (0..=3).map(|n| rational(n, 1)).collect();
    let r = zeta_from_source(&ThetaSource::Spectrum(&spec), &e, (1e-4, 1e-3), 1e-4).unwrap();
    assert!((r.det_reg - 10.5).abs() < 1e-8 * 10.5);
    assert!(zeta_from_source(&ThetaSource::Spectrum(&[0.0, 1.0]), &e, (1e-4, 1e-3), 1e-4).is_err());
}

#[test]
fn torus_constant_field_spectrum_is_shift_free() {
    // a constant scalar generator conjugates by a constant, leaving the flat spectrum
    let surf = build_surface(Model::Torus, 16).unwrap();
    let flat = eigen_spectrum(&assemble_laplacian(&surf, &Generator::scalar_fn(&surf, |_| 0.0).unwrap(), 0.0).unwrap(), None).unwrap();
    let g = Generator::scalar_fn(&surf, |_| 1.3).unwrap();
    let shifted = eigen_spectrum(&assemble_laplacian(&surf, &g, 0.8).unwrap(), None).unwrap();
    assert_eq!(flat.positive().len(), flat.values.len() - 1);
    for (a, b) in flat.values.iter().zip(&shifted.values) {
        assert!((a - b).abs() < 1e-9 * a.max(1.0));
    }
}

#[test]
fn gauge_residual_shrinks_fourfold_on_the_disc() {
    let f = LaurentCocycle::new(
        2,
        true,
        [(-1, trace_free([c(0.3, 0.1), c(0.2, 0.0), c(-0.1, 0.2), c(0.0, 0.0)])), (1, trace_free([c(0.0, 0.0), c(0.1, -0.3), c(0.25, 0.0), c(0.2, 0.1)]))],
    )
    .unwrap();
    let section = |z: Complex64| nalgebra::DVector::from_vec(vec![z.exp(), z.conj() * z + c(1.0, 0.0)]);
    let residual = |k: usize| {
        let surf = build_surface(Model::Disc, k).unwrap();
        let rho = bump_function(&surf, 0.25, 0.6).unwrap();
        gauge_identity_check(&surf, &f, &rho, &section).unwrap()
    };
    let (coarse, fine) = (residual(48), residual(96));
    assert!(coarse / fine > 3.6, "{coarse:e} {fine:e}");
    let surf = build_surface(Model::Disc, 32).unwrap();
    assert!(gauge_identity_check(&surf, &LaurentCocycle::zero(2), &BumpFunction::constant(&surf, 1.0), &section).unwrap() < 1e-14);
}

#[test]
fn trace_free_exponential_has_unit_determinant() {
    let a = trace_free([c(0.4, 0.1), c(-0.7, 0.3), c(0.2, 0.0), c(0.1, -0.5)]);
    let f = LaurentCocycle::new(2, true, [(1, a)]).unwrap();
    let window = DegreeWindow::new(0, 40).unwrap();
    let e = exp_cocycle(&f, window).unwrap();
    let minus = exp_cocycle(&f.combine(c(-1.0, 0.0), &LaurentCocycle::zero(2), c(0.0, 0.0)).unwrap(), window).unwrap();
    for z in [c(0.3, 0.2), c(-0.6, 0.5), c(0.0, -0.9)] {
        assert!((e.eval(z).unwrap().determinant() - c(1.0, 0.0)).norm() < 1e-8);
    }
    let id = laurent_product(&e, &minus, DegreeWindow::new(0, 40).unwrap()).unwrap();
    assert!((id.eval(c(0.5, 0.1)).unwrap() - CMatrix::identity(2, 2)).norm() < 1e-10);
}

#[test]
fn series_pairing_is_bilinear() {
    let table = coeff_table(&GreenModel::new(Model::Disc), 6, 0.5, 128).unwrap();
    let f = |s: f64, t: f64| {
        LaurentCocycle::new(2, true, [(-1, trace_free([c(s, 0.0), c(t, 0.1), c(0.0, s), c(0.0, 0.0)])), (2, trace_free([c(t, t), c(0.0, 0.0), c(s, 0.0), c(0.3, 0.0)]))]).unwrap()
    };
    let (f1, f3, f2) = (f(0.5, 0.2), f(-0.1, 0.7), f(0.3, -0.4));
    let combo = f1.combine(c(2.0, 0.0), &f3, c(1.0, 0.0)).unwrap();
    let lhs = omega_series(&combo, &f2, &table).unwrap();
    let rhs = 2.0 * omega_series(&f1, &f2, &table).unwrap() + omega_series(&f3, &f2, &table).unwrap();
    assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
}

#[test]
fn prodistribution_text_round_trip() {
    let text = "D'_2: (1.5,-0.25) * {f} delta(0.5)/2pi ⊗ density(g) + (0,1) * delta(1) ⊗ delta(0.25)";
    let d: ProDistribution = text.parse().unwrap();
    let again: ProDistribution = d.to_string().parse().unwrap();
    assert_eq!(d, again);
    assert_eq!(d.level(), 2);
    assert!("D'_1: (1,0) * density(g) ⊗ density(g)".parse::<ProDistribution>().is_err());
}
