//! Cocycle pairings at the trivial bundle.
//!
//! * [`omega_series`]: `(2π)² Re Σ a_{n,m} tr(f¹*_{n−1} f²_{m−1})` from a
//!   coefficient table.
//! * [`omega_contour_oracle`]: the double circle integral
//!   `∮∮ tr(f¹(z)* f²(t)) K(z,t) dz̄ dt`, evaluated on circles of radius
//!   `r < 1` and continued to `r = 1` as a polynomial in `r²`.
//! * [`harmonic_reduce`] and [`atiyah_bott_form`] on the torus grid.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::green::{offdiagonal_kernel, GreenCoeffTable, GreenModel};
use crate::laurent::{CMatrix, LaurentCocycle};
use crate::surface::{BumpFunction, DiscretizedSurface, Model};

fn trace_adjoint_product(a: &CMatrix, b: &CMatrix) -> Complex64 {
    // tr(a* b)
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// The table-based pairing. Degrees below −1 have no partner in the table
/// and contribute nothing.
pub fn omega_series(f1: &LaurentCocycle, f2: &LaurentCocycle, table: &GreenCoeffTable) -> Result<f64> {
    if f1.rank() != f2.rank() {
        return Err(Error::RankMismatch { left: f1.rank(), right: f2.rank() });
    }
    let order = table.order as i32;
    for f in [f1, f2] {
        if let Some(k) = f.max_degree().filter(|&k| k + 1 > order) {
            return Err(Error::TableOrder { order: table.order, degree: k });
        }
    }
    let mut sum = Complex64::new(0.0, 0.0);
    for (&k, c1) in f1.terms().range(-1..) {
        for (&l, c2) in f2.terms().range(-1..) {
            sum += table.get((k + 1) as usize, (l + 1) as usize) * trace_adjoint_product(c1, c2);
        }
    }
    Ok(4.0 * PI * PI * sum.re)
}

/// `∮_{|z|=r}∮_{|t|=r} tr(f¹(z)* f²(t)) K(z,t) dz̄ dt` by the trapezoid rule.
pub fn circle_pairing(f1: &LaurentCocycle, f2: &LaurentCocycle, green: &GreenModel, radius: f64, samples: usize) -> Result<Complex64> {
    let step = 2.0 * PI / samples as f64;
    let pts: Vec<Complex64> = (0..samples).map(|k| Complex64::from_polar(radius, step * k as f64)).collect();
    let a: Vec<CMatrix> = pts.iter().map(|&z| f1.eval(z)).collect::<Result<_>>()?;
    let b: Vec<CMatrix> = pts.iter().map(|&t| f2.eval(t)).collect::<Result<_>>()?;
    let mut acc = Complex64::new(0.0, 0.0);
    for (z, fa) in pts.iter().zip(&a) {
        // dz̄ = −i z̄ dθ
        let dz = Complex64::new(0.0, -1.0) * z.conj();
        let mut inner = Complex64::new(0.0, 0.0);
        for (t, fb) in pts.iter().zip(&b) {
            // dt = i t dθ
            let dt = Complex64::new(0.0, 1.0) * t;
            inner += trace_adjoint_product(fa, fb) * offdiagonal_kernel(green, *z, *t) * dt;
        }
        acc += inner * dz;
    }
    Ok(acc * step * step)
}

/// Oracle value and the spread between two independent extrapolations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContourValue {
    pub value: f64,
    pub consistency: f64,
}

fn polynomial_extrapolate(us: &[f64], vs: &[Complex64], degree: usize, at: f64) -> Result<Complex64> {
    // centred variable keeps the Vandermonde matrix tame
    let (lo, hi) = (us[0].min(us[us.len() - 1]), us[0].max(us[us.len() - 1]));
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let x = |u: f64| (u - mid) / half;
    let a = DMatrix::from_fn(us.len(), degree + 1, |i, j| Complex64::new(x(us[i]).powi(j as i32), 0.0));
    let rhs = DVector::from_column_slice(vs);
    let svd = a.svd(true, true);
    let coef = svd.solve(&rhs, 1e-14).map_err(|e| invalid(e.to_string()))?;
    Ok((0..=degree).map(|j| coef[j] * x(at).powi(j as i32)).sum())
}

/// Contour-integral form of the pairing.
///
/// On the disc the kernel is singular where `z = t` on the unit circle, so
/// the circle integral is sampled at radii `r ∈ [0.2, 0.8]`. Only the modes
/// `z^{k+1} t̄^{l+1}` with `k, l ≥ −1` survive, so the sampled value is a
/// polynomial in `u = r²` of known degree; it is fitted and evaluated at
/// `u = 1`. Two fits on different node sets must agree.
pub fn omega_contour_oracle(f1: &LaurentCocycle, f2: &LaurentCocycle, green: &GreenModel, samples: usize) -> Result<ContourValue> {
    if f1.rank() != f2.rank() {
        return Err(Error::RankMismatch { left: f1.rank(), right: f2.rank() });
    }
    if green.model == Model::Torus && !green.closed_form {
        return Err(Error::Unsupported("contour oracle needs the closed-form torus kernel".into()));
    }
    if samples < 8 {
        return Err(invalid("contour oracle needs at least 8 samples per circle"));
    }
    let top = |f: &LaurentCocycle| f.max_degree().map_or(0, |k| (k + 1).max(0) as usize);
    let degree = top(f1) + top(f2);
    let (ulo, uhi) = (0.04, 0.64);
    let cheb = |count: usize| -> Vec<f64> {
        (0..count)
            .map(|i| {
                let c = ((2 * i + 1) as f64 * PI / (2 * count) as f64).cos();
                0.5 * (ulo + uhi) + 0.5 * (uhi - ulo) * c
            })
            .collect()
    };
    let mut results = Vec::with_capacity(2);
    let mut scale = 0.0f64;
    for count in [degree + 4, degree + 7] {
        let us = cheb(count);
        let vs: Vec<Complex64> = us.iter().map(|&u| circle_pairing(f1, f2, green, u.sqrt(), samples)).collect::<Result<_>>()?;
        scale = vs.iter().fold(scale, |a, v| a.max(v.norm()));
        results.push(polynomial_extrapolate(&us, &vs, degree, 1.0)?);
    }
    let value = results[0].re;
    let consistency = (results[0] - results[1]).norm();
    // absolute floor for pairs whose form vanishes, where every sample is roundoff
    let floor = 1e-12 * f1.coefficient_norm_sum() * f2.coefficient_norm_sum();
    if consistency > 1e-9 * scale.max(value.abs()) + floor {
        return Err(Error::NoConvergence { iterations: 2, residual: consistency });
    }
    Ok(ContourValue { value, consistency })
}

/// Real 1-form `A dx + B dy` sampled on cells, with anti-Hermitian `A`, `B`.
#[derive(Debug, Clone, PartialEq)]
pub struct OneForm {
    pub weights: Vec<f64>,
    pub a: Vec<CMatrix>,
    pub b: Vec<CMatrix>,
}

impl OneForm {
    /// Spatially constant form on the cells of `surface`.
    pub fn constant(surface: &DiscretizedSurface, a: CMatrix, b: CMatrix) -> Self {
        let n = surface.cell_count();
        Self { weights: surface.cells().iter().map(|c| c.weight).collect(), a: vec![a; n], b: vec![b; n] }
    }

    pub fn scaled(&self, s: f64) -> Self {
        let k = Complex64::new(s, 0.0);
        Self {
            weights: self.weights.clone(),
            a: self.a.iter().map(|m| m * k).collect(),
            b: self.b.iter().map(|m| m * k).collect(),
        }
    }
}

/// `∫ tr(α₁ ∧ α₂) = ∫ tr(A₁B₂ − B₁A₂) dx dy`.
pub fn atiyah_bott_form(a1: &OneForm, a2: &OneForm) -> Result<f64> {
    if a1.weights.len() != a2.weights.len() || a1.weights.iter().zip(&a2.weights).any(|(x, y)| x != y) {
        return Err(invalid("forms live on different grids"));
    }
    let mut sum = Complex64::new(0.0, 0.0);
    for i in 0..a1.weights.len() {
        if a1.a[i].nrows() != a2.a[i].nrows() {
            return Err(Error::RankMismatch { left: a1.a[i].nrows(), right: a2.a[i].nrows() });
        }
        sum += ((&a1.a[i] * &a2.b[i]).trace() - (&a1.b[i] * &a2.a[i]).trace()) * a1.weights[i];
    }
    Ok(sum.re)
}

/// Harmonic representative of a cocycle on the torus grid.
#[derive(Debug, Clone)]
pub struct HarmonicForm {
    pub rank: usize,
    /// `(0,1)` component per cell.
    pub phi: Vec<CMatrix>,
    /// `α = φ dz̄ − φ* dz` as a real form.
    pub alpha: OneForm,
    /// `‖Dbar* φ‖ / ‖φ‖`.
    pub coclosed_residual: f64,
    /// Expected size of discretisation error in `φ`.
    pub grid_tolerance: f64,
}

impl HarmonicForm {
    /// Area-weighted L² norm of `φ`.
    pub fn norm(&self) -> f64 {
        self.phi.iter().zip(&self.alpha.weights).map(|(m, w)| w * m.norm_squared()).sum::<f64>().sqrt()
    }

    /// L² distance between the `φ` of two forms on the same grid.
    pub fn distance(&self, other: &Self) -> f64 {
        self.phi
            .iter()
            .zip(&other.phi)
            .zip(&self.alpha.weights)
            .map(|((a, b), w)| w * (a - b).norm_squared())
            .sum::<f64>()
            .sqrt()
    }
}

/// `φ(Q) = 2i Σ_P f(P) ∂̄ρ(P) K(P,Q) w_P` over cells, with `∂̄ρ` taken from
/// the grid stencil. The wedge `dz̄ ∧ dz = 2i dx∧dy` supplies the factor.
pub fn harmonic_reduce(
    f: &LaurentCocycle,
    surface: &DiscretizedSurface,
    rho: &BumpFunction,
    green: &GreenModel,
) -> Result<HarmonicForm> {
    if surface.model() != Model::Torus || green.model != Model::Torus {
        return Err(Error::Unsupported("harmonic reduction needs the compact torus model".into()));
    }
    let (r1, _) = rho.radii().ok_or_else(|| invalid("harmonic reduction needs an annular bump"))?;
    if f.min_degree().is_some_and(|k| k < 0) && r1 < 2.0 * surface.h() {
        return Err(Error::PoleOnContour { location: format!("plateau radius {r1} is not resolved by the grid") });
    }
    let n = f.rank();
    let res = surface.resolution();
    let values: Vec<Complex64> = rho.values().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let drho = surface.apply_dbar(&values);
    let cells = surface.cells();
    // sources: cells where the stencil sees a non-constant ρ
    let mut sources = Vec::new();
    let mut mass = 0.0;
    for (i, d) in drho.iter().enumerate() {
        if d.norm() > 0.0 {
            let z = cells[i].center;
            if z.norm() < 0.5 * r1 {
                return Err(Error::PoleOnContour { location: format!("∂̄ρ is non-zero at |z| = {}", z.norm()) });
            }
            let fz = f.eval(z)?;
            mass += fz.norm() * d.norm() * cells[i].weight;
            sources.push((i, fz * (d * cells[i].weight * Complex64::new(0.0, 2.0))));
        }
    }
    // the kernel only depends on the cell offset
    let h = surface.h();
    let offset_kernel: Vec<Complex64> = (0..res * res)
        .map(|k| {
            let (di, dj) = ((k % res) as f64, (k / res) as f64);
            offdiagonal_kernel(green, Complex64::new(di * h, dj * h), Complex64::new(0.0, 0.0))
        })
        .collect();
    let kmax = offset_kernel.iter().fold(0.0f64, |a, k| a.max(k.norm()));
    let mut phi = vec![CMatrix::zeros(n, n); cells.len()];
    for (q, out) in phi.iter_mut().enumerate() {
        let (qi, qj) = (q % res, q / res);
        for (p, src) in &sources {
            let (pi, pj) = (p % res, p / res);
            let k = (pi + res - qi) % res + res * ((pj + res - qj) % res);
            *out += src * offset_kernel[k];
        }
    }
    // co-closedness: Dbar* φ on nodes, componentwise
    let weights = surface.node_weights();
    let mut resid = 0.0;
    let mut total = 0.0;
    for a in 0..n {
        for b in 0..n {
            let comp: Vec<Complex64> = phi.iter().map(|m| m[(a, b)]).collect();
            let mut adj = vec![Complex64::new(0.0, 0.0); surface.node_count()];
            for (r, row) in surface.dbar_rows().iter().enumerate() {
                for &(j, c) in row {
                    adj[j] += c.conj() * comp[r] * cells[r].weight / weights[j];
                }
            }
            resid += adj.iter().zip(weights).map(|(v, w)| w * v.norm_sqr()).sum::<f64>();
            total += surface.cell_norm(&comp).powi(2);
        }
    }
    let coclosed_residual = if total > 0.0 { (resid / total).sqrt() } else { 0.0 };
    let a: Vec<CMatrix> = phi.iter().map(|m| m - m.adjoint()).collect();
    let b: Vec<CMatrix> = phi.iter().map(|m| (m + m.adjoint()) * Complex64::new(0.0, -1.0)).collect();
    Ok(HarmonicForm {
        rank: n,
        alpha: OneForm { weights: cells.iter().map(|c| c.weight).collect(), a, b },
        phi,
        coclosed_residual,
        grid_tolerance: h * h * 2.0 * kmax * mass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::green::coeff_table;
    use crate::surface::{build_surface, bump_function};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn scalar(terms: &[(i32, Complex64)]) -> LaurentCocycle {
        LaurentCocycle::scalar(terms.iter().copied()).unwrap()
    }

    #[test]
    fn pinned_inverse_z_value() {
        let table = coeff_table(&GreenModel::new(Model::Disc), 4, 0.5, 64).unwrap();
        let f = scalar(&[(-1, c(1.0, 0.0))]);
        let v = omega_series(&f, &f, &table).unwrap();
        assert!((v - 2.0 * PI * PI).abs() < 1e-9);
        let oracle = omega_contour_oracle(&f, &f, &GreenModel::new(Model::Disc), 256).unwrap();
        assert!((oracle.value - 2.0 * PI * PI).abs() < 1e-6 * 2.0 * PI * PI);
    }

    #[test]
    fn degree_mismatch_and_zero() {
        let table = coeff_table(&GreenModel::new(Model::Disc), 4, 0.5, 64).unwrap();
        let f = scalar(&[(-1, c(1.0, 0.0))]);
        let one = scalar(&[(0, c(1.0, 0.0))]);
        assert!(omega_series(&f, &one, &table).unwrap().abs() < 1e-12);
        assert_eq!(omega_series(&f, &LaurentCocycle::zero(1), &table).unwrap(), 0.0);
        let high = scalar(&[(4, c(1.0, 0.0))]);
        assert!(matches!(omega_series(&f, &high, &table), Err(Error::TableOrder { .. })));
        let z = omega_contour_oracle(&f, &LaurentCocycle::zero(1), &GreenModel::new(Model::Disc), 64).unwrap();
        assert_eq!(z.value, 0.0);
    }

    #[test]
    fn series_matches_oracle_for_mixed_degrees() {
        let table = coeff_table(&GreenModel::new(Model::Disc), 6, 0.5, 64).unwrap();
        let f1 = scalar(&[(-3, c(0.2, 0.1)), (-1, c(0.5, -0.3)), (1, c(-0.4, 0.2)), (2, c(0.3, 0.0))]);
        let f2 = scalar(&[(-2, c(1.0, 0.0)), (-1, c(0.1, 0.7)), (0, c(0.3, 0.3)), (2, c(-0.2, 0.5))]);
        let s = omega_series(&f1, &f2, &table).unwrap();
        let o = omega_contour_oracle(&f1, &f2, &GreenModel::new(Model::Disc), 128).unwrap();
        assert!((s - o.value).abs() < 1e-8 * s.abs(), "{s} vs {}", o.value);
    }

    #[test]
    fn atiyah_bott_examples() {
        let surf = build_surface(Model::Torus, 8).unwrap();
        let i = CMatrix::from_element(1, 1, c(0.0, 1.0));
        let z = CMatrix::zeros(1, 1);
        let dx = OneForm::constant(&surf, i.clone(), z.clone());
        let dy = OneForm::constant(&surf, z, i);
        assert!((atiyah_bott_form(&dx, &dy).unwrap() + 1.0).abs() < 1e-12);
        assert!((atiyah_bott_form(&dy, &dx).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(atiyah_bott_form(&dx, &dx).unwrap(), 0.0);
        assert!((atiyah_bott_form(&dx.scaled(2.0), &dy).unwrap() + 2.0).abs() < 1e-12);
    }

    #[test]
    fn reduction_of_inverse_z() {
        let surf = build_surface(Model::Torus, 32).unwrap();
        let rho = bump_function(&surf, 0.1, 0.3).unwrap();
        let g = GreenModel::new(Model::Torus);
        let f = scalar(&[(-1, c(1.0, 0.0))]);
        let h = harmonic_reduce(&f, &surf, &rho, &g).unwrap();
        // φ ≈ −iπ², constant
        assert!((h.phi[0][(0, 0)] - c(0.0, -PI * PI)).norm() < 0.05 * PI * PI, "{}", h.phi[0][(0, 0)]);
        assert!(h.coclosed_residual < 1e-10);
        let trivial = harmonic_reduce(&scalar(&[(1, c(1.0, 0.0))]), &surf, &rho, &g).unwrap();
        assert!(trivial.norm() < 10.0 * trivial.grid_tolerance);
        let disc = build_surface(Model::Disc, 16).unwrap();
        let rd = bump_function(&disc, 0.2, 0.5).unwrap();
        assert!(harmonic_reduce(&f, &disc, &rd, &g).is_err());
    }
}
