//! Green functions normalised as `g(P,Q) = log|P−Q| + smooth`, the
//! renormalised kernel `:g: = g − log|P−Q|`, and the double series of
//! `K(z,t) = ∂_z ∂̄_t :g:(z,t)` at the marked point.
//!
//! Disc: `g = log|P−Q| − log|1 − P Q̄|`, Dirichlet on the unit circle.
//! Torus (unit square, `τ = i`, `q = e^{−π}`):
//! `g(w) = log|θ₁(πw)| − π (Im w)² − L + π/12`, with `L = Σ_{n≥1} log(1 − q^{2n})`
//! fixing the mean to zero.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::io::sig17;
use crate::quadrature::GaussLegendre;
use crate::surface::{torus_reduce, Model};

const NOME: f64 = 0.043_213_918_263_772_25; // e^{−π}

/// Green-function model. With `closed_form` the kernel `K` is the exact
/// expression; otherwise it is obtained numerically from `:g:`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreenModel {
    pub model: Model,
    pub closed_form: bool,
    /// Overall factor on `g`; 1 for the standard normalisation.
    pub scale: f64,
}

impl GreenModel {
    pub fn new(model: Model) -> Self {
        Self { model, closed_form: true, scale: 1.0 }
    }

    pub fn numerical(model: Model) -> Self {
        Self { model, closed_form: false, scale: 1.0 }
    }

    pub fn scaled(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }
}

fn torus_log_constant() -> f64 {
    (1..40).map(|n| (1.0 - NOME.powi(2 * n)).ln()).sum()
}

/// `sin(a w)/w`, finite at `w = 0`.
fn sin_over(a: f64, w: Complex64) -> Complex64 {
    let x = w * a;
    if x.norm() < 1e-4 {
        let x2 = x * x;
        Complex64::new(a, 0.0) * (Complex64::new(1.0, 0.0) - x2 / 6.0 + x2 * x2 / 120.0)
    } else {
        x.sin() / w
    }
}

/// `θ₁(πw)/w` summed from its sine series.
fn theta1_over(w: Complex64) -> Complex64 {
    let mut sum = Complex64::new(0.0, 0.0);
    for n in 0..12 {
        let k = (n as f64 + 0.5).powi(2);
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        sum += sin_over(PI * (2 * n + 1) as f64, w) * (2.0 * sign * NOME.powf(k));
    }
    sum
}

fn torus_smooth(w: Complex64) -> f64 {
    theta1_over(w).norm().ln() - PI * w.im * w.im - torus_log_constant() + PI / 12.0
}

/// `g(P, Q)`; `P = Q` is rejected.
pub fn green_value(model: &GreenModel, p: Complex64, q: Complex64) -> Result<f64> {
    let v = match model.model {
        Model::Disc => {
            if p == q {
                return Err(invalid("coincident points"));
            }
            (p - q).norm().ln() - (Complex64::new(1.0, 0.0) - p * q.conj()).norm().ln()
        }
        Model::Torus => {
            let w = torus_reduce(p - q);
            if w.norm() == 0.0 {
                return Err(invalid("coincident points"));
            }
            w.norm().ln() + torus_smooth(w)
        }
    };
    Ok(model.scale * v)
}

/// `:g:(P, Q)`, continuous across the diagonal.
pub fn renormalized_green(model: &GreenModel, p: Complex64, q: Complex64) -> f64 {
    let v = match model.model {
        Model::Disc => -(Complex64::new(1.0, 0.0) - p * q.conj()).norm().ln(),
        Model::Torus => torus_smooth(torus_reduce(p - q)),
    };
    model.scale * v
}

/// Exact `∂_z ∂̄_t :g:`.
fn kernel_closed(model: &GreenModel, z: Complex64, t: Complex64) -> Complex64 {
    match model.model {
        Model::Disc => {
            let d = Complex64::new(1.0, 0.0) - z * t.conj();
            Complex64::new(0.5 * model.scale, 0.0) / (d * d)
        }
        Model::Torus => Complex64::new(PI / 2.0 * model.scale, 0.0),
    }
}

/// Probe radius and sample count of the contour differentiation.
const PROBE_RADIUS: f64 = 0.05;
const PROBE_SAMPLES: usize = 16;

/// `∂_z ∂̄_t :g:` as the `(e^{iα}, e^{−iβ})` Fourier mode of
/// `:g:(z + ρe^{iα}, t + ρe^{iβ})` divided by `ρ²`.
///
/// Higher Taylor terms feeding that mode all carry a factor `∂_z∂̄_z` or
/// `∂_t∂̄_t` of third or higher order, which vanish for the models here
/// (harmonic plus a quadratic in each variable).
fn kernel_contour(model: &GreenModel, z: Complex64, t: Complex64) -> Complex64 {
    let s = PROBE_SAMPLES;
    let rho = PROBE_RADIUS;
    let unit: Vec<Complex64> = (0..s).map(|k| Complex64::from_polar(1.0, 2.0 * PI * k as f64 / s as f64)).collect();
    let mut acc = Complex64::new(0.0, 0.0);
    for ea in &unit {
        let zp = z + ea * rho;
        for eb in &unit {
            let g = renormalized_green(model, zp, t + eb * rho);
            acc += ea.conj() * eb * g;
        }
    }
    acc / ((s * s) as f64 * rho * rho)
}

/// `∂_P ∂̄_Q g(P,Q)` for `P ≠ Q`. Equal to [`kernel`] because `log|P−Q|` is
/// harmonic off the diagonal; in numerical mode far pairs are differentiated
/// through `g` itself, since the nearest-image `:g:` is only smooth near the
/// diagonal.
pub fn offdiagonal_kernel(model: &GreenModel, p: Complex64, q: Complex64) -> Complex64 {
    if model.closed_form || model.model == Model::Disc {
        return kernel(model, p, q);
    }
    let w = torus_reduce(p - q);
    if w.norm() < 0.2 {
        return kernel_contour(model, p, q);
    }
    let s = PROBE_SAMPLES;
    let rho = PROBE_RADIUS;
    let unit: Vec<Complex64> = (0..s).map(|k| Complex64::from_polar(1.0, 2.0 * PI * k as f64 / s as f64)).collect();
    let mut acc = Complex64::new(0.0, 0.0);
    for ea in &unit {
        for eb in &unit {
            let v = green_value(model, p + ea * rho, q + eb * rho).unwrap_or(f64::NAN);
            acc += ea.conj() * eb * v;
        }
    }
    acc / ((s * s) as f64 * rho * rho)
}

pub fn kernel(model: &GreenModel, z: Complex64, t: Complex64) -> Complex64 {
    if model.closed_form {
        kernel_closed(model, z, t)
    } else {
        kernel_contour(model, z, t)
    }
}

/// Coefficients `a_{n,m}` of `K = Σ a_{n,m} zⁿ t̄^m`, `0 ≤ n, m ≤ order`.
#[derive(Debug, Clone, PartialEq)]
pub struct GreenCoeffTable {
    pub order: usize,
    pub coeffs: DMatrix<Complex64>,
    pub radius: f64,
}

impl GreenCoeffTable {
    pub fn get(&self, n: usize, m: usize) -> Complex64 {
        self.coeffs[(n, m)]
    }

    /// `max |a_{n,m} − conj(a_{m,n})|`.
    pub fn hermitian_defect(&self) -> f64 {
        let mut d = 0.0f64;
        for n in 0..=self.order {
            for m in 0..=self.order {
                d = d.max((self.coeffs[(n, m)] - self.coeffs[(m, n)].conj()).norm());
            }
        }
        d
    }

    /// `n,m,re,im` rows, row-major.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,m,re,im\n");
        for n in 0..=self.order {
            for m in 0..=self.order {
                let a = self.coeffs[(n, m)];
                out.push_str(&format!("{n},{m},{},{}\n", sig17(a.re), sig17(a.im)));
            }
        }
        out
    }

    /// Largest entrywise difference to another table of the same order.
    pub fn max_difference(&self, other: &Self) -> f64 {
        (&self.coeffs - &other.coeffs).iter().fold(0.0, |a, c| a.max(c.norm()))
    }
}

/// Extracts `a_{n,m}` by a double trapezoid rule on `|z| = |t| = r` with
/// `samples` points per circle.
pub fn coeff_table(model: &GreenModel, order: usize, radius: f64, samples: usize) -> Result<GreenCoeffTable> {
    let limit = match model.model {
        Model::Disc => 1.0 - PROBE_RADIUS,
        // :g: is only smooth while |z − t| + probe stays inside the patch
        Model::Torus => 0.25 - PROBE_RADIUS,
    };
    if !(radius > 0.0 && radius < limit) {
        return Err(invalid(format!("probe radius must lie in (0, {limit}), got {radius}")));
    }
    if samples < 4 * (order + 1) {
        return Err(invalid(format!("{samples} samples per circle are too few for order {order}")));
    }
    let s = samples;
    let pts: Vec<Complex64> = (0..s).map(|k| Complex64::from_polar(radius, 2.0 * PI * k as f64 / s as f64)).collect();
    let nyq = s / 2;
    // modes 0..=order plus the Nyquist mode as an aliasing probe
    let modes: Vec<usize> = (0..=order).chain(std::iter::once(nyq)).collect();
    let twiddle = |mode: usize, k: usize| Complex64::from_polar(1.0, -2.0 * PI * (mode * k % s) as f64 / s as f64);
    // A[n][k] = mean_j K(z_j, t_k) e^{−inα_j}
    let mut partial = vec![vec![Complex64::new(0.0, 0.0); s]; modes.len()];
    for (k, &t) in pts.iter().enumerate() {
        let col: Vec<Complex64> = pts.iter().map(|&z| kernel(model, z, t)).collect();
        for (mi, &n) in modes.iter().enumerate() {
            partial[mi][k] = col.iter().enumerate().map(|(j, v)| v * twiddle(n, j)).sum::<Complex64>() / s as f64;
        }
    }
    let mut full = DMatrix::zeros(modes.len(), modes.len());
    for (ni, row) in partial.iter().enumerate() {
        for (mi, &m) in modes.iter().enumerate() {
            // t̄^m carries e^{−imβ}, so project with e^{+imβ}
            full[(ni, mi)] = row.iter().enumerate().map(|(k, v)| v * twiddle(m, k).conj()).sum::<Complex64>() / s as f64;
        }
    }
    let scale = full.iter().fold(0.0f64, |a, c| a.max(c.norm())).max(f64::MIN_POSITIVE);
    let last = modes.len() - 1;
    let tail = (0..modes.len()).map(|i| full[(i, last)].norm().max(full[(last, i)].norm())).fold(0.0, f64::max) / scale;
    if tail > 1e-13 {
        return Err(Error::Aliasing { tail });
    }
    let coeffs = DMatrix::from_fn(order + 1, order + 1, |n, m| full[(n, m)] / radius.powi((n + m) as i32));
    Ok(GreenCoeffTable { order, coeffs, radius })
}

/// Reproduction fit: `κ` with `κ ∫ K(P,Q) K(Q,Q′) dA_Q ≈ K(P,Q′)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Reproduction {
    pub kappa: f64,
    pub spread: f64,
    pub per_pair: Vec<f64>,
}

/// `∫ K(P,Q) K(Q,Q′) dA_Q` over the surface; `radial` Gauss nodes times
/// `4·radial` angular points on the disc, a `2·radial` square grid on the
/// torus.
pub fn kernel_convolution(model: &GreenModel, p: Complex64, q: Complex64, radial: usize) -> Complex64 {
    match model.model {
        Model::Disc => {
            let gl = GaussLegendre::on(radial, 0.0, 1.0);
            let na = 4 * radial;
            let mut acc = Complex64::new(0.0, 0.0);
            for (r, w) in gl.nodes.iter().zip(&gl.weights) {
                for k in 0..na {
                    let x = Complex64::from_polar(*r, 2.0 * PI * k as f64 / na as f64);
                    acc += kernel(model, p, x) * kernel(model, x, q) * (w * r);
                }
            }
            acc * (2.0 * PI / na as f64)
        }
        Model::Torus => {
            let n = 2 * radial;
            let h = 1.0 / n as f64;
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..n {
                for j in 0..n {
                    let x = Complex64::new((i as f64 + 0.5) * h - 0.5, (j as f64 + 0.5) * h - 0.5);
                    acc += kernel(model, p, x) * kernel(model, x, q);
                }
            }
            acc * (h * h)
        }
    }
}

pub fn reproduction_constant(model: &GreenModel, pairs: &[(Complex64, Complex64)], radial: usize) -> Result<Reproduction> {
    if pairs.len() < 3 {
        return Err(invalid("reproduction needs at least three point pairs"));
    }
    if model.model == Model::Disc && pairs.iter().any(|(a, b)| a.norm() >= 0.95 || b.norm() >= 0.95) {
        return Err(invalid("points must stay away from the boundary"));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    let mut per_pair = Vec::with_capacity(pairs.len());
    for &(p, q) in pairs {
        let conv = kernel_convolution(model, p, q, radial);
        let direct = kernel(model, p, q);
        num += (conv.conj() * direct).re;
        den += conv.norm_sqr();
        per_pair.push((direct / conv).re);
    }
    let kappa = num / den;
    let spread = per_pair.iter().map(|k| (k - kappa).abs()).fold(0.0, f64::max) / kappa.abs();
    if spread > 0.05 {
        return Err(Error::Inconsistent { spread });
    }
    Ok(Reproduction { kappa, spread, per_pair })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn disc_values() {
        let g = GreenModel::new(Model::Disc);
        let q = c(0.3, -0.4);
        assert!((green_value(&g, c(0.0, 0.0), q).unwrap() - q.norm().ln()).abs() < 1e-15);
        assert!(green_value(&g, c(0.2, 0.1), Complex64::from_polar(1.0 - 1e-12, 0.7)).unwrap().abs() < 1e-10);
        assert!(green_value(&g, q, q).is_err());
        assert_eq!(renormalized_green(&g, c(0.0, 0.0), c(0.0, 0.0)), 0.0);
        let z = c(0.5, 0.2);
        assert!((renormalized_green(&g, z, z) + (1.0 - z.norm_sqr()).ln()).abs() < 1e-15);
    }

    #[test]
    fn symmetry_both_models() {
        for model in [Model::Disc, Model::Torus] {
            let g = GreenModel::new(model);
            let (p, q) = (c(0.11, -0.23), c(-0.3, 0.17));
            assert!((green_value(&g, p, q).unwrap() - green_value(&g, q, p).unwrap()).abs() < 1e-12);
            assert!((renormalized_green(&g, p, q) - renormalized_green(&g, q, p)).abs() < 1e-12);
        }
    }

    #[test]
    fn torus_is_periodic_and_renormalization_is_smooth() {
        let g = GreenModel::new(Model::Torus);
        let p = c(0.1, 0.2);
        let q = c(0.35, -0.1);
        let a = green_value(&g, p, q).unwrap();
        assert!((a - green_value(&g, p + 1.0, q - c(0.0, 1.0)).unwrap()).abs() < 1e-12);
        let d0 = renormalized_green(&g, p, p);
        let d1 = renormalized_green(&g, p, p + c(1e-6, 0.0));
        assert!((d0 - d1).abs() < 1e-5);
    }

    #[test]
    fn contour_kernel_matches_closed_form() {
        for model in [Model::Disc, Model::Torus] {
            let exact = GreenModel::new(model);
            let num = GreenModel::numerical(model);
            let (z, t) = (c(0.1, 0.05), c(-0.07, 0.12));
            assert!((kernel(&exact, z, t) - kernel(&num, z, t)).norm() < 1e-9);
        }
        let num = GreenModel::numerical(Model::Torus);
        let far = offdiagonal_kernel(&num, c(0.1, 0.0), c(-0.3, 0.35));
        assert!((far - PI / 2.0).norm() < 1e-9, "{far}");
    }

    #[test]
    fn small_disc_table() {
        let t = coeff_table(&GreenModel::numerical(Model::Disc), 4, 0.3, 32).unwrap();
        for n in 0..=4 {
            for m in 0..=4 {
                let want = if n == m { (n as f64 + 1.0) / 2.0 } else { 0.0 };
                assert!((t.get(n, m) - want).norm() < 1e-6, "{n},{m}: {}", t.get(n, m));
            }
        }
        assert!(t.hermitian_defect() < 1e-8);
        let csv = t.to_csv();
        let first: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
        assert_eq!(&first[..2], &["0", "0"]);
        assert!((first[2].parse::<f64>().unwrap() - 0.5).abs() < 1e-9);
        assert!(coeff_table(&GreenModel::new(Model::Disc), 8, 0.5, 16).is_err());
    }

    #[test]
    fn torus_table_is_constant() {
        let t = coeff_table(&GreenModel::numerical(Model::Torus), 3, 0.15, 32).unwrap();
        assert!((t.get(0, 0) - PI / 2.0).norm() < 1e-6);
        assert!(t.coeffs.iter().skip(1).all(|a| a.norm() < 1e-6));
    }

    #[test]
    fn reproduction_on_the_torus() {
        let pairs = [(c(0.1, 0.0), c(0.0, 0.2)), (c(-0.2, 0.1), c(0.3, 0.3)), (c(0.0, 0.0), c(0.4, -0.1))];
        let r = reproduction_constant(&GreenModel::new(Model::Torus), &pairs, 4).unwrap();
        assert!((r.kappa - 2.0 / PI).abs() < 1e-12);
    }
}
