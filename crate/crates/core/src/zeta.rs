//! From heat traces to `ζ′(0)` and the regularised determinant.
//!
//! With `θ(t) ~ Σ_{n∈E} a_n t^n` as `t → 0` and `I(ε) = ∫_ε^∞ θ(t) dt/t`,
//!
//! ```text
//! ζ′(0) = I(ε) + γ a₀ + a₀ log ε + Σ_{n≠0} a_n εⁿ/n + ∫₀^ε r(t) dt/t
//! ```
//!
//! where `γ` is Euler's constant and `r = θ − Σ a_n tⁿ` is the fit remainder,
//! dropped here. Positive exponents in `E` play the part of the regular
//! remainder. For spectra `I(ε)` is the exact sum `Σ E₁(λε)`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use num_rational::Rational32;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::quadrature::{adaptive_simpson, exp_integral_e1, EULER_GAMMA};
use crate::surface::Model;

/// Largest accepted condition number of a scaled design matrix.
pub const CONDITION_CAP: f64 = 1e12;

pub fn rational(n: i32, d: i32) -> Rational32 {
    Rational32::new(n, d)
}

fn to_f64(r: Rational32) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Heat-trace exponents: half-integers on the disc for its boundary.
pub fn default_exponents(model: Model) -> Vec<Rational32> {
    match model {
        Model::Disc => vec![rational(-1, 1), rational(-1, 2), rational(0, 1), rational(1, 2), rational(1, 1)],
        Model::Torus => vec![rational(-1, 1), rational(0, 1), rational(1, 1)],
    }
}

/// Parses `"-1,-1/2,0"`.
pub fn parse_exponents(text: &str) -> Result<Vec<Rational32>> {
    text.split(',')
        .map(|p| p.trim().parse::<Rational32>().map_err(|e| Error::Parse(format!("exponent '{p}': {e}"))))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticFit {
    pub exponents: Vec<Rational32>,
    pub coefficients: Vec<f64>,
    pub window: (f64, f64),
    /// Largest absolute misfit on the samples relative to `max |θ|`.
    pub residual: f64,
}

impl AsymptoticFit {
    pub fn coefficient(&self, n: Rational32) -> f64 {
        self.exponents.iter().position(|&e| e == n).map_or(0.0, |i| self.coefficients[i])
    }

    pub fn a0(&self) -> f64 {
        self.coefficient(rational(0, 1))
    }

    /// `{ "-1/2": a, ... }` keyed by the exponent's display form.
    pub fn as_map(&self) -> BTreeMap<String, f64> {
        self.exponents.iter().zip(&self.coefficients).map(|(e, c)| (e.to_string(), *c)).collect()
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.exponents.iter().zip(&self.coefficients).map(|(&e, c)| c * t.powf(to_f64(e))).sum()
    }
}

/// Least squares with column equilibration; returns the solution and the
/// condition number of the scaled design.
fn scaled_least_squares(design: DMatrix<f64>, rhs: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
    let scales: Vec<f64> = design
        .column_iter()
        .map(|c| c.amax().max(f64::MIN_POSITIVE))
        .collect();
    let mut a = design;
    for (j, s) in scales.iter().enumerate() {
        a.column_mut(j).scale_mut(1.0 / s);
    }
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let cond = smax / smin;
    if !(cond < CONDITION_CAP) {
        return Err(Error::IllConditioned { condition: cond });
    }
    let x = svd.solve(rhs, 0.0).map_err(|e| invalid(e.to_string()))?;
    Ok((DVector::from_iterator(x.len(), x.iter().zip(&scales).map(|(v, s)| v / s)), cond))
}

fn log_spaced(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..count).map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp()).collect()
}

/// Fits `θ(t) ≈ Σ a_n tⁿ` on `samples` log-spaced points of `[lo, hi]`.
pub fn fit_asymptotics(
    theta: &dyn Fn(f64) -> f64,
    exponents: &[Rational32],
    window: (f64, f64),
    samples: usize,
) -> Result<AsymptoticFit> {
    let (lo, hi) = window;
    if !(lo > 0.0 && lo < hi && hi.is_finite()) {
        return Err(invalid(format!("fit window must satisfy 0 < lo < hi, got [{lo}, {hi}]")));
    }
    let mut exps = exponents.to_vec();
    exps.sort();
    exps.dedup();
    if exps.len() != exponents.len() {
        return Err(invalid("duplicate exponents"));
    }
    if !exps.contains(&rational(0, 1)) {
        return Err(invalid("exponent set must contain 0"));
    }
    if samples < exps.len().max(2) {
        return Err(invalid(format!("{samples} samples cannot determine {} coefficients", exps.len())));
    }
    let ts = log_spaced(lo, hi, samples);
    let ys: Vec<f64> = ts.iter().map(|&t| theta(t)).collect();
    if ys.iter().any(|y| !y.is_finite()) {
        return Err(invalid("theta is not finite on the fit window"));
    }
    let design = DMatrix::from_fn(samples, exps.len(), |i, j| ts[i].powf(to_f64(exps[j])));
    let rhs = DVector::from_vec(ys.clone());
    let (coef, _) = scaled_least_squares(design.clone(), &rhs)?;
    let fitted = &design * &coef;
    let scale = ys.iter().fold(0.0f64, |a, y| a.max(y.abs())).max(f64::MIN_POSITIVE);
    let residual = (fitted - rhs).amax() / scale;
    Ok(AsymptoticFit { exponents: exps, coefficients: coef.iter().copied().collect(), window, residual })
}

/// Options for [`finite_part`].
#[derive(Debug, Clone, Copy)]
pub struct FinitePartOptions {
    /// Largest ε of the sequence.
    pub eps0: f64,
    /// Number of halvings.
    pub count: usize,
    /// Include `log ε` in the divergent basis.
    pub log: bool,
    /// Largest tolerated relative misfit.
    pub tolerance: f64,
}

impl Default for FinitePartOptions {
    fn default() -> Self {
        Self { eps0: 0.1, count: 14, log: true, tolerance: 1e-8 }
    }
}

/// Constant term of `F(ε) = Σ_{n<0} c_n εⁿ + c_log log ε + c₀ + o(1)`.
///
/// Fits the divergent basis plus `1, ε, ε²` on `ε_k = ε₀ 2^{−k}`.
pub fn finite_part(f: &dyn Fn(f64) -> f64, divergent: &[Rational32], opts: FinitePartOptions) -> Result<f64> {
    if divergent.iter().any(|&n| n >= rational(0, 1)) {
        return Err(invalid("divergent exponents must be negative"));
    }
    let mut basis: Vec<Box<dyn Fn(f64) -> f64>> = Vec::new();
    for &n in divergent {
        let p = to_f64(n);
        basis.push(Box::new(move |e: f64| e.powf(p)));
    }
    if opts.log {
        basis.push(Box::new(f64::ln));
    }
    let constant = basis.len();
    basis.push(Box::new(|_| 1.0));
    basis.push(Box::new(|e| e));
    basis.push(Box::new(|e| e * e));
    if opts.count < basis.len() + 2 {
        return Err(invalid("too few ε values for the requested basis"));
    }
    let eps: Vec<f64> = (0..opts.count).map(|k| opts.eps0 * 0.5f64.powi(k as i32)).collect();
    let ys: Vec<f64> = eps.iter().map(|&e| f(e)).collect();
    if ys.iter().any(|y| !y.is_finite()) {
        return Err(invalid("F is not finite on the ε sequence"));
    }
    // rows weighted by ε^p so rounding in the divergent samples is uniform
    let p = divergent.iter().map(|&n| -to_f64(n)).fold(0.0, f64::max);
    let w: Vec<f64> = eps.iter().map(|e| e.powf(p)).collect();
    let design = DMatrix::from_fn(eps.len(), basis.len(), |i, j| w[i] * basis[j](eps[i]));
    let rhs = DVector::from_iterator(ys.len(), ys.iter().zip(&w).map(|(y, w)| y * w));
    let (coef, _) = scaled_least_squares(design.clone(), &rhs)?;
    let scale = rhs.iter().fold(f64::MIN_POSITIVE, |a, y| a.max(y.abs()));
    let residual = (&design * &coef - rhs).amax() / scale;
    if residual > opts.tolerance {
        return Err(Error::BasisMismatch { residual, tolerance: opts.tolerance });
    }
    Ok(coef[constant])
}

/// Where the heat trace comes from.
pub enum ThetaSource<'a> {
    /// Eigenvalues, all positive.
    Spectrum(&'a [f64]),
    /// A heat-trace function together with a lower bound for the spectrum,
    /// used to place and estimate the large-t tail.
    Function { theta: &'a dyn Fn(f64) -> f64, lambda_min: f64 },
}

impl ThetaSource<'_> {
    pub fn theta(&self, t: f64) -> f64 {
        match self {
            ThetaSource::Spectrum(v) => v.iter().map(|&l| (-t * l).exp()).sum(),
            ThetaSource::Function { theta, .. } => theta(t),
        }
    }

    fn check(&self) -> Result<()> {
        match self {
            ThetaSource::Spectrum(v) => {
                if v.is_empty() {
                    return Err(invalid("empty spectrum"));
                }
                let min = v.iter().copied().fold(f64::INFINITY, f64::min);
                if !(min > 0.0) {
                    return Err(Error::NonPositiveSpectrum(min));
                }
            }
            ThetaSource::Function { lambda_min, .. } => {
                if !(*lambda_min > 0.0) {
                    return Err(Error::NonPositiveSpectrum(*lambda_min));
                }
            }
        }
        Ok(())
    }

    /// `∫_a^b θ dt/t` (b may be infinite).
    fn integral(&self, a: f64, b: f64) -> Result<f64> {
        match self {
            ThetaSource::Spectrum(v) => {
                let tail = |x: f64| if x.is_finite() { exp_integral_e1(x) } else { 0.0 };
                Ok(v.iter().map(|&l| exp_integral_e1(l * a) - tail(l * b)).sum())
            }
            ThetaSource::Function { theta, lambda_min } => {
                let cutoff = if b.is_finite() { b } else { (40.0 / lambda_min).max(10.0 * a) };
                let scale = theta(a).abs().max(1.0);
                let body = adaptive_simpson(&|u: f64| theta(u.exp()), a.ln(), cutoff.ln(), 1e-13 * scale)
                    .ok_or(Error::NoConvergence { iterations: 48, residual: f64::NAN })?;
                let tail = if b.is_finite() { 0.0 } else { theta(cutoff) / (lambda_min * cutoff) };
                Ok(body + tail)
            }
        }
    }
}

/// Terms that were added to `I(ε)` to produce `ζ′(0)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DivergenceLedger {
    /// `∫_ε^∞ θ dt/t`.
    pub integral: f64,
    /// `a_n εⁿ/n` for each negative exponent, keyed by exponent.
    pub pole_terms: BTreeMap<String, f64>,
    /// `a₀ log ε`.
    pub log_term: f64,
    /// `γ a₀`.
    pub euler_term: f64,
    /// `Σ_{n>0} a_n εⁿ/n`, the fitted regular remainder.
    pub regular_terms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZetaResult {
    pub zeta_prime_0: f64,
    pub det_reg: f64,
    pub eps: f64,
    pub fit: AsymptoticFit,
    pub ledger: DivergenceLedger,
    /// `|ζ′(0; ε/2) − ζ′(0; ε)|` with the same fit.
    pub halving_change: f64,
}

fn assemble(fit: &AsymptoticFit, eps: f64, integral: f64) -> (f64, DivergenceLedger) {
    let a0 = fit.a0();
    let mut pole_terms = BTreeMap::new();
    let mut regular = 0.0;
    for (&e, &c) in fit.exponents.iter().zip(&fit.coefficients) {
        let n = to_f64(e);
        if n < 0.0 {
            pole_terms.insert(e.to_string(), c * eps.powf(n) / n);
        } else if n > 0.0 {
            regular += c * eps.powf(n) / n;
        }
    }
    let ledger = DivergenceLedger {
        integral,
        log_term: a0 * eps.ln(),
        euler_term: EULER_GAMMA * a0,
        regular_terms: regular,
        pole_terms,
    };
    let z = ledger.integral + ledger.euler_term + ledger.log_term + ledger.regular_terms + ledger.pole_terms.values().sum::<f64>();
    (z, ledger)
}

/// `ζ′(0)` from the split identity at cut `ε`.
pub fn zeta_prime_zero(source: &ThetaSource<'_>, fit: &AsymptoticFit, eps: f64) -> Result<ZetaResult> {
    source.check()?;
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(invalid(format!("ε must be positive, got {eps}")));
    }
    let integral = source.integral(eps, f64::INFINITY)?;
    let (z, ledger) = assemble(fit, eps, integral);
    let extra = source.integral(eps / 2.0, eps)?;
    let (z_half, _) = assemble(fit, eps / 2.0, integral + extra);
    Ok(ZetaResult {
        zeta_prime_0: z,
        det_reg: (-z).exp(),
        eps,
        fit: fit.clone(),
        ledger,
        halving_change: (z_half - z).abs(),
    })
}

/// Fit on `window` with 64 samples, then [`zeta_prime_zero`].
pub fn zeta_from_source(source: &ThetaSource<'_>, exponents: &[Rational32], window: (f64, f64), eps: f64) -> Result<ZetaResult> {
    source.check()?;
    let fit = fit_asymptotics(&|t| source.theta(t), exponents, window, 64)?;
    zeta_prime_zero(source, &fit, eps)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ints(v: &[i32]) -> Vec<Rational32> {
        v.iter().map(|&n| rational(n, 1)).collect()
    }

    #[test]
    fn fit_inverse_t() {
        let fit = fit_asymptotics(&|t| 1.0 / t, &ints(&[-1, 0]), (0.01, 0.1), 32).unwrap();
        assert!((fit.coefficient(rational(-1, 1)) - 1.0).abs() < 1e-10);
        assert!(fit.a0().abs() < 1e-10);
    }

    #[test]
    fn fit_bernoulli() {
        let fit = fit_asymptotics(&|t: f64| 1.0 / t.exp_m1(), &ints(&[-1, 0, 1]), (0.01, 0.1), 64).unwrap();
        assert!((fit.coefficients[0] - 1.0).abs() < 1e-4);
        assert!((fit.coefficients[1] + 0.5).abs() < 1e-4);
        assert!((fit.coefficients[2] - 1.0 / 12.0).abs() < 1e-4);
    }

    #[test]
    fn fit_constant_and_bad_inputs() {
        let fit = fit_asymptotics(&|_| 5.0, &ints(&[-1, 0, 1]), (0.01, 0.1), 16).unwrap();
        assert!((fit.a0() - 5.0).abs() < 1e-10);
        assert!(fit.coefficients[0].abs() < 1e-10 && fit.coefficients[2].abs() < 1e-8);
        assert!(fit_asymptotics(&|_| 5.0, &ints(&[-1, 1]), (0.01, 0.1), 16).is_err());
        assert!(fit_asymptotics(&|_| 5.0, &ints(&[0, 1]), (0.1, 0.01), 16).is_err());
        let crowded: Vec<Rational32> = (-3..=12).map(|n| rational(n, 1)).collect();
        assert!(matches!(
            fit_asymptotics(&|t: f64| t.exp(), &crowded, (0.01, 0.011), 40),
            Err(Error::IllConditioned { .. })
        ));
    }

    #[test]
    fn finite_part_examples() {
        let o = FinitePartOptions::default();
        assert!((finite_part(&|_| 7.0, &[], o).unwrap() - 7.0).abs() < 1e-10);
        let f = |e: f64| 3.0 / e + 2.0 * e.ln() + 5.0 + e;
        assert!((finite_part(&f, &ints(&[-1]), o).unwrap() - 5.0).abs() < 1e-8);
        let g = |e: f64| 1.0 / (e * e) - std::f64::consts::PI;
        assert!((finite_part(&g, &ints(&[-2]), o).unwrap() + std::f64::consts::PI).abs() < 1e-8);
        let h = |e: f64| 1.0 / e.sqrt();
        assert!(matches!(finite_part(&h, &[], o), Err(Error::BasisMismatch { .. })));
    }

    #[test]
    fn single_eigenvalue() {
        let spec = [2.5];
        let r = zeta_from_source(&ThetaSource::Spectrum(&spec), &ints(&[0, 1, 2, 3]), (1e-4, 1e-3), 1e-4).unwrap();
        assert!((r.zeta_prime_0 + 2.5f64.ln()).abs() < 1e-10);
        assert!((r.det_reg - 2.5).abs() < 1e-9);
    }

    #[test]
    fn finite_spectrum_product() {
        let spec = [1.0, 2.0, 3.0];
        let r = zeta_from_source(&ThetaSource::Spectrum(&spec), &ints(&[0, 1, 2, 3]), (1e-4, 1e-3), 1e-4).unwrap();
        assert!((r.zeta_prime_0 + 6f64.ln()).abs() < 1e-8);
        assert!((r.det_reg - 6.0).abs() < 6e-8);
        assert!(r.halving_change < 1e-8);
    }

    #[test]
    fn function_source_matches_spectrum() {
        let spec = [1.0, 2.0, 3.0];
        let theta = |t: f64| spec.iter().map(|l| (-t * l).exp()).sum::<f64>();
        let src = ThetaSource::Function { theta: &theta, lambda_min: 1.0 };
        let r = zeta_from_source(&src, &ints(&[0, 1, 2, 3]), (1e-4, 1e-3), 1e-4).unwrap();
        assert!((r.zeta_prime_0 + 6f64.ln()).abs() < 1e-8, "{}", r.zeta_prime_0);
    }

    #[test]
    fn rejects_zero_modes() {
        let spec = [0.0, 1.0];
        assert!(matches!(
            zeta_from_source(&ThetaSource::Spectrum(&spec), &ints(&[0, 1]), (0.01, 0.1), 0.01),
            Err(Error::NonPositiveSpectrum(_))
        ));
    }

    #[test]
    fn exponent_parsing() {
        let e = parse_exponents("-1, -1/2,0,1/2").unwrap();
        assert_eq!(e, vec![rational(-1, 1), rational(-1, 2), rational(0, 1), rational(1, 2)]);
        assert!(parse_exponents("x").is_err());
    }
}
