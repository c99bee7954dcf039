//! Truncated matrix-valued Laurent series.
//!
//! A [`LaurentCocycle`] stores finitely many coefficients `f_k` of
//! `f(z) = Σ_k f_k z^k` on the punctured disc. Cocycles declared trace-free
//! take values in the Lie algebra of `SL_n`; series produced by
//! [`exp_cocycle`] and [`laurent_product`] carry no such constraint.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::quadrature::circle_points;

pub type CMatrix = DMatrix<Complex64>;

/// Largest |tr f_k| tolerated in a trace-free cocycle.
pub const TRACE_TOLERANCE: f64 = 1e-12;

/// Two-sided degree window `[min, max]`, both inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DegreeWindow {
    pub min: i32,
    pub max: i32,
}

impl DegreeWindow {
    pub fn new(min: i32, max: i32) -> Result<Self> {
        if min > max {
            return Err(invalid(format!("empty degree window [{min}, {max}]")));
        }
        Ok(Self { min, max })
    }

    pub fn contains(&self, k: i32) -> bool {
        (self.min..=self.max).contains(&k)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaurentCocycle {
    rank: usize,
    trace_free: bool,
    terms: BTreeMap<i32, CMatrix>,
}

impl LaurentCocycle {
    /// Builds a series from `(degree, coefficient)` pairs. Duplicate degrees
    /// are rejected; exactly-zero coefficients are dropped.
    pub fn new(
        rank: usize,
        trace_free: bool,
        terms: impl IntoIterator<Item = (i32, CMatrix)>,
    ) -> Result<Self> {
        if rank == 0 {
            return Err(invalid("rank must be positive"));
        }
        let mut map = BTreeMap::new();
        for (k, m) in terms {
            if m.nrows() != rank || m.ncols() != rank {
                return Err(invalid(format!(
                    "coefficient at degree {k} is {}x{}, expected {rank}x{rank}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            if m.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
                return Err(invalid(format!("non-finite coefficient at degree {k}")));
            }
            if trace_free {
                let tr = m.trace().norm();
                if tr > TRACE_TOLERANCE {
                    return Err(Error::NotTraceFree { degree: k, trace: tr });
                }
            }
            if map.contains_key(&k) {
                return Err(invalid(format!("duplicate degree {k}")));
            }
            if m.iter().any(|c| *c != Complex64::new(0.0, 0.0)) {
                map.insert(k, m);
            }
        }
        Ok(Self { rank, trace_free, terms: map })
    }

    pub fn zero(rank: usize) -> Self {
        Self { rank, trace_free: true, terms: BTreeMap::new() }
    }

    pub fn identity(rank: usize) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(0, CMatrix::identity(rank, rank));
        Self { rank, trace_free: false, terms }
    }

    /// Single term `coeff · z^degree`; trace-free iff `coeff` is.
    pub fn monomial(coeff: CMatrix, degree: i32) -> Result<Self> {
        let rank = coeff.nrows();
        let trace_free = coeff.trace().norm() <= TRACE_TOLERANCE;
        Self::new(rank, trace_free, [(degree, coeff)])
    }

    /// Rank-one scalar series from `(degree, value)` pairs.
    pub fn scalar(terms: impl IntoIterator<Item = (i32, Complex64)>) -> Result<Self> {
        Self::new(1, false, terms.into_iter().map(|(k, c)| (k, CMatrix::from_element(1, 1, c))))
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn is_trace_free(&self) -> bool {
        self.trace_free
    }

    pub fn terms(&self) -> &BTreeMap<i32, CMatrix> {
        &self.terms
    }

    pub fn coefficient(&self, degree: i32) -> Option<&CMatrix> {
        self.terms.get(&degree)
    }

    pub fn min_degree(&self) -> Option<i32> {
        self.terms.keys().next().copied()
    }

    pub fn max_degree(&self) -> Option<i32> {
        self.terms.keys().next_back().copied()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Σ_k ‖f_k‖_F, an upper bound for ‖f(z)‖ on |z| = 1.
    pub fn coefficient_norm_sum(&self) -> f64 {
        self.terms.values().map(|m| m.norm()).sum()
    }

    pub fn eval(&self, z: Complex64) -> Result<CMatrix> {
        if z == Complex64::new(0.0, 0.0) && self.min_degree().is_some_and(|k| k < 0) {
            return Err(Error::PoleOnContour { location: "z = 0".into() });
        }
        let mut out = CMatrix::zeros(self.rank, self.rank);
        for (&k, m) in &self.terms {
            out += m * z.powi(k);
        }
        Ok(out)
    }

    /// Linear combination `a·self + b·other`.
    pub fn combine(&self, a: Complex64, other: &Self, b: Complex64) -> Result<Self> {
        if self.rank != other.rank {
            return Err(Error::RankMismatch { left: self.rank, right: other.rank });
        }
        let mut map: BTreeMap<i32, CMatrix> = BTreeMap::new();
        for (&k, m) in &self.terms {
            map.insert(k, m * a);
        }
        for (&k, m) in &other.terms {
            let e = map.entry(k).or_insert_with(|| CMatrix::zeros(self.rank, self.rank));
            *e += m * b;
        }
        let trace_free = self.trace_free && other.trace_free;
        Self::new(self.rank, trace_free, map)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: CocycleFile =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        file.try_into()
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&CocycleFile::from(self)).expect("cocycle serializes")
    }
}

/// On-disk cocycle layout: degrees strictly increasing, real and imaginary
/// parts as row-major nested arrays.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CocycleFile {
    pub rank: usize,
    pub trace_free: bool,
    pub terms: Vec<TermFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermFile {
    pub degree: i32,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl TryFrom<CocycleFile> for LaurentCocycle {
    type Error = Error;

    fn try_from(file: CocycleFile) -> Result<Self> {
        let n = file.rank;
        let mut prev: Option<i32> = None;
        let mut terms = Vec::with_capacity(file.terms.len());
        for t in file.terms {
            if prev.is_some_and(|p| t.degree <= p) {
                return Err(Error::Parse(format!("degree {} not strictly increasing", t.degree)));
            }
            prev = Some(t.degree);
            let shape_ok = t.re.len() == n
                && t.im.len() == n
                && t.re.iter().chain(&t.im).all(|row| row.len() == n);
            if !shape_ok {
                return Err(Error::Parse(format!("degree {}: expected {n}x{n} re/im", t.degree)));
            }
            let m = CMatrix::from_fn(n, n, |i, j| Complex64::new(t.re[i][j], t.im[i][j]));
            terms.push((t.degree, m));
        }
        LaurentCocycle::new(n, file.trace_free, terms)
    }
}

impl From<&LaurentCocycle> for CocycleFile {
    fn from(f: &LaurentCocycle) -> Self {
        let n = f.rank;
        let terms = f
            .terms
            .iter()
            .map(|(&degree, m)| TermFile {
                degree,
                re: (0..n).map(|i| (0..n).map(|j| m[(i, j)].re).collect()).collect(),
                im: (0..n).map(|i| (0..n).map(|j| m[(i, j)].im).collect()).collect(),
            })
            .collect();
        CocycleFile { rank: n, trace_free: f.trace_free, terms }
    }
}

/// Values of `f` at `radius·e^{2πij/samples}`.
pub fn eval_on_circle(f: &LaurentCocycle, radius: f64, samples: usize) -> Result<Vec<CMatrix>> {
    if samples == 0 {
        return Err(invalid("samples must be positive"));
    }
    if !(radius >= 0.0) || !radius.is_finite() {
        return Err(invalid(format!("radius must be non-negative, got {radius}")));
    }
    if radius == 0.0 && f.min_degree().is_some_and(|k| k < 0) {
        return Err(Error::PoleOnContour { location: "radius 0".into() });
    }
    circle_points(radius, samples).into_iter().map(|z| f.eval(z)).collect()
}

fn full_product(f: &BTreeMap<i32, CMatrix>, g: &BTreeMap<i32, CMatrix>, n: usize) -> BTreeMap<i32, CMatrix> {
    let mut out: BTreeMap<i32, CMatrix> = BTreeMap::new();
    for (&i, a) in f {
        for (&j, b) in g {
            let e = out.entry(i + j).or_insert_with(|| CMatrix::zeros(n, n));
            *e += a * b;
        }
    }
    out
}

/// Cauchy product `f·g`, keeping only degrees inside `window`.
pub fn laurent_product(
    f: &LaurentCocycle,
    g: &LaurentCocycle,
    window: DegreeWindow,
) -> Result<LaurentCocycle> {
    if f.rank != g.rank {
        return Err(Error::RankMismatch { left: f.rank, right: g.rank });
    }
    let prod = full_product(&f.terms, &g.terms, f.rank);
    LaurentCocycle::new(f.rank, false, prod.into_iter().filter(|(k, _)| window.contains(*k)))
}

/// Formal exponential `Σ_m f^m / m!` restricted to `window`.
///
/// Powers are formed without truncation, so every kept degree is exact up to
/// the series cutoff. Mass that lands outside the window is an error rather
/// than being dropped.
pub fn exp_cocycle(f: &LaurentCocycle, window: DegreeWindow) -> Result<LaurentCocycle> {
    const MAX_TERMS: usize = 400;
    let n = f.rank;
    let bound = f.coefficient_norm_sum();
    let mut sum: BTreeMap<i32, CMatrix> = BTreeMap::new();
    sum.insert(0, CMatrix::identity(n, n));
    let mut power: BTreeMap<i32, CMatrix> = sum.clone();
    let mut factor = 1.0;
    let mut converged = f.is_zero();
    let mut last = 0.0;
    for m in 1..=MAX_TERMS {
        if converged {
            break;
        }
        power = full_product(&power, &f.terms, n);
        factor /= m as f64;
        let mut term_norm = 0.0;
        for (&k, p) in &power {
            let add = p * Complex64::new(factor, 0.0);
            term_norm += add.norm();
            *sum.entry(k).or_insert_with(|| CMatrix::zeros(n, n)) += add;
        }
        // the remainder after term m is bounded by b^{m+1}/(m+1)! · e^b
        let mut tail = factor * bound.powi(m as i32 + 1) / (m as f64 + 1.0) * bound.exp();
        if !tail.is_finite() {
            tail = f64::INFINITY;
        }
        last = term_norm;
        if tail < 1e-17 || term_norm == 0.0 {
            converged = true;
        }
    }
    if !converged {
        return Err(Error::NoConvergence { iterations: MAX_TERMS, residual: last });
    }
    let total: f64 = sum.values().map(|m| m.norm()).sum();
    let escaped: f64 = sum
        .iter()
        .filter(|(k, _)| !window.contains(**k))
        .map(|(_, m)| m.norm())
        .sum();
    if escaped > 1e-12 * total.max(1.0) {
        return Err(Error::WindowOverflow { min: window.min, max: window.max, escaped });
    }
    LaurentCocycle::new(n, false, sum.into_iter().filter(|(k, _)| window.contains(*k)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn inverse_z_on_unit_circle() {
        let f = LaurentCocycle::scalar([(-1, c(1.0, 0.0))]).unwrap();
        let vals = eval_on_circle(&f, 1.0, 4).unwrap();
        let want = [c(1.0, 0.0), c(0.0, -1.0), c(-1.0, 0.0), c(0.0, 1.0)];
        for (v, w) in vals.iter().zip(want) {
            assert!(close(v[(0, 0)], w, 1e-15));
        }
    }

    #[test]
    fn zero_series_evaluates_to_zero() {
        let vals = eval_on_circle(&LaurentCocycle::zero(3), 0.7, 5).unwrap();
        assert_eq!(vals.len(), 5);
        assert!(vals.iter().all(|m| m.norm() == 0.0 && m.nrows() == 3));
    }

    #[test]
    fn polynomial_at_half_radius() {
        let f = LaurentCocycle::scalar([(1, c(1.0, 0.0)), (2, c(1.0, 0.0))]).unwrap();
        let vals = eval_on_circle(&f, 0.5, 3).unwrap();
        assert!(close(vals[0][(0, 0)], c(0.75, 0.0), 1e-15));
    }

    #[test]
    fn pole_at_zero_radius_rejected() {
        let f = LaurentCocycle::scalar([(-2, c(1.0, 0.0))]).unwrap();
        assert!(matches!(eval_on_circle(&f, 0.0, 4), Err(Error::PoleOnContour { .. })));
        let g = LaurentCocycle::scalar([(0, c(2.0, 0.0))]).unwrap();
        assert!(eval_on_circle(&g, 0.0, 1).is_ok());
    }

    #[test]
    fn trace_free_flag_is_enforced() {
        let m = CMatrix::identity(2, 2);
        assert!(matches!(LaurentCocycle::new(2, true, [(0, m.clone())]), Err(Error::NotTraceFree { .. })));
        assert!(LaurentCocycle::new(2, false, [(0, m)]).is_ok());
    }

    #[test]
    fn duplicate_degree_rejected() {
        let m = CMatrix::identity(1, 1);
        assert!(LaurentCocycle::new(1, false, [(1, m.clone()), (1, m)]).is_err());
    }

    #[test]
    fn exp_of_zero_is_identity() {
        let e = exp_cocycle(&LaurentCocycle::zero(2), DegreeWindow::new(-2, 2).unwrap()).unwrap();
        assert_eq!(e, LaurentCocycle::identity(2));
    }

    #[test]
    fn exp_of_constant_scalar() {
        let f = LaurentCocycle::scalar([(0, c(0.3, -0.7))]).unwrap();
        let e = exp_cocycle(&f, DegreeWindow::new(0, 0).unwrap()).unwrap();
        assert_eq!(e.terms().len(), 1);
        assert!(close(e.coefficient(0).unwrap()[(0, 0)], c(0.3, -0.7).exp(), 1e-14));
    }

    #[test]
    fn exp_of_nilpotent_pole_truncates_after_linear_term() {
        let mut a = CMatrix::zeros(2, 2);
        a[(0, 1)] = c(1.0, 0.0);
        let f = LaurentCocycle::new(2, true, [(-1, a.clone())]).unwrap();
        let e = exp_cocycle(&f, DegreeWindow::new(-3, 0).unwrap()).unwrap();
        assert_eq!(e.terms().len(), 2);
        assert_eq!(e.coefficient(0).unwrap(), &CMatrix::identity(2, 2));
        assert_eq!(e.coefficient(-1).unwrap(), &a);
    }

    #[test]
    fn exp_overflow_is_reported() {
        let f = LaurentCocycle::scalar([(1, c(1.0, 0.0))]).unwrap();
        let err = exp_cocycle(&f, DegreeWindow::new(0, 3).unwrap()).unwrap_err();
        assert!(matches!(err, Error::WindowOverflow { .. }));
    }

    #[test]
    fn inverse_times_z_is_one() {
        let a = LaurentCocycle::scalar([(-1, c(1.0, 0.0))]).unwrap();
        let b = LaurentCocycle::scalar([(1, c(1.0, 0.0))]).unwrap();
        let p = laurent_product(&a, &b, DegreeWindow::new(-5, 5).unwrap()).unwrap();
        assert_eq!(p, LaurentCocycle::scalar([(0, c(1.0, 0.0))]).unwrap());
    }

    #[test]
    fn product_with_identity_and_rank_mismatch() {
        let f = LaurentCocycle::new(
            2,
            true,
            [(-1, CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(2.0, 1.0), c(0.0, 1.0), c(-1.0, 0.0)]))],
        )
        .unwrap();
        let p = laurent_product(&f, &LaurentCocycle::identity(2), DegreeWindow::new(-3, 3).unwrap()).unwrap();
        assert_eq!(p.terms(), f.terms());
        assert!(matches!(
            laurent_product(&f, &LaurentCocycle::identity(3), DegreeWindow::new(-3, 3).unwrap()),
            Err(Error::RankMismatch { .. })
        ));
    }

    #[test]
    fn json_round_trip_and_ordering() {
        let f = LaurentCocycle::new(
            2,
            true,
            [
                (-1, CMatrix::from_row_slice(2, 2, &[c(1.0, 0.5), c(2.0, 1.0), c(0.0, 1.0), c(-1.0, -0.5)])),
                (2, CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.25, 0.0), c(3.0, 0.0), c(0.0, 0.0)])),
            ],
        )
        .unwrap();
        let back = LaurentCocycle::from_json_str(&f.to_json_string()).unwrap();
        assert_eq!(back, f);
        let bad = r#"{"rank":1,"trace_free":false,"terms":[
            {"degree":1,"re":[[1]],"im":[[0]]},{"degree":0,"re":[[1]],"im":[[0]]}]}"#;
        assert!(LaurentCocycle::from_json_str(bad).is_err());
        let unknown = r#"{"rank":1,"trace_free":false,"terms":[],"extra":1}"#;
        assert!(LaurentCocycle::from_json_str(unknown).is_err());
    }
}
