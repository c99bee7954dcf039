//! Formal tensor products of distributions over the ring of smooth functions.
//!
//! A level-`n` [`ProDistribution`] is a finite sum of words `η₁ ⊗ … ⊗ ηₙ`,
//! each factor an [`Atom`] (circle delta or named smooth density) carrying a
//! monomial of named smooth multipliers. Normal form moves every multiplier
//! to the first factor, folds constants into the coefficient, merges equal
//! words and drops zero terms.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::laurent::LaurentCocycle;
use crate::quadrature::GaussLegendre;
use crate::surface::{smoothstep_derivative, Model};

#[derive(Debug, Clone)]
pub enum Atom {
    /// Arc-length measure on `|z| = radius`, divided by `2π` when
    /// `normalized`.
    CircleDelta { radius: f64, normalized: bool },
    /// Area measure weighted by a named field.
    SmoothDensity { field: String },
}

impl Atom {
    fn rank(&self) -> u8 {
        match self {
            Atom::CircleDelta { .. } => 0,
            Atom::SmoothDensity { .. } => 1,
        }
    }
}

impl PartialEq for Atom {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Atom {}

impl PartialOrd for Atom {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Atom {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Atom::CircleDelta { radius: a, normalized: x }, Atom::CircleDelta { radius: b, normalized: y }) => {
                a.total_cmp(b).then(x.cmp(y))
            }
            (Atom::SmoothDensity { field: a }, Atom::SmoothDensity { field: b }) => a.cmp(b),
            _ => self.rank().cmp(&other.rank()),
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Atom::CircleDelta { radius, normalized } => {
                write!(f, "delta({radius:?})")?;
                if *normalized {
                    f.write_str("/2pi")?;
                }
                Ok(())
            }
            Atom::SmoothDensity { field } => write!(f, "density({field})"),
        }
    }
}

/// An atom together with its smooth multiplier, a sorted list of field names
/// (empty means the constant 1).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Factor {
    pub multiplier: Vec<String>,
    pub atom: Atom,
}

impl Factor {
    pub fn new(atom: Atom) -> Self {
        Self { multiplier: Vec::new(), atom }
    }

    pub fn times(mut self, field: &str) -> Self {
        self.multiplier.push(field.to_string());
        self.multiplier.sort();
        self
    }
}

pub type Word = Vec<Factor>;

#[derive(Debug, Clone, PartialEq)]
pub struct ProDistribution {
    level: usize,
    terms: Vec<(Word, Complex64)>,
}

fn valid_field(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl ProDistribution {
    pub fn zero(level: usize) -> Self {
        Self { level, terms: Vec::new() }
    }

    /// Level-one distribution `coeff · factor`.
    pub fn single(coeff: Complex64, factor: Factor) -> Result<Self> {
        Self::from_terms(1, vec![(vec![factor], coeff)])
    }

    /// Builds and normalises a sum of words, all of length `level`.
    pub fn from_terms(level: usize, terms: Vec<(Word, Complex64)>) -> Result<Self> {
        if level == 0 {
            return Err(invalid("level must be at least 1"));
        }
        for (w, c) in &terms {
            if w.len() != level {
                return Err(invalid(format!("word of length {} in a level-{level} sum", w.len())));
            }
            if !c.re.is_finite() || !c.im.is_finite() {
                return Err(invalid("non-finite coefficient"));
            }
            for f in w {
                if let Some(bad) = f.multiplier.iter().find(|m| !valid_field(m)) {
                    return Err(invalid(format!("bad field name '{bad}'")));
                }
                match &f.atom {
                    Atom::CircleDelta { radius, .. } if !(*radius > 0.0 && radius.is_finite()) => {
                        return Err(invalid(format!("circle radius must be positive, got {radius}")));
                    }
                    Atom::SmoothDensity { field } if !valid_field(field) => {
                        return Err(invalid(format!("bad field name '{field}'")));
                    }
                    _ => {}
                }
            }
        }
        Ok(Self { level, terms }.normalize())
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn terms(&self) -> &[(Word, Complex64)] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Canonical representative; idempotent.
    pub fn normalize(&self) -> Self {
        let mut merged: BTreeMap<Word, Complex64> = BTreeMap::new();
        for (word, coeff) in &self.terms {
            let mut mult: Vec<String> = word.iter().flat_map(|f| f.multiplier.iter().cloned()).collect();
            mult.sort();
            let mut w: Word = word.iter().map(|f| Factor::new(f.atom.clone())).collect();
            if let Some(first) = w.first_mut() {
                first.multiplier = mult;
            }
            *merged.entry(w).or_insert(Complex64::new(0.0, 0.0)) += coeff;
        }
        let terms = merged.into_iter().filter(|(_, c)| *c != Complex64::new(0.0, 0.0)).collect();
        Self { level: self.level, terms }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.level != other.level {
            return Err(invalid(format!("cannot add levels {} and {}", self.level, other.level)));
        }
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Ok(Self { level: self.level, terms }.normalize())
    }

    pub fn scale(&self, c: Complex64) -> Self {
        Self { level: self.level, terms: self.terms.iter().map(|(w, k)| (w.clone(), k * c)).collect() }.normalize()
    }

    /// Multiplies every word by the smooth function `field`.
    pub fn multiply_field(&self, field: &str) -> Result<Self> {
        if !valid_field(field) {
            return Err(invalid(format!("bad field name '{field}'")));
        }
        let terms = self
            .terms
            .iter()
            .map(|(w, k)| {
                let mut w = w.clone();
                w[0] = w[0].clone().times(field);
                (w, *k)
            })
            .collect();
        Ok(Self { level: self.level, terms }.normalize())
    }

    /// Multiplies the factor at `position` by `field`; equal to
    /// [`Self::multiply_field`] after normalisation.
    pub fn multiply_factor(&self, position: usize, field: &str) -> Result<Self> {
        if position >= self.level {
            return Err(invalid("factor position out of range"));
        }
        let terms = self
            .terms
            .iter()
            .map(|(w, k)| {
                let mut w = w.clone();
                w[position] = w[position].clone().times(field);
                (w, *k)
            })
            .collect();
        Ok(Self { level: self.level, terms })
    }
}

/// `d₁ ⊗ d₂`: words concatenated, coefficients multiplied.
pub fn tensor_product(d1: &ProDistribution, d2: &ProDistribution) -> ProDistribution {
    let mut terms = Vec::with_capacity(d1.terms.len() * d2.terms.len());
    for (w1, c1) in &d1.terms {
        for (w2, c2) in &d2.terms {
            let mut w = w1.clone();
            w.extend(w2.iter().cloned());
            terms.push((w, c1 * c2));
        }
    }
    ProDistribution { level: d1.level + d2.level, terms }.normalize()
}

impl fmt::Display for ProDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "D'_{}: ", self.level)?;
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        for (i, (word, c)) in self.terms.iter().enumerate() {
            if i > 0 {
                f.write_str(" + ")?;
            }
            write!(f, "({:?},{:?}) *", c.re, c.im)?;
            for (j, factor) in word.iter().enumerate() {
                f.write_str(if j == 0 { " " } else { " ⊗ " })?;
                if !factor.multiplier.is_empty() {
                    write!(f, "{{{}}} ", factor.multiplier.join("*"))?;
                }
                write!(f, "{}", factor.atom)?;
            }
        }
        Ok(())
    }
}

fn parse_factor(text: &str) -> Result<Factor> {
    let text = text.trim();
    let (multiplier, rest) = if let Some(body) = text.strip_prefix('{') {
        let end = body.find('}').ok_or_else(|| Error::Parse(format!("unclosed multiplier in '{text}'")))?;
        let names: Vec<String> = body[..end].split('*').map(|s| s.trim().to_string()).collect();
        (names, body[end + 1..].trim())
    } else {
        (Vec::new(), text)
    };
    let atom = if let Some(arg) = rest.strip_prefix("delta(") {
        let end = arg.find(')').ok_or_else(|| Error::Parse(format!("bad atom '{rest}'")))?;
        let radius: f64 = arg[..end].parse().map_err(|_| Error::Parse(format!("bad radius in '{rest}'")))?;
        let normalized = match &arg[end + 1..] {
            "" => false,
            "/2pi" => true,
            other => return Err(Error::Parse(format!("unexpected '{other}' after delta"))),
        };
        Atom::CircleDelta { radius, normalized }
    } else if let Some(arg) = rest.strip_prefix("density(").and_then(|a| a.strip_suffix(')')) {
        Atom::SmoothDensity { field: arg.to_string() }
    } else {
        return Err(Error::Parse(format!("unknown atom '{rest}'")));
    };
    let mut f = Factor { multiplier, atom };
    f.multiplier.sort();
    Ok(f)
}

fn parse_coefficient(text: &str) -> Result<Complex64> {
    let body = text
        .trim()
        .strip_prefix('(')
        .and_then(|t| t.strip_suffix(')'))
        .ok_or_else(|| Error::Parse(format!("coefficient '{text}' must look like (re,im)")))?;
    let (re, im) = body.split_once(',').ok_or_else(|| Error::Parse(format!("bad coefficient '{text}'")))?;
    let p = |s: &str| s.trim().parse::<f64>().map_err(|_| Error::Parse(format!("bad number '{s}'")));
    Ok(Complex64::new(p(re)?, p(im)?))
}

impl FromStr for ProDistribution {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let rest = text.trim().strip_prefix("D'_").ok_or_else(|| Error::Parse("expected D'_n: prefix".into()))?;
        let (level, body) = rest.split_once(':').ok_or_else(|| Error::Parse("missing ':' after level".into()))?;
        let level: usize = level.trim().parse().map_err(|_| Error::Parse(format!("bad level '{level}'")))?;
        let body = body.trim();
        if body == "0" {
            if level == 0 {
                return Err(Error::Parse("level must be at least 1".into()));
            }
            return Ok(Self::zero(level));
        }
        let mut terms = Vec::new();
        for term in body.split(" + ") {
            let (coeff, word) = term.split_once(" * ").ok_or_else(|| Error::Parse(format!("term '{term}' lacks ' * '")))?;
            let factors = word.split(" ⊗ ").map(parse_factor).collect::<Result<Vec<_>>>()?;
            terms.push((factors, parse_coefficient(coeff)?));
        }
        Self::from_terms(level, terms)
    }
}

/// Named smooth fields used by multipliers and densities.
pub type FieldTable<'a> = HashMap<String, &'a dyn Fn(Complex64) -> Complex64>;

/// Quadrature used by [`evaluate`].
#[derive(Debug, Clone, Copy)]
pub struct EvalOptions {
    /// Domain of smooth densities.
    pub model: Model,
    pub circle_samples: usize,
    pub radial_nodes: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { model: Model::Disc, circle_samples: 512, radial_nodes: 48 }
    }
}

fn pair_atom(atom: &Atom, phi: &dyn Fn(Complex64) -> Complex64, fields: &FieldTable<'_>, opts: &EvalOptions) -> Result<Complex64> {
    match atom {
        Atom::CircleDelta { radius, normalized } => {
            let n = opts.circle_samples;
            let sum: Complex64 = (0..n).map(|k| phi(Complex64::from_polar(*radius, 2.0 * PI * k as f64 / n as f64))).sum();
            let arc = sum * (2.0 * PI * radius / n as f64);
            Ok(if *normalized { arc / (2.0 * PI) } else { arc })
        }
        Atom::SmoothDensity { field } => {
            let h = fields.get(field).ok_or_else(|| invalid(format!("unknown field '{field}'")))?;
            Ok(area_integral(&|z| h(z) * phi(z), opts))
        }
    }
}

fn area_integral(g: &dyn Fn(Complex64) -> Complex64, opts: &EvalOptions) -> Complex64 {
    match opts.model {
        Model::Disc => {
            let gl = GaussLegendre::on(opts.radial_nodes, 0.0, 1.0);
            let na = opts.circle_samples;
            let mut acc = Complex64::new(0.0, 0.0);
            for (r, w) in gl.nodes.iter().zip(&gl.weights) {
                let ring: Complex64 = (0..na).map(|k| g(Complex64::from_polar(*r, 2.0 * PI * k as f64 / na as f64))).sum();
                acc += ring * (w * r * 2.0 * PI / na as f64);
            }
            acc
        }
        Model::Torus => {
            let n = opts.circle_samples;
            let h = 1.0 / n as f64;
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..n {
                for j in 0..n {
                    acc += g(Complex64::new(i as f64 * h - 0.5, j as f64 * h - 0.5));
                }
            }
            acc * (h * h)
        }
    }
}

/// Pairs the normal form of `d` with one test function per factor; the
/// multiplier of a word acts on its first test function.
pub fn evaluate(
    d: &ProDistribution,
    tests: &[&dyn Fn(Complex64) -> Complex64],
    fields: &FieldTable<'_>,
    opts: &EvalOptions,
) -> Result<Complex64> {
    if tests.len() != d.level {
        return Err(invalid(format!("level {} needs {} test functions, got {}", d.level, d.level, tests.len())));
    }
    let normal = d.normalize();
    let mut total = Complex64::new(0.0, 0.0);
    for (word, coeff) in &normal.terms {
        let mut value = *coeff;
        for (i, factor) in word.iter().enumerate() {
            let mult: Vec<&dyn Fn(Complex64) -> Complex64> = factor
                .multiplier
                .iter()
                .map(|m| fields.get(m).copied().ok_or_else(|| invalid(format!("unknown field '{m}'"))))
                .collect::<Result<_>>()?;
            let test = tests[i];
            let phi = |z: Complex64| mult.iter().fold(test(z), |acc, m| acc * m(z));
            value *= pair_atom(&factor.atom, &phi, fields, opts)?;
        }
        total += value;
    }
    Ok(total)
}

/// Which density stands for the singular part of the connection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Convention {
    /// `[f δ dz̄ − f* δ dz]/2π` on the unit circle.
    Normalized,
    /// The limit of `f ∂̄ρ dz̄ − f* ∂ρ dz` as `ρ` tends to the indicator of the
    /// disc: densities `−½e^{iθ} f` and `+½e^{−iθ} f*` on the circle.
    Characteristic,
}

/// `dz̄` and `dz` components of the pairing, one entry per bundle component.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectionPairing {
    pub dzbar: DVector<Complex64>,
    pub dz: DVector<Complex64>,
}

impl ConnectionPairing {
    /// Columns `[dz̄, dz]`.
    pub fn as_matrix(&self) -> DMatrix<Complex64> {
        DMatrix::from_columns(&[self.dzbar.clone(), self.dz.clone()])
    }
}

/// Pairs the singular part of the connection, applied to `section`, with
/// `test` on the unit circle.
pub fn distributional_connection_apply(
    f: &LaurentCocycle,
    section: &dyn Fn(Complex64) -> DVector<Complex64>,
    test: &dyn Fn(Complex64) -> Complex64,
    convention: Convention,
    samples: usize,
) -> Result<ConnectionPairing> {
    if samples == 0 {
        return Err(invalid("samples must be positive"));
    }
    let n = f.rank();
    let mut dzbar = DVector::zeros(n);
    let mut dz = DVector::zeros(n);
    let step = 2.0 * PI / samples as f64;
    for k in 0..samples {
        let e = Complex64::from_polar(1.0, step * k as f64);
        let fz = f.eval(e)?;
        let s = section(e);
        if s.len() != n {
            return Err(Error::RankMismatch { left: n, right: s.len() });
        }
        let phi = test(e);
        let (wa, wb) = match convention {
            Convention::Normalized => (Complex64::new(1.0 / (2.0 * PI), 0.0), Complex64::new(-1.0 / (2.0 * PI), 0.0)),
            Convention::Characteristic => (-e * 0.5, e.conj() * 0.5),
        };
        dzbar += &fz * &s * (phi * wa * step);
        dz += fz.adjoint() * &s * (phi * wb * step);
    }
    Ok(ConnectionPairing { dzbar, dz })
}

/// Smooth counterpart: `∫ f s φ ∂̄ρ dA` and `−∫ f* s φ ∂ρ dA` for the radial
/// cutoff that falls from 1 at `r₁` to 0 at `r₂`.
pub fn smooth_connection_apply(
    f: &LaurentCocycle,
    section: &dyn Fn(Complex64) -> DVector<Complex64>,
    test: &dyn Fn(Complex64) -> Complex64,
    r1: f64,
    r2: f64,
    radial_nodes: usize,
    samples: usize,
) -> Result<ConnectionPairing> {
    if !(0.0 < r1 && r1 < r2) {
        return Err(invalid("need 0 < r1 < r2"));
    }
    let n = f.rank();
    let gl = GaussLegendre::on(radial_nodes, r1, r2);
    let mut dzbar = DVector::zeros(n);
    let mut dz = DVector::zeros(n);
    let step = 2.0 * PI / samples as f64;
    for (r, w) in gl.nodes.iter().zip(&gl.weights) {
        let drho = -smoothstep_derivative((r - r1) / (r2 - r1)) / (r2 - r1);
        for k in 0..samples {
            let e = Complex64::from_polar(1.0, step * k as f64);
            let z = e * *r;
            let fz = f.eval(z)?;
            let s = section(z);
            let phi = test(z);
            let area = w * r * step;
            // ∂̄ρ = ½ e^{iθ} ρ′, ∂ρ = ½ e^{−iθ} ρ′
            dzbar += &fz * &s * (phi * e * (0.5 * drho * area));
            dz -= fz.adjoint() * &s * (phi * e.conj() * (0.5 * drho * area));
        }
    }
    Ok(ConnectionPairing { dzbar, dz })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn unit_delta() -> Factor {
        Factor::new(Atom::CircleDelta { radius: 1.0, normalized: true })
    }

    fn density(name: &str) -> Factor {
        Factor::new(Atom::SmoothDensity { field: name.into() })
    }

    #[test]
    fn delta_square_is_one_word() {
        let d = ProDistribution::single(c(1.0, 0.0), unit_delta()).unwrap();
        let dd = tensor_product(&d, &d);
        assert_eq!(dd.level(), 2);
        assert_eq!(dd.terms().len(), 1);
        let z = ProDistribution::zero(3);
        let p = tensor_product(&d, &z);
        assert!(p.is_zero() && p.level() == 4);
    }

    #[test]
    fn module_relation() {
        let a = ProDistribution::single(c(2.0, 1.0), unit_delta().times("f")).unwrap();
        let b = ProDistribution::single(c(1.0, 0.0), density("h")).unwrap();
        let left = tensor_product(&a, &b);
        let a2 = ProDistribution::single(c(2.0, 1.0), unit_delta()).unwrap();
        let b2 = ProDistribution::single(c(1.0, 0.0), density("h").times("f")).unwrap();
        assert_eq!(left, tensor_product(&a2, &b2));
        let plain = tensor_product(&a2, &b);
        let diff = plain.multiply_field("f").unwrap().add(&left.scale(c(-1.0, 0.0))).unwrap();
        assert!(diff.is_zero());
    }

    #[test]
    fn cancellation_and_idempotence() {
        let d = ProDistribution::single(c(3.0, -2.0), density("h").times("g")).unwrap();
        assert!(d.add(&d.scale(c(-1.0, 0.0))).unwrap().is_zero());
        assert_eq!(d.normalize(), d);
    }

    #[test]
    fn text_round_trip() {
        let a = ProDistribution::single(c(0.5, -1.0), unit_delta().times("f").times("g")).unwrap();
        let b = ProDistribution::single(c(1.0, 0.0), Factor::new(Atom::CircleDelta { radius: 0.25, normalized: false })).unwrap();
        let d = tensor_product(&a, &b).add(&tensor_product(&b, &a)).unwrap();
        let text = d.to_string();
        assert_eq!(text.parse::<ProDistribution>().unwrap(), d);
        assert_eq!(ProDistribution::zero(2).to_string(), "D'_2: 0");
        assert_eq!("D'_2: 0".parse::<ProDistribution>().unwrap(), ProDistribution::zero(2));
        assert!("D'_1: (1,0) * blob(x)".parse::<ProDistribution>().is_err());
    }

    #[test]
    fn evaluation_examples() {
        let fields = FieldTable::new();
        let opts = EvalOptions::default();
        let d = ProDistribution::single(c(1.0, 0.0), unit_delta()).unwrap();
        let one = |_: Complex64| c(1.0, 0.0);
        let re = |z: Complex64| c(z.re, 0.0);
        assert!((evaluate(&d, &[&one], &fields, &opts).unwrap() - 1.0).norm() < 1e-12);
        assert!(evaluate(&d, &[&re], &fields, &opts).unwrap().norm() < 1e-12);
        let dd = tensor_product(&d, &d);
        assert!((evaluate(&dd, &[&one, &one], &fields, &opts).unwrap() - 1.0).norm() < 1e-12);
        assert!(evaluate(&dd, &[&one], &fields, &opts).is_err());
    }

    #[test]
    fn density_pairing_is_an_area_integral() {
        let h = |z: Complex64| c(z.norm_sqr(), 0.0);
        let mut fields = FieldTable::new();
        fields.insert("h".into(), &h);
        let d = ProDistribution::single(c(1.0, 0.0), density("h")).unwrap();
        let one = |_: Complex64| c(1.0, 0.0);
        let v = evaluate(&d, &[&one], &fields, &EvalOptions::default()).unwrap();
        assert!((v - PI / 2.0).norm() < 1e-12);
    }

    #[test]
    fn connection_examples() {
        let one_s = |_: Complex64| DVector::from_element(1, c(1.0, 0.0));
        let one = |_: Complex64| c(1.0, 0.0);
        let f = LaurentCocycle::scalar([(0, c(1.0, 0.0))]).unwrap();
        let p = distributional_connection_apply(&f, &one_s, &one, Convention::Normalized, 64).unwrap();
        assert!((p.dzbar[0] - 1.0).norm() < 1e-14 && (p.dz[0] + 1.0).norm() < 1e-14);
        let z = distributional_connection_apply(&LaurentCocycle::zero(1), &one_s, &one, Convention::Normalized, 16).unwrap();
        assert!(z.as_matrix().iter().all(|v| v.norm() == 0.0));
        let pole = LaurentCocycle::scalar([(-1, c(1.0, 0.0))]).unwrap();
        assert!(distributional_connection_apply(&pole, &one_s, &one, Convention::Normalized, 16).is_ok());
    }

    #[test]
    fn steep_bump_converges_to_characteristic_limit() {
        let f = LaurentCocycle::scalar([(-1, c(0.3, 0.2)), (1, c(1.0, 0.0))]).unwrap();
        let s = |z: Complex64| DVector::from_element(1, c(1.0, 0.0) + z * 0.5);
        let test = |z: Complex64| z.conj() + c(0.2, 0.0);
        let exact = distributional_connection_apply(&f, &s, &test, Convention::Characteristic, 256).unwrap();
        let errs: Vec<f64> = [0.2, 0.1, 0.05]
            .iter()
            .map(|&w| {
                let p = smooth_connection_apply(&f, &s, &test, 1.0 - w, 1.0, 32, 256).unwrap();
                (&p.as_matrix() - exact.as_matrix()).norm()
            })
            .collect();
        assert!(errs[1] < 0.6 * errs[0] && errs[2] < 0.6 * errs[1], "{errs:?}");
    }
}
