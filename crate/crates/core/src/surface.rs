//! Grid models of the surface: the closed unit disc with a Dirichlet
//! boundary, and the flat unit-square torus with its marked point at the
//! origin.
//!
//! Sections live on nodes, (0,1)- and (1,0)-form samples on cells. The disc
//! uses a polar grid: an origin node, `M` interior rings and one boundary
//! ring, with `K = resolution` nodes per ring. The origin is joined to the
//! first ring by triangles; all other cells are polar quadrilaterals whose
//! derivatives are box-scheme averages taken at the cell centre, which is
//! second order there.
//!
//! The box scheme annihilates the interior checkerboard `(−1)^{j+k}`, so its
//! `Dbar*Dbar` carries a spurious second branch of low eigenvalues. Spectral
//! work therefore uses a separate triangulation of the same nodes
//! ([`DiscretizedSurface::elements`]) with piecewise-linear `Dbar`, whose
//! `Dbar*Dbar` is the P1 stiffness matrix and has no such branch.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::laurent::{CMatrix, LaurentCocycle};

/// Smallest accepted number of nodes per axis.
pub const MIN_RESOLUTION: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Model {
    Disc,
    Torus,
}

impl FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "disc" => Ok(Model::Disc),
            "torus" => Ok(Model::Torus),
            other => Err(Error::Unsupported(format!("surface model '{other}'"))),
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Model::Disc => "disc",
            Model::Torus => "torus",
        })
    }
}

/// A sparse row: `(node index, coefficient)` pairs.
pub type StencilRow = Vec<(usize, Complex64)>;

#[derive(Debug, Clone)]
pub struct Cell {
    /// Centre in the local coordinate of the marked point.
    pub center: Complex64,
    pub weight: f64,
    pub corners: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct DiscretizedSurface {
    model: Model,
    resolution: usize,
    h: f64,
    nodes: Vec<Complex64>,
    node_weights: Vec<f64>,
    boundary: Vec<bool>,
    cells: Vec<Cell>,
    dbar: Vec<StencilRow>,
    d: Vec<StencilRow>,
    elements: Vec<Cell>,
    element_dbar: Vec<StencilRow>,
    rings: usize,
}

impl DiscretizedSurface {
    pub fn model(&self) -> Model {
        self.model
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    /// Characteristic grid spacing: `Δr` on the disc, `1/N` on the torus.
    pub fn h(&self) -> f64 {
        self.h
    }

    /// Node positions in the local coordinate around the marked point.
    pub fn nodes(&self) -> &[Complex64] {
        &self.nodes
    }

    pub fn node_weights(&self) -> &[f64] {
        &self.node_weights
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.boundary
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn dbar_rows(&self) -> &[StencilRow] {
        &self.dbar
    }

    pub fn d_rows(&self) -> &[StencilRow] {
        &self.d
    }

    /// Triangles of the piecewise-linear mesh on the same nodes.
    pub fn elements(&self) -> &[Cell] {
        &self.elements
    }

    /// `Dbar` of the hat functions, constant on each element.
    pub fn element_dbar_rows(&self) -> &[StencilRow] {
        &self.element_dbar
    }

    pub fn element_count(&self) -> usize {
        self.elements.len()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    /// Indices of the free (non-boundary) nodes, in order.
    pub fn interior(&self) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&i| !self.boundary[i]).collect()
    }

    /// Number of interior rings of the disc grid (0 for the torus).
    pub fn rings(&self) -> usize {
        self.rings
    }

    /// Radius of disc ring `j` (ring 0 is the origin).
    pub fn ring_radius(&self, j: usize) -> f64 {
        j as f64 * self.h
    }

    /// Node index of disc ring `j ≥ 1`, angle index `k`.
    pub fn ring_node(&self, j: usize, k: usize) -> usize {
        1 + (j - 1) * self.resolution + k % self.resolution
    }

    /// Node index of torus grid point `(i, j)`, wrapped.
    pub fn torus_node(&self, i: i64, j: i64) -> usize {
        let n = self.resolution as i64;
        (i.rem_euclid(n) + n * j.rem_euclid(n)) as usize
    }

    pub fn total_area(&self) -> f64 {
        self.node_weights.iter().sum()
    }

    /// Applies the given stencil to node values.
    pub fn apply_rows(rows: &[StencilRow], u: &[Complex64]) -> Vec<Complex64> {
        rows.iter().map(|row| row.iter().map(|&(j, c)| c * u[j]).sum()).collect()
    }

    pub fn apply_dbar(&self, u: &[Complex64]) -> Vec<Complex64> {
        Self::apply_rows(&self.dbar, u)
    }

    pub fn apply_d(&self, u: &[Complex64]) -> Vec<Complex64> {
        Self::apply_rows(&self.d, u)
    }

    /// Node values of `g`.
    pub fn sample(&self, g: impl Fn(Complex64) -> Complex64) -> Vec<Complex64> {
        self.nodes.iter().map(|&z| g(z)).collect()
    }

    /// Dense `cells × columns` matrix of `Dbar` restricted to the given node
    /// columns (pass [`Self::interior`] for the Dirichlet operator).
    pub fn dbar_matrix(&self, columns: &[usize]) -> DMatrix<Complex64> {
        self.rows_matrix(&self.dbar, columns)
    }

    /// As [`Self::dbar_matrix`] for the element `Dbar`.
    pub fn element_dbar_matrix(&self, columns: &[usize]) -> DMatrix<Complex64> {
        self.rows_matrix(&self.element_dbar, columns)
    }

    fn rows_matrix(&self, rows: &[StencilRow], columns: &[usize]) -> DMatrix<Complex64> {
        let mut pos = vec![usize::MAX; self.nodes.len()];
        for (c, &i) in columns.iter().enumerate() {
            pos[i] = c;
        }
        let mut m = DMatrix::zeros(rows.len(), columns.len());
        for (r, row) in rows.iter().enumerate() {
            for &(j, c) in row {
                if pos[j] != usize::MAX {
                    m[(r, pos[j])] += c;
                }
            }
        }
        m
    }

    /// Cell averages of node values.
    pub fn cell_average(&self, u: &[Complex64]) -> Vec<Complex64> {
        self.cells
            .iter()
            .map(|c| c.corners.iter().map(|&j| u[j]).sum::<Complex64>() / c.corners.len() as f64)
            .collect()
    }

    /// Area-weighted L² norm of cell samples.
    pub fn cell_norm(&self, v: &[Complex64]) -> f64 {
        self.cells.iter().zip(v).map(|(c, x)| c.weight * x.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Area-weighted inner product `Σ w ū v` of cell samples.
    pub fn cell_inner(&self, u: &[Complex64], v: &[Complex64]) -> Complex64 {
        self.cells.iter().zip(u.iter().zip(v)).map(|(c, (a, b))| a.conj() * b * c.weight).sum()
    }
}

/// Reduces a torus coordinate to the fundamental square `[-1/2, 1/2)²`.
pub fn torus_reduce(z: Complex64) -> Complex64 {
    let wrap = |x: f64| {
        let r = x - x.round();
        if r >= 0.5 {
            r - 1.0
        } else {
            r
        }
    };
    Complex64::new(wrap(z.re), wrap(z.im))
}

pub fn build_surface(model: Model, resolution: usize) -> Result<DiscretizedSurface> {
    if resolution < MIN_RESOLUTION {
        return Err(invalid(format!(
            "resolution {resolution} below the minimum of {MIN_RESOLUTION}"
        )));
    }
    Ok(match model {
        Model::Disc => build_disc(resolution),
        Model::Torus => build_torus(resolution),
    })
}

/// Interior ring count for `k` angular nodes.
pub fn disc_rings(k: usize) -> usize {
    ((k as f64 / (2.0 * PI)).floor() as usize).saturating_sub(1).max(2)
}

/// Linear triangle on `verts` at positions `zs` (unwrapped), with its
/// `Dbar` and `D` rows. The centre is reduced by `wrap`.
fn p1_element(verts: [usize; 3], zs: [Complex64; 3], wrap: impl Fn(Complex64) -> Complex64) -> (Cell, StencilRow, StencilRow) {
    let (verts, zs) = if ((zs[1] - zs[0]).conj() * (zs[2] - zs[0])).im < 0.0 {
        ([verts[0], verts[2], verts[1]], [zs[0], zs[2], zs[1]])
    } else {
        (verts, zs)
    };
    let area = 0.5 * ((zs[1] - zs[0]).conj() * (zs[2] - zs[0])).im;
    let mut rb = StencilRow::new();
    let mut rd = StencilRow::new();
    for v in 0..3 {
        // gradient of the hat function at vertex v, as a complex number
        let e = zs[(v + 2) % 3] - zs[(v + 1) % 3];
        let g = Complex64::i() * e / (2.0 * area);
        rb.push((verts[v], g / 2.0));
        rd.push((verts[v], g.conj() / 2.0));
    }
    let cell = Cell { center: wrap((zs[0] + zs[1] + zs[2]) / 3.0), weight: area, corners: verts.to_vec() };
    (cell, rb, rd)
}

fn build_disc(k: usize) -> DiscretizedSurface {
    let m = disc_rings(k);
    let dr = 1.0 / (m as f64 + 1.0);
    let dth = 2.0 * PI / k as f64;
    let polar = |j: usize, a: usize| Complex64::from_polar(j as f64 * dr, a as f64 * dth);
    let idx = |j: usize, a: usize| 1 + (j - 1) * k + a % k;

    let mut nodes = vec![Complex64::new(0.0, 0.0)];
    let mut node_weights = vec![PI * (dr / 2.0).powi(2)];
    let mut boundary = vec![false];
    for j in 1..=m + 1 {
        for a in 0..k {
            nodes.push(polar(j, a));
            // the boundary ring owns the half annulus [1 − Δr/2, 1]
            node_weights.push(if j <= m {
                j as f64 * dr * dr * dth
            } else {
                (dr - dr * dr / 4.0) * dth / 2.0
            });
            boundary.push(j == m + 1);
        }
    }

    let mut cells = Vec::with_capacity(k * (m + 1));
    let mut dbar = Vec::with_capacity(k * (m + 1));
    let mut d = Vec::with_capacity(k * (m + 1));
    let mut elements = Vec::with_capacity(k * (2 * m + 1));
    let mut element_dbar = Vec::with_capacity(k * (2 * m + 1));
    let mut add_element = |verts: [usize; 3], nodes: &[Complex64]| {
        let (cell, rb, _) = p1_element(verts, verts.map(|v| nodes[v]), |z| z);
        elements.push(cell);
        element_dbar.push(rb);
    };
    for a in 0..k {
        let verts = [0, idx(1, a), idx(1, a + 1)];
        let (cell, rb, rd) = p1_element(verts, verts.map(|v| nodes[v]), |z| z);
        cells.push(cell);
        dbar.push(rb);
        d.push(rd);
        add_element(verts, &nodes);
    }
    for j in 1..=m {
        let rc = (j as f64 + 0.5) * dr;
        for a in 0..k {
            let th = (a as f64 + 0.5) * dth;
            let phase = Complex64::from_polar(0.5, th);
            let c00 = idx(j, a);
            let c10 = idx(j + 1, a);
            let c01 = idx(j, a + 1);
            let c11 = idx(j + 1, a + 1);
            add_element([c00, c10, c11], &nodes);
            add_element([c00, c11, c01], &nodes);
            // ∂_r and ∂_θ as corner weights
            let wr = [(c00, -1.0), (c10, 1.0), (c01, -1.0), (c11, 1.0)].map(|(i, s)| (i, s / (2.0 * dr)));
            let wt = [(c00, -1.0), (c10, -1.0), (c01, 1.0), (c11, 1.0)].map(|(i, s)| (i, s / (2.0 * dth)));
            let iover = Complex64::new(0.0, 1.0 / rc);
            let rb = (0..4).map(|q| (wr[q].0, phase * (wr[q].1 + iover * wt[q].1))).collect();
            let rd = (0..4).map(|q| (wr[q].0, phase.conj() * (wr[q].1 - iover * wt[q].1))).collect();
            cells.push(Cell {
                center: Complex64::from_polar(rc, th),
                weight: rc * dr * dth,
                corners: vec![c00, c10, c01, c11],
            });
            dbar.push(rb);
            d.push(rd);
        }
    }
    DiscretizedSurface {
        model: Model::Disc,
        resolution: k,
        h: dr,
        nodes,
        node_weights,
        boundary,
        cells,
        dbar,
        d,
        elements,
        element_dbar,
        rings: m,
    }
}

fn build_torus(n: usize) -> DiscretizedSurface {
    let h = 1.0 / n as f64;
    let at = |i: usize, j: usize| (i % n) + n * (j % n);
    let mut nodes = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            nodes.push(torus_reduce(Complex64::new(i as f64 * h, j as f64 * h)));
        }
    }
    let mut cells = Vec::with_capacity(n * n);
    let mut dbar = Vec::with_capacity(n * n);
    let mut d = Vec::with_capacity(n * n);
    let mut elements = Vec::with_capacity(2 * n * n);
    let mut element_dbar = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let p = |di: usize, dj: usize| Complex64::new((i + di) as f64 * h, (j + dj) as f64 * h);
            for (verts, zs) in [
                ([at(i, j), at(i + 1, j), at(i + 1, j + 1)], [p(0, 0), p(1, 0), p(1, 1)]),
                ([at(i, j), at(i + 1, j + 1), at(i, j + 1)], [p(0, 0), p(1, 1), p(0, 1)]),
            ] {
                let (cell, rb, _) = p1_element(verts, zs, torus_reduce);
                elements.push(cell);
                element_dbar.push(rb);
            }
            let c00 = at(i, j);
            let c10 = at(i + 1, j);
            let c01 = at(i, j + 1);
            let c11 = at(i + 1, j + 1);
            let s = 1.0 / (2.0 * h);
            let wx = [-s, s, -s, s];
            let wy = [-s, -s, s, s];
            let idx = [c00, c10, c01, c11];
            let rb = (0..4).map(|q| (idx[q], Complex64::new(wx[q], wy[q]) / 2.0)).collect();
            let rd = (0..4).map(|q| (idx[q], Complex64::new(wx[q], -wy[q]) / 2.0)).collect();
            cells.push(Cell {
                center: torus_reduce(Complex64::new((i as f64 + 0.5) * h, (j as f64 + 0.5) * h)),
                weight: h * h,
                corners: idx.to_vec(),
            });
            dbar.push(rb);
            d.push(rd);
        }
    }
    DiscretizedSurface {
        model: Model::Torus,
        resolution: n,
        h,
        nodes,
        node_weights: vec![h * h; n * n],
        boundary: vec![false; n * n],
        cells,
        dbar,
        d,
        elements,
        element_dbar,
        rings: 0,
    }
}

/// `ψ(x)/(ψ(x)+ψ(1−x))` with `ψ(x) = e^{−1/x}`: 0 for x ≤ 0, 1 for x ≥ 1.
pub fn smoothstep(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let a = (-1.0 / x).exp();
    let b = (-1.0 / (1.0 - x)).exp();
    a / (a + b)
}

/// Derivative of [`smoothstep`].
pub fn smoothstep_derivative(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        return 0.0;
    }
    // S = 1/(1+e^{g}) with g = 1/x − 1/(1−x)
    let g = 1.0 / x - 1.0 / (1.0 - x);
    let dg = -1.0 / (x * x) - 1.0 / ((1.0 - x) * (1.0 - x));
    if g.abs() > 700.0 {
        return 0.0;
    }
    let e = g.exp();
    -dg * e / ((1.0 + e) * (1.0 + e))
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Profile {
    Annulus { r1: f64, r2: f64 },
    Constant(f64),
}

/// Radial cutoff: 1 on `|z| ≤ r₁`, 0 on `|z| ≥ r₂`.
#[derive(Debug, Clone)]
pub struct BumpFunction {
    profile: Profile,
    values: Vec<f64>,
}

impl BumpFunction {
    pub fn eval(&self, z: Complex64) -> f64 {
        match self.profile {
            Profile::Annulus { r1, r2 } => 1.0 - smoothstep((z.norm() - r1) / (r2 - r1)),
            Profile::Constant(c) => c,
        }
    }

    /// Exact `∂̄ρ = (z / 2|z|) ρ'(|z|)`.
    pub fn dbar(&self, z: Complex64) -> Complex64 {
        match self.profile {
            Profile::Annulus { r1, r2 } => {
                let r = z.norm();
                if r <= r1 || r >= r2 {
                    return Complex64::new(0.0, 0.0);
                }
                let dr = -smoothstep_derivative((r - r1) / (r2 - r1)) / (r2 - r1);
                z / (2.0 * r) * dr
            }
            Profile::Constant(_) => Complex64::new(0.0, 0.0),
        }
    }

    /// Node samples.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `(r₁, r₂)`, or `None` for a constant profile.
    pub fn radii(&self) -> Option<(f64, f64)> {
        match self.profile {
            Profile::Annulus { r1, r2 } => Some((r1, r2)),
            Profile::Constant(_) => None,
        }
    }

    /// `ρ ≡ c` on the whole grid.
    pub fn constant(surface: &DiscretizedSurface, c: f64) -> Self {
        Self { profile: Profile::Constant(c), values: vec![c; surface.node_count()] }
    }
}

pub fn bump_function(surface: &DiscretizedSurface, r1: f64, r2: f64) -> Result<BumpFunction> {
    if !(r1 > 0.0) || !(r1 < r2) {
        return Err(invalid(format!("bump radii need 0 < r1 < r2, got r1 = {r1}, r2 = {r2}")));
    }
    let limit = match surface.model {
        Model::Disc => 1.0,
        Model::Torus => 0.5,
    };
    if r2 > limit {
        return Err(invalid(format!("outer radius {r2} exceeds {limit} on the {}", surface.model)));
    }
    let profile = Profile::Annulus { r1, r2 };
    let mut b = BumpFunction { profile, values: Vec::new() };
    b.values = surface.nodes.iter().map(|&z| b.eval(z)).collect();
    Ok(b)
}

/// Relative L² mismatch between `e^{−ρf} ∂̄ (e^{ρf} s)` and
/// `∂̄s + f ∂̄ρ s` over the transition annulus of `ρ`.
///
/// Both sides use the same grid `Dbar`; the conjugation is applied at the
/// nodes and undone at the cell centre. Only cells with every corner in
/// `r₁ ≤ |z| ≤ r₂` are compared (for a constant profile, every cell away
/// from the origin), so the pole of `f` is never sampled. On an annulus the
/// cell weights carry a window vanishing to all orders at `r₁` and `r₂`,
/// so the norm does not jump as boundary cells enter or leave the set.
pub fn gauge_identity_check(
    surface: &DiscretizedSurface,
    f: &LaurentCocycle,
    rho: &BumpFunction,
    section: &dyn Fn(Complex64) -> DVector<Complex64>,
) -> Result<f64> {
    let n = f.rank();
    let (rmin, rmax) = match rho.profile {
        Profile::Annulus { r1, r2 } => (r1, r2),
        Profile::Constant(_) => (0.5 * surface.h, f64::INFINITY),
    };
    let window = |r: f64| match rho.profile {
        Profile::Annulus { r1, r2 } => {
            let t = (r - r1) / (r2 - r1);
            if t <= 0.0 || t >= 1.0 { 0.0 } else { (-1.0 / (t * (1.0 - t))).exp() }
        }
        Profile::Constant(_) => 1.0,
    };
    if let Profile::Annulus { r1, .. } = rho.profile {
        if f.min_degree().is_some_and(|k| k < 0) && r1 < surface.h {
            return Err(Error::PoleOnContour {
                location: format!("plateau radius {r1} is below the grid spacing {}", surface.h),
            });
        }
    }
    let conj_node = |i: usize, sign: f64| -> Result<CMatrix> {
        let z = surface.nodes[i];
        let fz = f.eval(z)?;
        Ok((fz * Complex64::new(sign * rho.values[i], 0.0)).exp())
    };
    let mut cache: Vec<Option<DVector<Complex64>>> = vec![None; surface.node_count()];
    let mut plain: Vec<Option<DVector<Complex64>>> = vec![None; surface.node_count()];
    let mut num = 0.0;
    let mut den = 0.0;
    for (cell, row) in surface.cells.iter().zip(&surface.dbar) {
        if cell.corners.iter().any(|&i| !(rmin..=rmax).contains(&surface.nodes[i].norm())) {
            continue;
        }
        let mut lhs = DVector::zeros(n);
        let mut ds = DVector::zeros(n);
        let mut drho = Complex64::new(0.0, 0.0);
        for &(i, c) in row {
            if plain[i].is_none() {
                let s = section(surface.nodes[i]);
                if s.len() != n {
                    return Err(Error::RankMismatch { left: n, right: s.len() });
                }
                cache[i] = Some(conj_node(i, 1.0)? * &s);
                plain[i] = Some(s);
            }
            lhs += cache[i].as_ref().unwrap() * c;
            ds += plain[i].as_ref().unwrap() * c;
            drho += c * rho.values[i];
        }
        let zc = cell.center;
        let fc = f.eval(zc)?;
        let back = (&fc * Complex64::new(-rho.eval(zc), 0.0)).exp();
        let lhs = back * lhs;
        let rhs = ds + fc * section(zc) * drho;
        let w = cell.weight * window(zc.norm());
        num += w * (&lhs - &rhs).norm_squared();
        den += w * rhs.norm_squared();
    }
    if den == 0.0 {
        return Ok(num.sqrt());
    }
    Ok((num / den).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn rejects_small_resolution_and_unknown_model() {
        assert!(build_surface(Model::Disc, 7).is_err());
        assert!("sphere".parse::<Model>().is_err());
        assert_eq!("torus".parse::<Model>().unwrap(), Model::Torus);
    }

    #[test]
    fn disc_area_close_to_pi() {
        let s = build_surface(Model::Disc, 64).unwrap();
        assert!((s.total_area() - PI).abs() / PI < 0.02, "{}", s.total_area());
        let cell_area: f64 = s.cells().iter().map(|c| c.weight).sum();
        assert!((cell_area - PI).abs() / PI < 0.02);
    }

    #[test]
    fn torus_dbar_kills_constants_exactly() {
        let s = build_surface(Model::Torus, 32).unwrap();
        let u = vec![c(1.7, -0.3); s.node_count()];
        assert!(s.apply_dbar(&u).iter().all(|v| v.norm() == 0.0));
        assert!((s.total_area() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dbar_of_linear_functions() {
        let s = build_surface(Model::Disc, 24).unwrap();
        let zbar = s.apply_dbar(&s.sample(|z| z.conj()));
        let tri = &zbar[..s.resolution()];
        assert!(tri.iter().all(|v| (v - 1.0).norm() < 1e-12));
        let z = s.apply_dbar(&s.sample(|z| z));
        assert!(z[..s.resolution()].iter().all(|v| v.norm() < 1e-12));
    }

    #[test]
    fn dbar_of_z_squared_is_second_order() {
        let errs: Vec<(f64, f64)> = [32usize, 64, 128]
            .iter()
            .map(|&k| {
                let s = build_surface(Model::Disc, k).unwrap();
                let v = s.apply_dbar(&s.sample(|z| z * z));
                (s.h(), s.cell_norm(&v))
            })
            .collect();
        for w in errs.windows(2) {
            let order = (w[0].1 / w[1].1).ln() / (w[0].0 / w[1].0).ln();
            assert!(order > 1.8, "order {order} from {errs:?}");
        }
    }

    #[test]
    fn d_is_minus_adjoint_of_dbar() {
        let s = build_surface(Model::Disc, 64).unwrap();
        let bump = |z: Complex64| (1.0 - z.norm_sqr()).powi(3);
        let u = s.sample(|z| bump(z) * (z + 0.3 * z.conj() * z));
        let v = s.sample(|z| bump(z) * c(1.0, 2.0) * (1.0 + z * z));
        let lhs = s.cell_inner(&s.cell_average(&v), &s.apply_dbar(&u));
        let rhs = s.cell_inner(&s.apply_d(&v), &s.cell_average(&u));
        let scale = s.cell_norm(&s.apply_dbar(&u)) * s.cell_norm(&s.cell_average(&v));
        assert!((lhs + rhs).norm() / scale < 5e-3, "{lhs} {rhs}");
    }

    #[test]
    fn bump_plateaus() {
        let s = build_surface(Model::Disc, 32).unwrap();
        let b = bump_function(&s, 0.3, 0.6).unwrap();
        assert_eq!(b.values()[0], 1.0);
        assert_eq!(b.eval(c(0.6, 0.0)), 0.0);
        assert!(b.values().iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert!(bump_function(&s, 0.6, 0.3).is_err());
        let t = build_surface(Model::Torus, 16).unwrap();
        assert!(bump_function(&t, 0.2, 0.6).is_err());
    }

    #[test]
    fn smoothstep_derivative_matches_differences() {
        for &x in &[0.1, 0.37, 0.5, 0.81] {
            let h = 1e-6;
            let fd = (smoothstep(x + h) - smoothstep(x - h)) / (2.0 * h);
            assert!((fd - smoothstep_derivative(x)).abs() < 1e-7);
        }
    }

    #[test]
    fn gauge_trivial_cases_vanish() {
        let s = build_surface(Model::Disc, 32).unwrap();
        let f = LaurentCocycle::scalar([(-1, c(0.4, 0.1))]).unwrap();
        let sec = |z: Complex64| DVector::from_element(1, z.exp());
        let flat = BumpFunction::constant(&s, 0.0);
        assert_eq!(gauge_identity_check(&s, &f, &flat, &sec).unwrap(), 0.0);
        let b = bump_function(&s, 0.3, 0.7).unwrap();
        assert_eq!(gauge_identity_check(&s, &LaurentCocycle::zero(1), &b, &sec).unwrap(), 0.0);
    }
}
