//! Conjugated Laplacian families and their spectra.
//!
//! For a Hermitian generator field `L` (a real scalar `f` in rank one,
//! `log H` in rank `n`) the factor operator is
//! `T_s = e^{−sL} ∘ ∂̄ ∘ e^{sL}`, evaluated with `L` at nodes on the right
//! and at element centroids on the left, where `∂̄` is the piecewise-linear
//! operator on the surface's triangle mesh. Then `Δ_s = T_s* T_s` acts on
//! sections and `Δ⁻_s = T_s T_s*` on (0,1)-forms. Both are assembled in
//! orthonormal coordinates: node values are scaled by `√w`, form values by
//! `2√w`, so that `Δ` approximates the flat Laplacian `−∂_x² − ∂_y²`
//! (Dirichlet on the disc). The (0,1)-form samples of this module live on
//! elements; "cells" below means elements.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::laurent::CMatrix;
use crate::surface::DiscretizedSurface;

/// Eigenvalues at or below this fraction of `λ_max` count as zero modes.
pub const ZERO_MODE_RELATIVE: f64 = 1e-10;

/// Largest dense dimension handled by the eigensolver.
pub const MAX_DENSE_DIMENSION: usize = 6000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamilyKind {
    Rank1Exponential,
    RankNHermitian,
}

/// Spectral data of a Hermitian matrix `L`, kept so that `e^{sL}` is cheap.
#[derive(Debug, Clone)]
struct PointLog {
    values: DVector<f64>,
    vectors: CMatrix,
}

impl PointLog {
    fn exp(&self, s: f64) -> CMatrix {
        let d = self.values.map(|v| Complex64::new((s * v).exp(), 0.0));
        &self.vectors * CMatrix::from_diagonal(&d) * self.vectors.adjoint()
    }

    fn log(&self) -> CMatrix {
        let d = self.values.map(|v| Complex64::new(v, 0.0));
        &self.vectors * CMatrix::from_diagonal(&d) * self.vectors.adjoint()
    }
}

/// Generator field sampled at nodes and at cell centres.
#[derive(Debug, Clone)]
pub struct Generator {
    kind: FamilyKind,
    rank: usize,
    nodes: Vec<PointLog>,
    cells: Vec<PointLog>,
}

fn scalar_log(v: f64) -> PointLog {
    PointLog { values: DVector::from_element(1, v), vectors: CMatrix::identity(1, 1) }
}

impl Generator {
    /// Rank-one generator `f` evaluated at nodes and cell centres.
    pub fn scalar_fn(surface: &DiscretizedSurface, f: impl Fn(Complex64) -> f64) -> Result<Self> {
        let nodes: Vec<f64> = surface.nodes().iter().map(|&z| f(z)).collect();
        let cells: Vec<f64> = surface.elements().iter().map(|c| f(c.center)).collect();
        Self::scalar_samples(nodes, cells)
    }

    /// Rank-one generator from node values; cells take corner averages.
    pub fn scalar_nodes(surface: &DiscretizedSurface, nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() != surface.node_count() {
            return Err(invalid(format!(
                "generator has {} node values, surface has {} nodes",
                nodes.len(),
                surface.node_count()
            )));
        }
        let cells = surface
            .elements()
            .iter()
            .map(|c| c.corners.iter().map(|&i| nodes[i]).sum::<f64>() / c.corners.len() as f64)
            .collect();
        Self::scalar_samples(nodes, cells)
    }

    fn scalar_samples(nodes: Vec<f64>, cells: Vec<f64>) -> Result<Self> {
        if nodes.iter().chain(&cells).any(|v| !v.is_finite()) {
            return Err(invalid("generator contains non-finite values"));
        }
        Ok(Self {
            kind: FamilyKind::Rank1Exponential,
            rank: 1,
            nodes: nodes.into_iter().map(scalar_log).collect(),
            cells: cells.into_iter().map(scalar_log).collect(),
        })
    }

    /// Rank-`n` generator from a positive Hermitian field `H`; the family
    /// uses the real powers `H^s`.
    pub fn hermitian_fn(surface: &DiscretizedSurface, h: impl Fn(Complex64) -> CMatrix) -> Result<Self> {
        let nodes: Vec<CMatrix> = surface.nodes().iter().map(|&z| h(z)).collect();
        let cells: Vec<CMatrix> = surface.elements().iter().map(|c| h(c.center)).collect();
        Self::hermitian_samples(nodes, cells)
    }

    /// Rank-`n` generator from node values of `H`; cells average corners.
    pub fn hermitian_nodes(surface: &DiscretizedSurface, nodes: Vec<CMatrix>) -> Result<Self> {
        if nodes.len() != surface.node_count() {
            return Err(invalid("generator length does not match the node count"));
        }
        let cells = surface
            .elements()
            .iter()
            .map(|c| {
                let sum = c.corners.iter().fold(CMatrix::zeros(nodes[0].nrows(), nodes[0].ncols()), |a, &i| a + &nodes[i]);
                sum / Complex64::new(c.corners.len() as f64, 0.0)
            })
            .collect();
        Self::hermitian_samples(nodes, cells)
    }

    fn hermitian_samples(nodes: Vec<CMatrix>, cells: Vec<CMatrix>) -> Result<Self> {
        let rank = nodes.first().map(|m| m.nrows()).ok_or_else(|| invalid("empty generator"))?;
        let logs = |ms: Vec<CMatrix>| -> Result<Vec<PointLog>> {
            ms.into_iter()
                .map(|m| {
                    if m.nrows() != rank || m.ncols() != rank {
                        return Err(Error::RankMismatch { left: rank, right: m.nrows() });
                    }
                    if m.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
                        return Err(invalid("generator contains non-finite values"));
                    }
                    let scale = m.norm().max(1.0);
                    if (&m - m.adjoint()).norm() > 1e-12 * scale {
                        return Err(invalid("generator matrix is not Hermitian"));
                    }
                    let e = SymmetricEigen::new((&m + m.adjoint()) * Complex64::new(0.5, 0.0));
                    if e.eigenvalues.iter().any(|&v| v <= 0.0) {
                        return Err(invalid("generator matrix is not positive definite"));
                    }
                    Ok(PointLog { values: e.eigenvalues.map(f64::ln), vectors: e.eigenvectors })
                })
                .collect()
        };
        let nodes = logs(nodes)?;
        let cells = logs(cells)?;
        Ok(Self { kind: FamilyKind::RankNHermitian, rank, nodes, cells })
    }

    pub fn kind(&self) -> FamilyKind {
        self.kind
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    fn check(&self, surface: &DiscretizedSurface) -> Result<()> {
        if self.nodes.len() != surface.node_count() || self.cells.len() != surface.element_count() {
            return Err(invalid("generator was sampled on a different surface"));
        }
        Ok(())
    }

    /// Block-diagonal `L` on the free nodes, in orthonormal coordinates.
    pub fn node_log_matrix(&self, surface: &DiscretizedSurface) -> Result<BlockDiagonal> {
        self.check(surface)?;
        let free = surface.interior();
        Ok(BlockDiagonal { rank: self.rank, blocks: free.iter().map(|&i| self.nodes[i].log()).collect() })
    }

    /// Block-diagonal `L` on cells.
    pub fn cell_log_matrix(&self, surface: &DiscretizedSurface) -> Result<BlockDiagonal> {
        self.check(surface)?;
        Ok(BlockDiagonal { rank: self.rank, blocks: self.cells.iter().map(PointLog::log).collect() })
    }
}

/// Block-diagonal matrix with `rank × rank` blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockDiagonal {
    pub rank: usize,
    pub blocks: Vec<CMatrix>,
}

impl BlockDiagonal {
    pub fn dim(&self) -> usize {
        self.rank * self.blocks.len()
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let n = self.rank;
        let mut m = DMatrix::zeros(self.dim(), self.dim());
        for (p, b) in self.blocks.iter().enumerate() {
            m.view_mut((p * n, p * n), (n, n)).copy_from(b);
        }
        m
    }

    /// `v* B v`, real for Hermitian blocks.
    pub fn quadratic_form(&self, v: &[Complex64]) -> f64 {
        let n = self.rank;
        let mut acc = 0.0;
        for (p, b) in self.blocks.iter().enumerate() {
            let x = &v[p * n..(p + 1) * n];
            for i in 0..n {
                for j in 0..n {
                    acc += (x[i].conj() * b[(i, j)] * x[j]).re;
                }
            }
        }
        acc
    }

    /// `B M`.
    pub fn left_mul(&self, m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let n = self.rank;
        let mut out = DMatrix::zeros(m.nrows(), m.ncols());
        for (p, b) in self.blocks.iter().enumerate() {
            let prod = b * m.rows(p * n, n);
            out.rows_mut(p * n, n).copy_from(&prod);
        }
        out
    }

    /// `M B`.
    pub fn right_mul(&self, m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let n = self.rank;
        let mut out = DMatrix::zeros(m.nrows(), m.ncols());
        for (p, b) in self.blocks.iter().enumerate() {
            let prod = m.columns(p * n, n) * b;
            out.columns_mut(p * n, n).copy_from(&prod);
        }
        out
    }
}

/// `T_s` as block rows: for each cell, `(free node position, n×n block)`.
struct SparseFactor {
    rank: usize,
    cols: usize,
    rows: Vec<Vec<(usize, CMatrix)>>,
}

impl SparseFactor {
    fn dense(&self) -> DMatrix<Complex64> {
        let n = self.rank;
        let mut t = DMatrix::zeros(self.rows.len() * n, self.cols * n);
        for (r, row) in self.rows.iter().enumerate() {
            for (j, b) in row {
                let mut dst = t.view_mut((r * n, j * n), (n, n));
                dst += b;
            }
        }
        t
    }

    /// `T* W T` with `W` block-diagonal over cells (identity when `None`).
    fn gram(&self, weight: Option<&BlockDiagonal>) -> DMatrix<Complex64> {
        let n = self.rank;
        let mut out = DMatrix::zeros(self.cols * n, self.cols * n);
        for (r, row) in self.rows.iter().enumerate() {
            for (i, bi) in row {
                let left = match weight {
                    Some(w) => bi.adjoint() * &w.blocks[r],
                    None => bi.adjoint(),
                };
                for (j, bj) in row {
                    let mut dst = out.view_mut((i * n, j * n), (n, n));
                    dst += &left * bj;
                }
            }
        }
        out
    }

    /// `T T*`.
    fn cogram(&self) -> DMatrix<Complex64> {
        let n = self.rank;
        let mut by_col: Vec<Vec<(usize, &CMatrix)>> = vec![Vec::new(); self.cols];
        for (r, row) in self.rows.iter().enumerate() {
            for (j, b) in row {
                by_col[*j].push((r, b));
            }
        }
        let mut out = DMatrix::zeros(self.rows.len() * n, self.rows.len() * n);
        for list in &by_col {
            for (a, ba) in list {
                for (b, bb) in list {
                    let mut dst = out.view_mut((a * n, b * n), (n, n));
                    dst += *ba * bb.adjoint();
                }
            }
        }
        out
    }
}

fn sparse_factor(surface: &DiscretizedSurface, generator: &Generator, s: f64) -> Result<SparseFactor> {
    generator.check(surface)?;
    if !s.is_finite() {
        return Err(invalid("parameter s must be finite"));
    }
    let n = generator.rank;
    let free = surface.interior();
    if free.len() * n > MAX_DENSE_DIMENSION {
        return Err(Error::Unsupported(format!(
            "dimension {} exceeds the dense limit {MAX_DENSE_DIMENSION}",
            free.len() * n
        )));
    }
    let mut pos = vec![usize::MAX; surface.node_count()];
    for (c, &i) in free.iter().enumerate() {
        pos[i] = c;
    }
    let node_exp: Vec<Option<CMatrix>> = (0..surface.node_count())
        .map(|i| (pos[i] != usize::MAX).then(|| generator.nodes[i].exp(s)))
        .collect();
    let weights = surface.node_weights();
    let mut rows = Vec::with_capacity(surface.element_count());
    for (r, (cell, row)) in surface.elements().iter().zip(surface.element_dbar_rows()).enumerate() {
        let left = generator.cells[r].exp(-s) * Complex64::new(2.0 * cell.weight.sqrt(), 0.0);
        let mut out = Vec::with_capacity(row.len());
        for &(j, c) in row {
            if let Some(right) = &node_exp[j] {
                out.push((pos[j], &left * right * (c / weights[j].sqrt())));
            }
        }
        rows.push(out);
    }
    Ok(SparseFactor { rank: n, cols: free.len(), rows })
}

/// Orthonormal factor matrix `T_s` (cells·n × free nodes·n).
pub fn factor_operator(surface: &DiscretizedSurface, generator: &Generator, s: f64) -> Result<DMatrix<Complex64>> {
    Ok(sparse_factor(surface, generator, s)?.dense())
}

/// `Δ_s = T*T` alone.
pub fn assemble_laplacian(surface: &DiscretizedSurface, generator: &Generator, s: f64) -> Result<DMatrix<Complex64>> {
    Ok(sparse_factor(surface, generator, s)?.gram(None))
}

/// `(Δ, Δ⁻) = (T*T, TT*)`.
pub fn assemble_family(
    surface: &DiscretizedSurface,
    generator: &Generator,
    s: f64,
) -> Result<(DMatrix<Complex64>, DMatrix<Complex64>)> {
    let t = sparse_factor(surface, generator, s)?;
    Ok((t.gram(None), t.cogram()))
}

/// Exact `dΔ/ds = LΔ + ΔL − 2T*L_cT`.
pub fn family_derivative(surface: &DiscretizedSurface, generator: &Generator, s: f64) -> Result<DMatrix<Complex64>> {
    let t = sparse_factor(surface, generator, s)?;
    let l = generator.node_log_matrix(surface)?;
    let lc = generator.cell_log_matrix(surface)?;
    let delta = t.gram(None);
    Ok(l.left_mul(&delta) + l.right_mul(&delta) - t.gram(Some(&lc)) * Complex64::new(2.0, 0.0))
}

#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    /// Ascending.
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors as columns.
    pub vectors: DMatrix<Complex64>,
    /// `TΦ_i/√λ_i` for the positive eigenvalues, as columns, when computed.
    pub partners: Option<DMatrix<Complex64>>,
}

impl SpectralDecomposition {
    /// Threshold below which an eigenvalue is a zero mode.
    pub fn zero_cutoff(&self) -> f64 {
        zero_cutoff(&self.values)
    }

    /// Indices of the positive eigenvalues.
    pub fn positive(&self) -> Vec<usize> {
        let cut = self.zero_cutoff();
        (0..self.values.len()).filter(|&i| self.values[i] > cut).collect()
    }

    /// Attaches `Ψ_i = TΦ_i/√λ_i` for every positive `λ_i`.
    pub fn with_partners(mut self, t: &DMatrix<Complex64>) -> Result<Self> {
        if t.ncols() != self.vectors.nrows() {
            return Err(invalid("factor operator does not match the eigenvectors"));
        }
        let idx = self.positive();
        let mut psi = DMatrix::zeros(t.nrows(), idx.len());
        for (c, &i) in idx.iter().enumerate() {
            let v = t * self.vectors.column(i) / Complex64::new(self.values[i].sqrt(), 0.0);
            psi.set_column(c, &v);
        }
        self.partners = Some(psi);
        Ok(self)
    }
}

pub fn zero_cutoff(values: &[f64]) -> f64 {
    let max = values.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    ZERO_MODE_RELATIVE * max.max(f64::MIN_POSITIVE)
}

/// Ascending eigen-decomposition of a Hermitian matrix, keeping the `count`
/// smallest pairs (all when `None`). Each eigenvector is rotated so its
/// first non-negligible component is real and positive.
pub fn eigen_spectrum(op: &DMatrix<Complex64>, count: Option<usize>) -> Result<SpectralDecomposition> {
    let dim = op.nrows();
    if op.ncols() != dim {
        return Err(invalid("operator must be square"));
    }
    let count = count.unwrap_or(dim);
    if count > dim {
        return Err(invalid(format!("requested {count} eigenpairs of a {dim}-dimensional operator")));
    }
    let scale = op.norm().max(f64::MIN_POSITIVE);
    if (op - op.adjoint()).norm() > 1e-12 * scale {
        return Err(invalid("operator is not Hermitian"));
    }
    let sym = (op + op.adjoint()) * Complex64::new(0.5, 0.0);
    let max_iter = 200 * dim.max(10);
    let eig = SymmetricEigen::try_new(sym, 1e-15, max_iter)
        .ok_or(Error::NoConvergence { iterations: max_iter, residual: f64::NAN })?;
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    order.truncate(count);
    let mut vectors = DMatrix::zeros(dim, count);
    let mut values = Vec::with_capacity(count);
    for (c, &i) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(i).into_owned();
        let big = v.iter().fold(0.0f64, |a, x| a.max(x.norm()));
        if let Some(first) = v.iter().copied().find(|x| x.norm() > 1e-8 * big) {
            let phase = first.conj() / first.norm();
            v *= phase;
        }
        vectors.set_column(c, &v);
        values.push(eig.eigenvalues[i]);
    }
    Ok(SpectralDecomposition { values, vectors, partners: None })
}

/// `Σ_{λ>0} e^{−tλ}`.
pub fn heat_trace(values: &[f64], t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(invalid(format!("heat trace needs t > 0, got {t}")));
    }
    let cut = zero_cutoff(values);
    Ok(values.iter().filter(|&&v| v > cut).map(|&v| (-t * v).exp()).sum())
}

/// Hermitian polar decomposition `α = H U`.
pub fn polar_decompose(alpha: &CMatrix) -> Result<(CMatrix, CMatrix)> {
    if !alpha.is_square() {
        return Err(invalid("polar decomposition needs a square matrix"));
    }
    let svd = alpha.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-14 * smax) {
        return Err(Error::Singular { condition: smax / smin });
    }
    let u = svd.u.as_ref().expect("requested U");
    let vt = svd.v_t.as_ref().expect("requested V*");
    let sigma = CMatrix::from_diagonal(&svd.singular_values.map(|x| Complex64::new(x, 0.0)));
    let h = u * sigma * u.adjoint();
    let h = (&h + h.adjoint()) * Complex64::new(0.5, 0.0);
    Ok((h, u * vt))
}

/// `log det` of a Hermitian positive definite matrix.
pub fn log_det(op: &DMatrix<Complex64>) -> Result<f64> {
    let chol = Cholesky::new(op.clone()).ok_or(Error::NonPositiveSpectrum(f64::NAN))?;
    Ok(chol.l().diagonal().iter().map(|d| 2.0 * d.re.ln()).sum())
}

/// `tr(A Δ⁻¹)` for Hermitian positive definite `Δ`.
pub fn trace_times_inverse(a: &DMatrix<Complex64>, delta: &DMatrix<Complex64>) -> Result<f64> {
    let chol = Cholesky::new(delta.clone()).ok_or(Error::NonPositiveSpectrum(f64::NAN))?;
    // tr(AΔ⁻¹) = tr(Δ⁻¹A)
    Ok(chol.solve(a).trace().re)
}

/// The two sums of the variation formula and their difference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariationTrace {
    pub value: f64,
    pub sections: f64,
    pub forms: f64,
}

/// `2Σ⟨Φ_i|L|Φ_i⟩e^{−ελ_i} − 2Σ⟨Ψ_i|L|Ψ_i⟩e^{−ελ_i}` over positive `λ_i`.
pub fn variation_trace(spec: &SpectralDecomposition, l_nodes: &BlockDiagonal, l_cells: &BlockDiagonal, eps: f64) -> Result<VariationTrace> {
    if !(eps > 0.0) {
        return Err(invalid(format!("ε must be positive, got {eps}")));
    }
    let psi = spec.partners.as_ref().ok_or_else(|| invalid("partner vectors were not computed"))?;
    let idx = spec.positive();
    let mut sections = 0.0;
    let mut forms = 0.0;
    for (c, &i) in idx.iter().enumerate() {
        let w = (-eps * spec.values[i]).exp();
        sections += 2.0 * l_nodes.quadratic_form(spec.vectors.column(i).as_slice()) * w;
        forms += 2.0 * l_cells.quadratic_form(psi.column(c).as_slice()) * w;
    }
    Ok(VariationTrace { value: sections - forms, sections, forms })
}

/// Convenience wrapper: assembles the family at `s`, diagonalises it and
/// evaluates [`variation_trace`].
pub fn family_variation_trace(surface: &DiscretizedSurface, generator: &Generator, s: f64, eps: f64) -> Result<VariationTrace> {
    let sparse = sparse_factor(surface, generator, s)?;
    let t = sparse.dense();
    let spec = eigen_spectrum(&sparse.gram(None), None)?.with_partners(&t)?;
    variation_trace(&spec, &generator.node_log_matrix(surface)?, &generator.cell_log_matrix(surface)?, eps)
}

/// Independent check: `tr(Δ̇ Δ⁺ e^{−εΔ})` with `Δ̇` from central differences
/// of the assembled family and `Δ⁺` the pseudo-inverse.
pub fn direct_variation_trace(surface: &DiscretizedSurface, generator: &Generator, s: f64, eps: f64, step: f64) -> Result<f64> {
    let plus = assemble_laplacian(surface, generator, s + step)?;
    let minus = assemble_laplacian(surface, generator, s - step)?;
    let delta = assemble_laplacian(surface, generator, s)?;
    let dot = (plus - minus) / Complex64::new(2.0 * step, 0.0);
    let spec = eigen_spectrum(&delta, None)?;
    let cut = spec.zero_cutoff();
    let weights = spec
        .values
        .iter()
        .map(|&v| if v > cut { Complex64::new((-eps * v).exp() / v, 0.0) } else { Complex64::new(0.0, 0.0) });
    let g = &spec.vectors * DMatrix::from_diagonal(&DVector::from_iterator(weights.len(), weights)) * spec.vectors.adjoint();
    Ok((dot * g).trace().re)
}
