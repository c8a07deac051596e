//! Bilinear forms, load vectors, the cellwise projection of the Laplacian
//! and mesh-dependent boundary norms.

use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{AfemError, Result};
use crate::field::{CellField, ExactSolution};
use crate::mesh::{Cell, Edge, Partition};
use crate::poly::{eval_coeffs, shifted_legendre, shifted_legendre_monomial, MonomialTable, TensorPoly};
use crate::quadrature::{gauss_edge, gauss_legendre};
use crate::splines::{HierarchicalSpace, SplineFunction};
use crate::Point;

/// Discretization mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Galerkin on the subspace with vanishing boundary traces.
    Conforming,
    /// Full space with weakly imposed boundary conditions.
    Nitsche,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Conforming => "conforming",
            Mode::Nitsche => "nitsche",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FormParams {
    pub mode: Mode,
    pub gamma1: f64,
    pub gamma2: f64,
    /// Gauss points per direction.
    pub quad_n: usize,
}

impl FormParams {
    /// `γ₁ = γ₂ = 10 (r+1)⁴` and `r + 2` Gauss points.
    pub fn defaults(mode: Mode, degree: usize) -> Self {
        let gamma = default_gamma(degree);
        FormParams {
            mode,
            gamma1: gamma,
            gamma2: gamma,
            quad_n: degree + 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mode == Mode::Nitsche && !(self.gamma1 > 0.0 && self.gamma2 > 0.0) {
            return Err(AfemError::InvalidConfig(format!(
                "gamma1 and gamma2 must be positive, got {} and {}",
                self.gamma1, self.gamma2
            )));
        }
        if self.quad_n == 0 {
            return Err(AfemError::InvalidConfig("quad_n must be at least 1".into()));
        }
        Ok(())
    }
}

pub fn default_gamma(degree: usize) -> f64 {
    10.0 * ((degree + 1) as f64).powi(4)
}

/// Sparse symmetric matrix in compressed row storage; both triangles are stored.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    values: Vec<f64>,
}

impl SystemMatrix {
    /// Empty matrix with the sparsity pattern given by sorted, deduplicated rows.
    fn with_pattern(rows: Vec<Vec<usize>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let mut cols = Vec::new();
        for r in rows {
            cols.extend(r);
            row_ptr.push(cols.len());
        }
        let values = vec![0.0; cols.len()];
        SystemMatrix {
            n,
            row_ptr,
            cols,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::with_pattern((0..n).map(|i| vec![i]).collect());
        m.values.fill(1.0);
        m
    }

    /// Builds a matrix from a dense row-major array, keeping nonzeros.
    pub fn from_dense(n: usize, a: &[f64]) -> Self {
        let rows = (0..n)
            .map(|i| (0..n).filter(|&j| a[i * n + j] != 0.0 || i == j).collect())
            .collect();
        let mut m = Self::with_pattern(rows);
        for i in 0..n {
            for k in m.row_ptr[i]..m.row_ptr[i + 1] {
                m.values[k] = a[i * n + m.cols[k]];
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.cols[r.clone()], &self.values[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (c, v) = self.row(i);
        c.binary_search(&j).map(|k| v[k]).unwrap_or(0.0)
    }

    fn add(&mut self, i: usize, j: usize, v: f64) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        let k = self.cols[r.clone()]
            .binary_search(&j)
            .expect("entry lies in the sparsity pattern");
        self.values[r.start + k] += v;
    }

    /// Adds `v` at `(i, j)` and `(j, i)`.
    fn add_sym(&mut self, i: usize, j: usize, v: f64) {
        self.add(i, j, v);
        if i != j {
            self.add(j, i, v);
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let (c, v) = self.row(i);
                c.iter().zip(v).map(|(&j, a)| a * x[j]).sum()
            })
            .collect()
    }

    /// `xᵀ A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        x.iter().zip(self.matvec(y)).map(|(a, b)| a * b).sum()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// `max |A_ij − A_ji|` over stored entries.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            let (c, v) = self.row(i);
            for (&j, a) in c.iter().zip(v) {
                worst = worst.max((a - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Stored entries as `(row, col, value)`, sorted lexicographically.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        (0..self.n)
            .flat_map(|i| {
                let (c, v) = self.row(i);
                c.iter().zip(v).map(move |(&j, &a)| (i, j, a))
            })
            .collect()
    }

    /// Coordinate text export, one `row col value` line per stored entry.
    pub fn to_triplet_text(&self) -> String {
        let mut s = String::new();
        for (i, j, v) in self.triplets() {
            let _ = writeln!(s, "{i} {j} {v:?}");
        }
        s
    }
}

pub type LoadVector = Vec<f64>;

/// Map between the full basis and the unknowns of the linear system.
#[derive(Clone, Debug, PartialEq)]
pub struct DofMap {
    full_dim: usize,
    free: Vec<usize>,
    position: Vec<Option<usize>>,
}

impl DofMap {
    pub fn identity(n: usize) -> Self {
        Self::subset(n, (0..n).collect())
    }

    /// Unknowns are the basis functions `free` (ascending).
    pub fn subset(full_dim: usize, free: Vec<usize>) -> Self {
        let mut position = vec![None; full_dim];
        for (k, &f) in free.iter().enumerate() {
            position[f] = Some(k);
        }
        DofMap {
            full_dim,
            free,
            position,
        }
    }

    pub fn len(&self) -> usize {
        self.free.len()
    }

    pub fn is_empty(&self) -> bool {
        self.free.is_empty()
    }

    pub fn full_dim(&self) -> usize {
        self.full_dim
    }

    pub fn free(&self) -> &[usize] {
        &self.free
    }

    pub fn position(&self, full: usize) -> Option<usize> {
        self.position[full]
    }

    /// Full coefficient vector from unknowns, zero elsewhere.
    pub fn expand(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.full_dim];
        for (&f, v) in self.free.iter().zip(x) {
            out[f] = *v;
        }
        out
    }

    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&f| full[f]).collect()
    }
}

/// Assembled linear system together with its unknown map.
#[derive(Clone, Debug)]
pub struct DiscreteSystem {
    pub matrix: SystemMatrix,
    pub load: LoadVector,
    pub dofs: DofMap,
}

/// Gauss nodes with monomial tables, reused across cells.
struct RefRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    tables: Vec<MonomialTable>,
}

impl RefRule {
    fn new(n: usize, m: usize) -> Self {
        let (nodes, weights) = gauss_legendre(n);
        let tables = nodes.iter().map(|&t| MonomialTable::new(t, m)).collect();
        RefRule {
            nodes,
            weights,
            tables,
        }
    }
}

/// Maps samples of a function at the tensor Gauss points of the reference
/// square to the monomial coefficients of its L² projection onto tensor
/// polynomials of degree `< mp` per direction.
pub(crate) struct Projector {
    n: usize,
    mp: usize,
    /// `mp² × n²`, row-major.
    map: Vec<f64>,
}

impl Projector {
    pub(crate) fn new(mp: usize, n: usize) -> Self {
        assert!(n >= mp, "projection needs at least {mp} Gauss points");
        let (nodes, weights) = gauss_legendre(n);
        let leg: Vec<Vec<f64>> = nodes.iter().map(|&t| shifted_legendre(mp, t).0).collect();
        let mono: Vec<Vec<f64>> = (0..mp).map(shifted_legendre_monomial).collect();
        let mut map = vec![0.0; mp * mp * n * n];
        for s in 0..mp {
            for t in 0..mp {
                let scale = ((2 * s + 1) * (2 * t + 1)) as f64;
                for i in 0..n {
                    for j in 0..n {
                        let c = scale * weights[i] * weights[j] * leg[i][s] * leg[j][t];
                        for (a, ma) in mono[s].iter().enumerate() {
                            for (b, mb) in mono[t].iter().enumerate() {
                                map[(a * mp + b) * n * n + i * n + j] += c * ma * mb;
                            }
                        }
                    }
                }
            }
        }
        Projector { n, mp, map }
    }

    /// Monomial coefficients (`mp²`) from samples (`n²`, index `i·n + j`).
    pub(crate) fn apply(&self, samples: &[f64]) -> Vec<f64> {
        let nn = self.n * self.n;
        (0..self.mp * self.mp)
            .map(|k| {
                self.map[k * nn..(k + 1) * nn]
                    .iter()
                    .zip(samples)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }
}

/// Per-cell polynomials of degree `< order` per direction in local coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewisePoly {
    order: usize,
    cells: Vec<Cell>,
    polys: Vec<TensorPoly>,
}

impl PiecewisePoly {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn polys(&self) -> &[TensorPoly] {
        &self.polys
    }

    pub fn poly(&self, cell: &Cell) -> Option<&TensorPoly> {
        self.cells.binary_search(cell).ok().map(|k| &self.polys[k])
    }

    /// Physical derivative `∂^α` at `x` on `cell`.
    pub fn eval(&self, cell: &Cell, x: Point, alpha: [u32; 2]) -> f64 {
        let p = self.poly(cell).expect("cell belongs to the partition");
        let scale = f64::from(cell.cells_per_side()).powi((alpha[0] + alpha[1]) as i32);
        scale * p.eval_local(cell.to_local(x), alpha[0] as usize, alpha[1] as usize)
    }
}

/// Local Laplacian `∂ξξ + ∂ηη` of the block `c` at a tensor point.
#[inline]
fn local_lap(c: &[f64], m: usize, tx: &MonomialTable, ty: &MonomialTable) -> f64 {
    eval_coeffs(c, m, tx, ty, 2, 0) + eval_coeffs(c, m, tx, ty, 0, 2)
}

fn projection_points(degree: usize, quad_n: usize) -> usize {
    quad_n.max(degree + 1)
}

/// Cellwise L² projection of `Δ fun` onto tensor polynomials of degree `r − 2`.
pub fn project_laplacian(fun: &SplineFunction) -> PiecewisePoly {
    let space = fun.space();
    let r = space.degree();
    let m = space.order();
    let n = projection_points(r, r + 2);
    let proj = Projector::new(r - 1, n);
    let rule = RefRule::new(n, m);
    let mut polys = Vec::with_capacity(space.partition().len());
    let mut samples = vec![0.0; n * n];
    for cell in space.partition().cells() {
        let (_, p) = fun.cell_poly(cell);
        let h2 = f64::from(cell.cells_per_side()).powi(2);
        for i in 0..n {
            for j in 0..n {
                samples[i * n + j] = h2 * local_lap(p.coeffs(), m, &rule.tables[i], &rule.tables[j]);
            }
        }
        polys.push(TensorPoly::from_coeffs(r - 1, proj.apply(&samples)));
    }
    PiecewisePoly {
        order: r - 1,
        cells: space.partition().cells().to_vec(),
        polys,
    }
}

/// L² projection of `v` on `cell` onto tensor polynomials of degree
/// `degree − 2`, as local monomial coefficients.
pub fn project_cell(v: &dyn Fn(Point) -> f64, cell: &Cell, degree: usize, quad_n: usize) -> TensorPoly {
    let n = projection_points(degree, quad_n);
    let (nodes, _) = gauss_legendre(n);
    let mut samples = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            samples[i * n + j] = v(cell.from_local([nodes[i], nodes[j]]));
        }
    }
    TensorPoly::from_coeffs(degree - 1, Projector::new(degree - 1, n).apply(&samples))
}

/// Local coordinates along a boundary edge of `cell`.
fn edge_local_points(cell: &Cell, edge: &Edge, nodes: &[f64]) -> Vec<Point> {
    nodes.iter().map(|&t| cell.to_local(edge.point_at(t))).collect()
}

/// Mass matrix `(B_λ, B_μ)` with `n` Gauss points per direction.
pub fn mass_matrix(space: &HierarchicalSpace, n: usize) -> SystemMatrix {
    let dofs = DofMap::identity(space.dim());
    let mut a = SystemMatrix::with_pattern(pattern(space, &dofs));
    let m = space.order();
    let rule = RefRule::new(n, m);
    for (k, cell) in space.partition().cells().iter().enumerate() {
        let cb = space.cell_basis_at(k);
        let nb = cb.len();
        let area = cell.area();
        let mut vals = vec![0.0; nb];
        let mut local = vec![0.0; nb * nb];
        for i in 0..n {
            for j in 0..n {
                let w = rule.weights[i] * rule.weights[j] * area;
                for (s, v) in vals.iter_mut().enumerate() {
                    *v = eval_coeffs(cb.block(s, m), m, &rule.tables[i], &rule.tables[j], 0, 0);
                }
                accumulate_outer(&mut local, &vals, &vals, w);
            }
        }
        scatter(&mut a, &cb.dofs, &local, &dofs);
    }
    a
}

/// `local[s][t] += w · p[s] · q[t]` for `s ≤ t`.
#[inline]
fn accumulate_outer(local: &mut [f64], p: &[f64], q: &[f64], w: f64) {
    let nb = p.len();
    for s in 0..nb {
        let ws = w * p[s];
        for t in s..nb {
            local[s * nb + t] += ws * q[t];
        }
    }
}

/// Adds the upper triangle of a local matrix, mirrored.
fn scatter(a: &mut SystemMatrix, dofs: &[usize], local: &[f64], map: &DofMap) {
    let nb = dofs.len();
    for s in 0..nb {
        let Some(gs) = map.position(dofs[s]) else { continue };
        for t in s..nb {
            let Some(gt) = map.position(dofs[t]) else { continue };
            a.add_sym(gs, gt, local[s * nb + t]);
        }
    }
}

fn pattern(space: &HierarchicalSpace, map: &DofMap) -> Vec<Vec<usize>> {
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); map.len()];
    for k in 0..space.partition().len() {
        let local: Vec<usize> = space
            .cell_basis_at(k)
            .dofs
            .iter()
            .filter_map(|&d| map.position(d))
            .collect();
        for &i in &local {
            rows[i].extend_from_slice(&local);
        }
    }
    for r in &mut rows {
        r.sort_unstable();
        r.dedup();
    }
    rows
}

/// Unknowns of the discrete problem for `mode`.
pub fn dof_map(space: &HierarchicalSpace, mode: Mode) -> Result<DofMap> {
    match mode {
        Mode::Nitsche => Ok(DofMap::identity(space.dim())),
        Mode::Conforming => {
            let free = space.conforming_indices().to_vec();
            if free.is_empty() {
                return Err(AfemError::EmptyConformingSpace {
                    degree: space.degree(),
                });
            }
            Ok(DofMap::subset(space.dim(), free))
        }
    }
}

/// Stiffness matrix of the form selected by `params.mode` on the unknowns `dofs`.
pub fn assemble_matrix(space: &HierarchicalSpace, params: &FormParams, dofs: &DofMap) -> Result<SystemMatrix> {
    params.validate()?;
    Ok(assemble_core(space, params, dofs, params.mode == Mode::Nitsche, true))
}

/// Matrix of the squared triple norm `|||v|||²` on the full space.
pub fn triple_norm_matrix(space: &HierarchicalSpace, params: &FormParams) -> SystemMatrix {
    assemble_core(space, params, &DofMap::identity(space.dim()), true, false)
}

fn assemble_core(
    space: &HierarchicalSpace,
    params: &FormParams,
    dofs: &DofMap,
    boundary: bool,
    consistency: bool,
) -> SystemMatrix {
    let mut a = SystemMatrix::with_pattern(pattern(space, dofs));
    let r = space.degree();
    let m = space.order();
    let n = params.quad_n;
    let rule = RefRule::new(n, m);
    let cells = space.partition().cells();

    for (k, cell) in cells.iter().enumerate() {
        let cb = space.cell_basis_at(k);
        let nb = cb.len();
        let inv_h = f64::from(cell.cells_per_side());
        // (Δu, Δv) on the cell: ∫ h⁻⁴ L_s L_t h² dξ.
        let scale = inv_h * inv_h;
        let mut lap = vec![0.0; nb];
        let mut local = vec![0.0; nb * nb];
        for i in 0..n {
            for j in 0..n {
                let w = rule.weights[i] * rule.weights[j] * scale;
                for (s, l) in lap.iter_mut().enumerate() {
                    *l = local_lap(cb.block(s, m), m, &rule.tables[i], &rule.tables[j]);
                }
                accumulate_outer(&mut local, &lap, &lap, w);
            }
        }
        scatter(&mut a, &cb.dofs, &local, dofs);
    }

    if boundary {
        let pn = projection_points(r, n);
        let proj = Projector::new(r - 1, pn);
        let prule = RefRule::new(pn, m);
        let edges = space.partition().edges();
        for edge in &edges.boundary {
            let cell = edge.owners[0];
            let cb = space.cell_basis(&cell).expect("boundary owner is active");
            let local = nitsche_edge_matrix(cell, edge, cb, m, params, &proj, &prule, consistency);
            scatter(&mut a, &cb.dofs, &local, dofs);
        }
    }
    a
}

/// Boundary contributions of one boundary edge to the Nitsche form; without
/// `consistency` only the penalty terms are kept.
#[allow(clippy::too_many_arguments)]
fn nitsche_edge_matrix(
    cell: Cell,
    edge: &Edge,
    cb: &crate::splines::CellBasis,
    m: usize,
    params: &FormParams,
    proj: &Projector,
    prule: &RefRule,
    consistency: bool,
) -> Vec<f64> {
    let nb = cb.len();
    let inv_h = f64::from(cell.cells_per_side());
    let pn = prule.nodes.len();
    let mp = proj.mp;
    // Projected Laplacians of the local basis.
    let mut pi: Vec<Vec<f64>> = Vec::with_capacity(nb);
    let mut samples = vec![0.0; pn * pn];
    for s in 0..nb {
        for i in 0..pn {
            for j in 0..pn {
                samples[i * pn + j] = inv_h * inv_h * local_lap(cb.block(s, m), m, &prule.tables[i], &prule.tables[j]);
            }
        }
        pi.push(proj.apply(&samples));
    }

    let (tn, tw) = gauss_legendre(params.quad_n);
    let pts = edge_local_points(&cell, edge, &tn);
    let nrm = edge.normal;
    let h = edge.length;
    let (g1, g2) = (params.gamma1 * h.powi(-3), params.gamma2 / h);
    let mut local = vec![0.0; nb * nb];
    let mut v = vec![0.0; nb];
    let mut dv = vec![0.0; nb];
    let mut p = vec![0.0; nb];
    let mut dp = vec![0.0; nb];
    for (xi, &w0) in pts.iter().zip(&tw) {
        let w = w0 * h;
        let tx = MonomialTable::new(xi[0], m);
        let ty = MonomialTable::new(xi[1], m);
        let px = MonomialTable::new(xi[0], mp);
        let py = MonomialTable::new(xi[1], mp);
        for s in 0..nb {
            let c = cb.block(s, m);
            v[s] = eval_coeffs(c, m, &tx, &ty, 0, 0);
            dv[s] = inv_h
                * (nrm[0] * eval_coeffs(c, m, &tx, &ty, 1, 0) + nrm[1] * eval_coeffs(c, m, &tx, &ty, 0, 1));
            p[s] = eval_coeffs(&pi[s], mp, &px, &py, 0, 0);
            dp[s] = inv_h
                * (nrm[0] * eval_coeffs(&pi[s], mp, &px, &py, 1, 0)
                    + nrm[1] * eval_coeffs(&pi[s], mp, &px, &py, 0, 1));
        }
        for s in 0..nb {
            for t in s..nb {
                let mut val = g1 * v[s] * v[t] + g2 * dv[s] * dv[t];
                if consistency {
                    val += -(p[s] * dv[t] + p[t] * dv[s]) + (dp[s] * v[t] + dp[t] * v[s]);
                }
                local[s * nb + t] += w * val;
            }
        }
    }
    local
}

/// Load vector `(f, B_λ)` on the unknowns `dofs`.
pub fn assemble_load(space: &HierarchicalSpace, f: &dyn Fn(Point) -> f64, quad_n: usize, dofs: &DofMap) -> LoadVector {
    let m = space.order();
    let rule = RefRule::new(quad_n, m);
    let mut b = vec![0.0; dofs.len()];
    for (k, cell) in space.partition().cells().iter().enumerate() {
        let cb = space.cell_basis_at(k);
        let area = cell.area();
        for i in 0..quad_n {
            for j in 0..quad_n {
                let x = cell.from_local([rule.nodes[i], rule.nodes[j]]);
                let fw = f(x) * rule.weights[i] * rule.weights[j] * area;
                if fw == 0.0 {
                    continue;
                }
                for (s, &dof) in cb.dofs.iter().enumerate() {
                    if let Some(g) = dofs.position(dof) {
                        b[g] += fw * eval_coeffs(cb.block(s, m), m, &rule.tables[i], &rule.tables[j], 0, 0);
                    }
                }
            }
        }
    }
    b
}

/// Stiffness matrix and load for the selected mode.
pub fn assemble(
    space: &Arc<HierarchicalSpace>,
    f: &dyn Fn(Point) -> f64,
    params: &FormParams,
) -> Result<DiscreteSystem> {
    let dofs = dof_map(space, params.mode)?;
    let matrix = assemble_matrix(space, params, &dofs)?;
    let load = assemble_load(space, f, params.quad_n, &dofs);
    Ok(DiscreteSystem { matrix, load, dofs })
}

/// Which boundary seminorm [`mesh_norm`] evaluates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TraceNorm {
    /// `Σ h_σ⁻³ ‖v‖²_σ`.
    ThreeHalves,
    /// `Σ h_σ⁻¹ ‖∂v/∂ν‖²_σ`.
    OneHalf,
}

/// Mesh-dependent boundary norm of `v` over the boundary edges of `p`.
pub fn mesh_norm(v: &dyn CellField, s: TraceNorm, p: &Partition, quad_n: usize) -> f64 {
    let mut sum = 0.0;
    for edge in &p.edges().boundary {
        let cell = edge.owners[0];
        let q = gauss_edge(edge, quad_n);
        let integral = q.integrate(|x| match s {
            TraceNorm::ThreeHalves => v.value(&cell, x).powi(2),
            TraceNorm::OneHalf => {
                let g = v.gradient(&cell, x);
                (g[0] * edge.normal[0] + g[1] * edge.normal[1]).powi(2)
            }
        });
        let weight = match s {
            TraceNorm::ThreeHalves => edge.length.powi(-3),
            TraceNorm::OneHalf => 1.0 / edge.length,
        };
        sum += weight * integral;
    }
    sum.sqrt()
}

/// `‖Δv‖²` summed cellwise over `p`.
pub fn laplacian_norm_sq(v: &dyn CellField, p: &Partition, quad_n: usize) -> f64 {
    p.cells()
        .iter()
        .map(|c| crate::quadrature::gauss_cell(c, quad_n).integrate(|x| v.laplacian(c, x).powi(2)))
        .sum()
}

/// `(‖Δv‖² + γ₁‖v‖²_{3/2} + γ₂‖∂v/∂ν‖²_{1/2})^{1/2}`.
pub fn triple_norm(v: &dyn CellField, p: &Partition, params: &FormParams) -> f64 {
    let n = params.quad_n;
    let lap = laplacian_norm_sq(v, p, n);
    let b32 = mesh_norm(v, TraceNorm::ThreeHalves, p, n);
    let b12 = mesh_norm(v, TraceNorm::OneHalf, p, n);
    (lap + params.gamma1 * b32 * b32 + params.gamma2 * b12 * b12).sqrt()
}

/// The inconsistency functional applied to `v`:
/// `∫_Γ (∂ν ΠΔu − ∂ν Δu) v − ∫_Γ (ΠΔu − Δu) ∂ν v`,
/// with `ΠΔu` projected on each boundary cell from Gauss samples of `Δu`.
pub fn inconsistency_apply(u: &ExactSolution, v: &SplineFunction, params: &FormParams) -> f64 {
    let space = v.space();
    let ctx = BoundaryProjection::new(space.degree(), params.quad_n);
    space
        .partition()
        .edges()
        .boundary
        .iter()
        .map(|edge| {
            let (owner, poly) = v.cell_poly(&edge.owners[0]);
            let pi = ctx.project(u, &owner);
            ctx.edge_term(u, &pi, &owner, &poly, edge)
        })
        .sum()
}

/// The inconsistency functional applied to every basis function.
pub fn inconsistency_vector(u: &ExactSolution, space: &HierarchicalSpace, params: &FormParams) -> Vec<f64> {
    let ctx = BoundaryProjection::new(space.degree(), params.quad_n);
    let m = space.order();
    let mut out = vec![0.0; space.dim()];
    for edge in &space.partition().edges().boundary {
        let cell = edge.owners[0];
        let cb = space.cell_basis(&cell).expect("boundary owner is active");
        let pi = ctx.project(u, &cell);
        for (k, &dof) in cb.dofs.iter().enumerate() {
            let poly = TensorPoly::from_coeffs(m, cb.block(k, m).to_vec());
            out[dof] += ctx.edge_term(u, &pi, &cell, &poly, edge);
        }
    }
    out
}

/// Projection of `Δu` on boundary cells and the edge integrals of the
/// inconsistency functional.
struct BoundaryProjection {
    mp: usize,
    proj: Projector,
    nodes: Vec<f64>,
    quad_n: usize,
}

impl BoundaryProjection {
    fn new(degree: usize, quad_n: usize) -> Self {
        let pn = projection_points(degree, quad_n);
        BoundaryProjection {
            mp: degree - 1,
            proj: Projector::new(degree - 1, pn),
            nodes: gauss_legendre(pn).0,
            quad_n,
        }
    }

    fn project(&self, u: &ExactSolution, cell: &Cell) -> TensorPoly {
        let pn = self.nodes.len();
        let mut samples = vec![0.0; pn * pn];
        for i in 0..pn {
            for j in 0..pn {
                samples[i * pn + j] = (u.lap)(cell.from_local([self.nodes[i], self.nodes[j]]));
            }
        }
        TensorPoly::from_coeffs(self.mp, self.proj.apply(&samples))
    }

    /// Edge contribution for the local polynomial `v` of `cell`.
    fn edge_term(&self, u: &ExactSolution, pi: &TensorPoly, cell: &Cell, v: &TensorPoly, edge: &Edge) -> f64 {
        let nrm = edge.normal;
        let d = |p: &TensorPoly, x: Point, a: u32, b: u32| crate::splines::eval_physical(cell, p, x, [a, b]);
        gauss_edge(edge, self.quad_n).integrate(|x| {
            let dpi = nrm[0] * d(pi, x, 1, 0) + nrm[1] * d(pi, x, 0, 1);
            let gl = (u.grad_lap)(x);
            let dlap = nrm[0] * gl[0] + nrm[1] * gl[1];
            let dv = nrm[0] * d(v, x, 1, 0) + nrm[1] * d(v, x, 0, 1);
            (dpi - dlap) * d(v, x, 0, 0) - (d(pi, x, 0, 0) - (u.lap)(x)) * dv
        })
    }
}
