//! Hierarchical spline spaces on graded partitions.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;

use super::bspline::{self, PieceCache};
use super::quasi::DualCache;
use crate::error::{AfemError, Result};
use crate::mesh::{BasisSupports, Cell, Partition, Side};
use crate::poly::TensorPoly;

/// A tensor B-spline `B^level_{px} ⊗ B^level_{py}` of the level grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct BasisKey {
    pub level: u32,
    pub index: [usize; 2],
}

impl BasisKey {
    /// Inclusive ranges of level cells on which the untruncated function is nonzero.
    pub fn support_range(&self, degree: usize) -> [(usize, usize); 2] {
        [
            bspline::support_cells(self.level, degree, self.index[0]),
            bspline::support_cells(self.level, degree, self.index[1]),
        ]
    }
}

/// The basis functions that do not vanish on one active cell, with their
/// local polynomial coefficients.
#[derive(Clone, Debug, Default)]
pub struct CellBasis {
    pub dofs: Vec<usize>,
    /// `dofs.len()` blocks of `m²` monomial coefficients, `m = degree + 1`.
    pub coeffs: Vec<f64>,
}

impl CellBasis {
    pub fn block(&self, k: usize, m: usize) -> &[f64] {
        &self.coeffs[k * m * m..(k + 1) * m * m]
    }

    pub fn len(&self) -> usize {
        self.dofs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dofs.is_empty()
    }
}

/// Hierarchical (optionally truncated) tensor B-spline space of degree `r`.
#[derive(Clone, Debug)]
pub struct HierarchicalSpace {
    degree: usize,
    truncated: bool,
    partition: Partition,
    keys: Vec<BasisKey>,
    lookup: HashMap<BasisKey, usize>,
    /// Aligned with `partition.cells()`.
    cells: Vec<CellBasis>,
    /// Indices into `partition.cells()`, ascending.
    supports: Vec<Vec<usize>>,
    dual_cells: Vec<Cell>,
    conforming: Vec<usize>,
}

/// Builds the hierarchical space of degree `degree` on `partition`.
///
/// Level-`l` functions are selected when all their level-`l` support cells
/// are covered by cells of level `l` or finer and at least one of them is an
/// active level-`l` cell.
pub fn build_space(partition: &Partition, degree: usize, truncated: bool) -> Result<HierarchicalSpace> {
    if !(2..=crate::MAX_DEGREE).contains(&degree) {
        return Err(AfemError::InvalidConfig(format!(
            "degree must be between 2 and {}, got {degree}",
            crate::MAX_DEGREE
        )));
    }
    let r = degree;
    let m = r + 1;
    let max_level = partition.max_level();
    let keys = select_functions(partition, r);
    let lookup = keys.iter().enumerate().map(|(k, key)| (*key, k)).collect();

    let refine: Vec<Vec<Vec<(usize, f64)>>> =
        (0..max_level).map(|l| bspline::refinement_matrix(l, r)).collect();
    let mut pieces = PieceCache::new(r);
    let mut cells = vec![CellBasis::default(); partition.len()];
    let mut supports = Vec::with_capacity(keys.len());

    for (dof, key) in keys.iter().enumerate() {
        let mut rep: BTreeMap<[usize; 2], f64> = BTreeMap::new();
        rep.insert(key.index, 1.0);
        let mut blocks: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for level in key.level..=max_level {
            if level > key.level {
                rep = refine_rep(&rep, &refine[(level - 1) as usize]);
                rep.retain(|q, _| {
                    let (any, all) = presence(partition, level, r, *q);
                    any && !(truncated && all)
                });
            }
            if rep.is_empty() {
                break;
            }
            for (q, &c) in &rep {
                let [(x0, x1), (y0, y1)] = BasisKey { level, index: *q }.support_range(r);
                for a in x0..=x1 {
                    for b in y0..=y1 {
                        let cell = Cell::new(level, a as u32, b as u32);
                        let Some(ci) = partition.index_of(&cell) else { continue };
                        let px: Vec<f64> = pieces.piece(level, q[0], a).to_vec();
                        let py = pieces.piece(level, q[1], b);
                        let block = blocks.entry(ci).or_insert_with(|| vec![0.0; m * m]);
                        for (s, pa) in px.iter().enumerate() {
                            for (t, pb) in py.iter().enumerate() {
                                block[s * m + t] += c * pa * pb;
                            }
                        }
                    }
                }
            }
        }
        let mut support = Vec::with_capacity(blocks.len());
        for (ci, block) in blocks {
            cells[ci].dofs.push(dof);
            cells[ci].coeffs.extend_from_slice(&block);
            support.push(ci);
        }
        supports.push(support);
    }

    let mut duals = DualCache::new(r);
    let dual_cells = keys.iter().map(|k| dual_cell(partition, &mut duals, k)).collect();
    let mut space = HierarchicalSpace {
        degree,
        truncated,
        partition: partition.clone(),
        keys,
        lookup,
        cells,
        supports,
        dual_cells,
        conforming: Vec::new(),
    };
    space.conforming = space.find_conforming();
    Ok(space)
}

fn select_functions(partition: &Partition, r: usize) -> Vec<BasisKey> {
    let mut keys = Vec::new();
    for level in 0..=partition.max_level() {
        let mut candidates = BTreeSet::new();
        for c in partition.cells().iter().filter(|c| c.level == level) {
            for px in bspline::functions_on_cell(r, c.i as usize) {
                for py in bspline::functions_on_cell(r, c.j as usize) {
                    candidates.insert([px, py]);
                }
            }
        }
        for q in candidates {
            if presence(partition, level, r, q).1 {
                keys.push(BasisKey { level, index: q });
            }
        }
    }
    keys
}

/// Whether any / all level cells in the support of level function `q` are
/// covered by cells of that level or finer.
fn presence(partition: &Partition, level: u32, r: usize, q: [usize; 2]) -> (bool, bool) {
    let [(x0, x1), (y0, y1)] = BasisKey { level, index: q }.support_range(r);
    let (mut any, mut all) = (false, true);
    for a in x0..=x1 {
        for b in y0..=y1 {
            if partition.is_node(&Cell::new(level, a as u32, b as u32)) {
                any = true;
            } else {
                all = false;
            }
        }
    }
    (any, all)
}

fn refine_rep(rep: &BTreeMap<[usize; 2], f64>, rows: &[Vec<(usize, f64)>]) -> BTreeMap<[usize; 2], f64> {
    let mut out = BTreeMap::new();
    for (q, &c) in rep {
        for &(fx, cx) in &rows[q[0]] {
            for &(fy, cy) in &rows[q[1]] {
                *out.entry([fx, fy]).or_insert(0.0) += c * cx * cy;
            }
        }
    }
    out
}

/// Active cell of the function's own level on which its local dual has the
/// smallest L¹ norm; ties go to the lowest cell key. Small duals keep the
/// quasi-interpolant's rounding error down.
fn dual_cell(partition: &Partition, duals: &mut DualCache, key: &BasisKey) -> Cell {
    let [(x0, x1), (y0, y1)] = key.support_range(duals.degree());
    let mut best: Option<(f64, Cell)> = None;
    for a in x0..=x1 {
        for b in y0..=y1 {
            let cell = Cell::new(key.level, a as u32, b as u32);
            if !partition.is_active(&cell) {
                continue;
            }
            let score = duals.l1(key.level, key.index[0], a) * duals.l1(key.level, key.index[1], b);
            match best {
                Some((bs, bc)) if bs < score || (bs == score && bc < cell) => {}
                _ => best = Some((score, cell)),
            }
        }
    }
    best.expect("selected functions touch an active cell of their level").1
}

impl HierarchicalSpace {
    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Coefficients per direction of a local polynomial, `degree + 1`.
    pub fn order(&self) -> usize {
        self.degree + 1
    }

    pub fn truncated(&self) -> bool {
        self.truncated
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn dim(&self) -> usize {
        self.keys.len()
    }

    pub fn keys(&self) -> &[BasisKey] {
        &self.keys
    }

    pub fn key(&self, index: usize) -> BasisKey {
        self.keys[index]
    }

    pub fn index_of(&self, key: &BasisKey) -> Option<usize> {
        self.lookup.get(key).copied()
    }

    /// Local basis of the active cell with position `k` in `partition().cells()`.
    pub fn cell_basis_at(&self, k: usize) -> &CellBasis {
        &self.cells[k]
    }

    pub fn cell_basis(&self, cell: &Cell) -> Option<&CellBasis> {
        self.partition.index_of(cell).map(|k| &self.cells[k])
    }

    /// Positions (into `partition().cells()`) of the cells supporting `index`.
    pub fn support_positions(&self, index: usize) -> &[usize] {
        &self.supports[index]
    }

    /// Cell on which the dual functional of `index` lives.
    pub fn dual_cell(&self, index: usize) -> Cell {
        self.dual_cells[index]
    }

    /// Local polynomial of basis function `index` on `cell`, if it does not vanish there.
    pub fn basis_poly(&self, index: usize, cell: &Cell) -> Option<TensorPoly> {
        let cb = self.cell_basis(cell)?;
        let k = cb.dofs.iter().position(|&d| d == index)?;
        let m = self.order();
        Some(TensorPoly::from_coeffs(m, cb.block(k, m).to_vec()))
    }

    /// Functions whose value and normal derivative vanish on the whole boundary.
    pub fn conforming_indices(&self) -> &[usize] {
        &self.conforming
    }

    fn find_conforming(&self) -> Vec<usize> {
        let m = self.order();
        let mut ok = vec![true; self.dim()];
        for (cell, cb) in self.partition.cells().iter().zip(&self.cells) {
            let sides: Vec<Side> = Side::ALL
                .into_iter()
                .filter(|s| cell.on_boundary(*s))
                .collect();
            if sides.is_empty() {
                continue;
            }
            for (k, &dof) in cb.dofs.iter().enumerate() {
                if ok[dof] && !clamped_on(cb.block(k, m), m, &sides) {
                    ok[dof] = false;
                }
            }
        }
        (0..self.dim()).filter(|&k| ok[k]).collect()
    }
}

/// True when the polynomial and its normal derivative vanish on all `sides`
/// of the local square.
fn clamped_on(c: &[f64], m: usize, sides: &[Side]) -> bool {
    let scale = c.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let tol = 1e-12 * scale.max(f64::MIN_POSITIVE);
    let small = |v: f64| v.abs() <= tol;
    sides.iter().all(|side| match side {
        // ξ = 0: coefficients of ξ⁰ and ξ¹.
        Side::Left => (0..m).all(|b| small(c[b]) && small(c[m + b])),
        Side::Bottom => (0..m).all(|a| small(c[a * m]) && small(c[a * m + 1])),
        // ξ = 1: Σ_a c_ab and Σ_a a·c_ab for each b.
        Side::Right => (0..m).all(|b| {
            let v: f64 = (0..m).map(|a| c[a * m + b]).sum();
            let d: f64 = (0..m).map(|a| a as f64 * c[a * m + b]).sum();
            small(v) && small(d)
        }),
        Side::Top => (0..m).all(|a| {
            let v: f64 = (0..m).map(|b| c[a * m + b]).sum();
            let d: f64 = (0..m).map(|b| b as f64 * c[a * m + b]).sum();
            small(v) && small(d)
        }),
    })
}

impl BasisSupports for HierarchicalSpace {
    fn functions_on(&self, cell: &Cell) -> Vec<usize> {
        self.cell_basis(cell).map(|cb| cb.dofs.clone()).unwrap_or_default()
    }

    fn support_of(&self, index: usize) -> Vec<Cell> {
        let cells = self.partition.cells();
        self.supports[index].iter().map(|&k| cells[k]).collect()
    }
}
