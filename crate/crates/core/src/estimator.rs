//! Residual error indicators, data oscillation and Dörfler marking.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::assembly::Projector;
use crate::error::{AfemError, Result};
use crate::mesh::{BasisSupports, Cell, EdgeKind, Partition};
use crate::poly::{MonomialTable, TensorPoly};
use crate::quadrature::{gauss_cell, gauss_edge, gauss_legendre};
use crate::splines::{eval_physical, SplineFunction};
use crate::Point;

/// Squared indicator components of one cell.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CellIndicator {
    pub cell: Cell,
    pub eta_sq: f64,
    /// `h⁴ ‖f − Δ²V‖²`.
    pub interior_sq: f64,
    /// Half of `h_σ³ ‖[∂ΔV/∂n]‖²` summed over interior facets.
    pub jump1_sq: f64,
    /// Half of `h_σ ‖[ΔV]‖²` summed over interior facets.
    pub jump2_sq: f64,
    /// `h⁴ ‖f − f̄‖²`.
    pub osc_sq: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Indicators {
    pub cells: Vec<CellIndicator>,
    pub total_sq: f64,
}

impl Indicators {
    pub fn eta(&self) -> f64 {
        self.total_sq.sqrt()
    }

    pub fn osc_sq(&self) -> f64 {
        self.cells.iter().map(|c| c.osc_sq).sum()
    }

    /// `Σ η²` over the given cells.
    pub fn sum_over(&self, cells: &[Cell]) -> f64 {
        let by_cell: HashMap<Cell, f64> = self.cells.iter().map(|c| (c.cell, c.eta_sq)).collect();
        cells.iter().filter_map(|c| by_cell.get(c)).sum()
    }

    /// One `level i j eta_sq interior_sq jump1_sq jump2_sq osc_sq` line per cell.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for c in &self.cells {
            let _ = writeln!(
                s,
                "{} {} {} {:e} {:e} {:e} {:e} {:e}",
                c.cell.level, c.cell.i, c.cell.j, c.eta_sq, c.interior_sq, c.jump1_sq, c.jump2_sq, c.osc_sq
            );
        }
        s
    }
}

/// Polynomial piece of `V` used on a (possibly finer) cell.
struct Piece {
    owner: Cell,
    poly: TensorPoly,
}

impl Piece {
    fn of(v: &SplineFunction, cell: &Cell) -> Self {
        let (owner, poly) = v.cell_poly(cell);
        Piece { owner, poly }
    }

    fn d(&self, x: Point, a: u32, b: u32) -> f64 {
        eval_physical(&self.owner, &self.poly, x, [a, b])
    }

    fn lap(&self, x: Point) -> f64 {
        self.d(x, 2, 0) + self.d(x, 0, 2)
    }

    fn grad_lap(&self, x: Point) -> [f64; 2] {
        [self.d(x, 3, 0) + self.d(x, 1, 2), self.d(x, 2, 1) + self.d(x, 0, 3)]
    }

    fn bilap(&self, x: Point) -> f64 {
        self.d(x, 4, 0) + 2.0 * self.d(x, 2, 2) + self.d(x, 0, 4)
    }
}

/// Indicator of `cell` for `v` on the partition `p`, which may refine the
/// partition of `v`'s space.
pub fn indicator(
    v: &SplineFunction,
    f: &dyn Fn(Point) -> f64,
    cell: &Cell,
    p: &Partition,
    quad_n: usize,
) -> CellIndicator {
    let r = v.space().degree();
    let h = cell.side();
    let here = Piece::of(v, cell);
    let q = gauss_cell(cell, quad_n);
    let interior_sq = h.powi(4) * q.integrate(|x| (f(x) - here.bilap(x)).powi(2));
    let osc_sq = oscillation_sq(f, cell, r, quad_n);

    let (mut jump1_sq, mut jump2_sq) = (0.0, 0.0);
    for edge in p.cell_edges(cell) {
        if edge.kind != EdgeKind::Interior {
            continue;
        }
        let plus = Piece::of(v, &edge.owners[0]);
        let minus = Piece::of(v, &edge.owners[1]);
        let n = edge.normal;
        let qe = gauss_edge(&edge, quad_n);
        let (j1, j2) = qe.points.iter().zip(&qe.weights).fold((0.0, 0.0), |(a, b), (x, w)| {
            let gp = plus.grad_lap(*x);
            let gm = minus.grad_lap(*x);
            let dn = n[0] * (gp[0] - gm[0]) + n[1] * (gp[1] - gm[1]);
            let dl = plus.lap(*x) - minus.lap(*x);
            (a + w * dn * dn, b + w * dl * dl)
        });
        let hs = edge.length;
        jump1_sq += 0.5 * hs.powi(3) * j1;
        jump2_sq += 0.5 * hs * j2;
    }
    CellIndicator {
        cell: *cell,
        eta_sq: interior_sq + jump1_sq + jump2_sq,
        interior_sq,
        jump1_sq,
        jump2_sq,
        osc_sq,
    }
}

/// Indicators of `v` on every cell of its own partition.
pub fn estimate_all(v: &SplineFunction, f: &dyn Fn(Point) -> f64, quad_n: usize) -> Indicators {
    estimate_on(v, f, v.space().partition(), quad_n)
}

/// Indicators of `v` on every cell of `p`, a refinement of `v`'s partition.
pub fn estimate_on(v: &SplineFunction, f: &dyn Fn(Point) -> f64, p: &Partition, quad_n: usize) -> Indicators {
    let cells: Vec<CellIndicator> = p.cells().iter().map(|c| indicator(v, f, c, p, quad_n)).collect();
    let total_sq = cells.iter().map(|c| c.eta_sq).sum();
    Indicators { cells, total_sq }
}

/// `h⁴ ‖f − f̄‖²` with `f̄` the L² projection onto tensor degree `r − 2`.
pub fn oscillation_sq(f: &dyn Fn(Point) -> f64, cell: &Cell, degree: usize, quad_n: usize) -> f64 {
    let n = quad_n.max(degree + 1);
    let mp = degree - 1;
    let proj = Projector::new(mp, n);
    let (nodes, weights) = gauss_legendre(n);
    let mut samples = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            samples[i * n + j] = f(cell.from_local([nodes[i], nodes[j]]));
        }
    }
    let fbar = proj.apply(&samples);
    let mut err = 0.0;
    for i in 0..n {
        let tx = MonomialTable::new(nodes[i], mp);
        for j in 0..n {
            let ty = MonomialTable::new(nodes[j], mp);
            let d = samples[i * n + j] - crate::poly::eval_coeffs(&fbar, mp, &tx, &ty, 0, 0);
            err += weights[i] * weights[j] * d * d;
        }
    }
    cell.side().powi(4) * err * cell.area()
}

/// `h² ‖f − f̄‖` on `cell`.
pub fn oscillation(f: &dyn Fn(Point) -> f64, cell: &Cell, degree: usize, quad_n: usize) -> f64 {
    oscillation_sq(f, cell, degree, quad_n).sqrt()
}

/// Cells chosen by the bulk criterion.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MarkedSet {
    /// In marking order: descending `η²`, ties by cell key.
    pub cells: Vec<Cell>,
    pub theta: f64,
    /// `Σ_marked η² / Σ η²` (zero when nothing is marked).
    pub achieved_fraction: f64,
}

/// Smallest greedy set with `Σ_M η² ≥ θ Σ η²`.
pub fn dorfler_mark(ind: &Indicators, theta: f64) -> Result<MarkedSet> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(AfemError::InvalidConfig(format!(
            "theta must lie in (0, 1], got {theta}"
        )));
    }
    let total = ind.total_sq;
    if !(total > 0.0) {
        return Ok(MarkedSet {
            cells: Vec::new(),
            theta,
            achieved_fraction: 0.0,
        });
    }
    let mut order: Vec<&CellIndicator> = ind.cells.iter().filter(|c| c.eta_sq > 0.0).collect();
    // Values equal up to rounding count as ties, so symmetric data gives the
    // same marked set regardless of how the indicators were rounded.
    order.sort_by(|a, b| {
        coarse_key(b.eta_sq)
            .cmp(&coarse_key(a.eta_sq))
            .then(a.cell.cmp(&b.cell))
    });
    let mut cells = Vec::new();
    let mut sum = 0.0;
    for c in order {
        if theta < 1.0 && sum >= theta * total {
            break;
        }
        sum += c.eta_sq;
        cells.push(c.cell);
    }
    Ok(MarkedSet {
        cells,
        theta,
        achieved_fraction: sum / total,
    })
}

/// Positive `v` with the last 12 mantissa bits dropped (about 1e-12 relative).
fn coarse_key(v: f64) -> u64 {
    v.to_bits() >> 12
}

/// `|η(V,τ) − η(W,τ)|` and `|V − W|_{H²(ω_τ)}`.
pub fn lipschitz_gap(
    v: &SplineFunction,
    w: &SplineFunction,
    f: &dyn Fn(Point) -> f64,
    cell: &Cell,
    quad_n: usize,
) -> (f64, f64) {
    let p = v.space().partition();
    let ev = indicator(v, f, cell, p, quad_n).eta_sq.sqrt();
    let ew = indicator(w, f, cell, p, quad_n).eta_sq.sqrt();
    let mut semi = 0.0;
    for t in p.support_extension(v.space().as_ref(), cell) {
        let a = Piece::of(v, &t);
        let b = Piece::of(w, &t);
        semi += gauss_cell(&t, quad_n).integrate(|x| {
            let xx = a.d(x, 2, 0) - b.d(x, 2, 0);
            let xy = a.d(x, 1, 1) - b.d(x, 1, 1);
            let yy = a.d(x, 0, 2) - b.d(x, 0, 2);
            xx * xx + 2.0 * xy * xy + yy * yy
        });
    }
    ((ev - ew).abs(), semi.sqrt())
}

/// Cells of `p` whose indicator support reaches `cell`: used by tests that
/// perturb a function away from a cell.
pub fn influence_region<S: BasisSupports + ?Sized>(p: &Partition, space: &S, cell: &Cell) -> Vec<Cell> {
    let mut out: Vec<Cell> = p.support_extension(space, cell).into_iter().collect();
    for e in p.cell_edges(cell) {
        for o in &e.owners {
            out.extend(p.support_extension(space, o));
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}
