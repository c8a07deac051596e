//! Graded quadtree partitions of the unit square.
//!
//! A [`Partition`] is a set of active dyadic cells that tile `[0,1]²`. It is
//! immutable: [`Partition::refine`] returns a new value. Refinement splits the
//! marked cells and then closes the mesh so that edge-adjacent active cells
//! differ by at most one level.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{AfemError, Result};
use crate::Point;

/// A dyadic square `[i·h, (i+1)·h] × [j·h, (j+1)·h]` with `h = 2^-level`.
///
/// The derived ordering `(level, i, j)` is the deterministic cell key used
/// throughout the crate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub level: u32,
    pub i: u32,
    pub j: u32,
}

/// One of the four sides of a cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Left, Side::Right, Side::Bottom, Side::Top];

    pub fn outward_normal(self) -> [f64; 2] {
        match self {
            Side::Left => [-1.0, 0.0],
            Side::Right => [1.0, 0.0],
            Side::Bottom => [0.0, -1.0],
            Side::Top => [0.0, 1.0],
        }
    }

    pub fn opposite(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
            Side::Bottom => Side::Top,
            Side::Top => Side::Bottom,
        }
    }

    /// Direction along which an edge on this side runs.
    pub fn axis(self) -> Axis {
        match self {
            Side::Left | Side::Right => Axis::Y,
            Side::Bottom | Side::Top => Axis::X,
        }
    }
}

impl Cell {
    pub const ROOT: Cell = Cell { level: 0, i: 0, j: 0 };

    pub fn new(level: u32, i: u32, j: u32) -> Self {
        debug_assert!(level < 31 && i < (1 << level) && j < (1 << level));
        Cell { level, i, j }
    }

    /// Number of cells per direction at this cell's level.
    pub fn cells_per_side(&self) -> u32 {
        1 << self.level
    }

    pub fn side(&self) -> f64 {
        1.0 / f64::from(self.cells_per_side())
    }

    pub fn area(&self) -> f64 {
        self.side() * self.side()
    }

    pub fn origin(&self) -> Point {
        let h = self.side();
        [f64::from(self.i) * h, f64::from(self.j) * h]
    }

    pub fn center(&self) -> Point {
        let h = self.side();
        [(f64::from(self.i) + 0.5) * h, (f64::from(self.j) + 0.5) * h]
    }

    /// `[x0, x1, y0, y1]`.
    pub fn bounds(&self) -> [f64; 4] {
        let h = self.side();
        let [x0, y0] = self.origin();
        [x0, x0 + h, y0, y0 + h]
    }

    pub fn to_local(&self, x: Point) -> Point {
        let n = f64::from(self.cells_per_side());
        [x[0] * n - f64::from(self.i), x[1] * n - f64::from(self.j)]
    }

    pub fn from_local(&self, xi: Point) -> Point {
        let h = self.side();
        [(f64::from(self.i) + xi[0]) * h, (f64::from(self.j) + xi[1]) * h]
    }

    pub fn contains_point(&self, x: Point) -> bool {
        let [x0, x1, y0, y1] = self.bounds();
        x[0] >= x0 && x[0] <= x1 && x[1] >= y0 && x[1] <= y1
    }

    /// Children in the order (0,0), (1,0), (0,1), (1,1).
    pub fn children(&self) -> [Cell; 4] {
        let (l, i, j) = (self.level + 1, 2 * self.i, 2 * self.j);
        [
            Cell::new(l, i, j),
            Cell::new(l, i + 1, j),
            Cell::new(l, i, j + 1),
            Cell::new(l, i + 1, j + 1),
        ]
    }

    pub fn parent(&self) -> Option<Cell> {
        (self.level > 0).then(|| Cell::new(self.level - 1, self.i / 2, self.j / 2))
    }

    /// Ancestor at `level` (the cell itself when `level == self.level`).
    pub fn ancestor_at(&self, level: u32) -> Cell {
        assert!(level <= self.level);
        let shift = self.level - level;
        Cell::new(level, self.i >> shift, self.j >> shift)
    }

    /// True when `other` is this cell or one of its descendants.
    pub fn contains_cell(&self, other: &Cell) -> bool {
        other.level >= self.level && other.ancestor_at(self.level) == *self
    }

    /// Same-level neighbour across `side`, or `None` on the domain boundary.
    pub fn neighbor(&self, side: Side) -> Option<Cell> {
        let n = self.cells_per_side();
        match side {
            Side::Left => (self.i > 0).then(|| Cell::new(self.level, self.i - 1, self.j)),
            Side::Right => (self.i + 1 < n).then(|| Cell::new(self.level, self.i + 1, self.j)),
            Side::Bottom => (self.j > 0).then(|| Cell::new(self.level, self.i, self.j - 1)),
            Side::Top => (self.j + 1 < n).then(|| Cell::new(self.level, self.i, self.j + 1)),
        }
    }

    pub fn on_boundary(&self, side: Side) -> bool {
        self.neighbor(side).is_none()
    }

    /// The two children touching `side`.
    fn children_on(&self, side: Side) -> [Cell; 2] {
        let c = self.children();
        match side {
            Side::Left => [c[0], c[2]],
            Side::Right => [c[1], c[3]],
            Side::Bottom => [c[0], c[1]],
            Side::Top => [c[2], c[3]],
        }
    }
}

/// Axis along which an edge runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Axis {
    X,
    Y,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdgeKind {
    Interior,
    Boundary,
}

/// An axis-aligned edge of the partition.
///
/// Interior edges are always full facets of their finer owner. For interior
/// edges `owners[0]` is the owner with the lower cell key and the normal is
/// `+x` for vertical and `+y` for horizontal edges; boundary edges carry the
/// outward normal and a single owner.
#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    pub kind: EdgeKind,
    pub axis: Axis,
    /// Level of the finer owner; the edge length is `2^-level`.
    pub level: u32,
    pub start: Point,
    pub length: f64,
    pub normal: [f64; 2],
    pub owners: Vec<Cell>,
}

impl Edge {
    pub fn end(&self) -> Point {
        match self.axis {
            Axis::X => [self.start[0] + self.length, self.start[1]],
            Axis::Y => [self.start[0], self.start[1] + self.length],
        }
    }

    /// Point at parameter `t ∈ [0,1]` along the edge.
    pub fn point_at(&self, t: f64) -> Point {
        match self.axis {
            Axis::X => [self.start[0] + t * self.length, self.start[1]],
            Axis::Y => [self.start[0], self.start[1] + t * self.length],
        }
    }

    pub fn midpoint(&self) -> Point {
        self.point_at(0.5)
    }

    fn key(&self) -> (u32, Axis, u64, u64) {
        let n = f64::from(1u32 << self.level);
        (
            self.level,
            self.axis,
            (self.start[0] * n).round() as u64,
            (self.start[1] * n).round() as u64,
        )
    }
}

/// Interior and boundary edges of a partition in deterministic order.
#[derive(Clone, Debug, Default)]
pub struct EdgeSet {
    pub interior: Vec<Edge>,
    pub boundary: Vec<Edge>,
}

/// Shape-regularity measurements of a partition and its spline space.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ShapeReport {
    /// Largest `h_τ / h_σ` over cells and their facets.
    pub max_edge_ratio: f64,
    /// Largest `diam(ω_τ) / h_τ`.
    pub max_extension_ratio: f64,
    /// Largest number of cells in a support extension `ω_τ`.
    pub max_overlap_count: usize,
}

/// Access to basis supports, implemented by spline spaces.
pub trait BasisSupports {
    /// Indices of basis functions that do not vanish on `cell`.
    fn functions_on(&self, cell: &Cell) -> Vec<usize>;
    /// Active cells on which basis function `index` does not vanish.
    fn support_of(&self, index: usize) -> Vec<Cell>;
}

/// A graded quadtree partition of the unit square.
#[derive(Clone, Debug)]
pub struct Partition {
    cells: Vec<Cell>,
    index: HashMap<Cell, usize>,
    /// Active cells and all of their ancestors.
    nodes: HashSet<Cell>,
    generation: u64,
    max_level: u32,
}

/// Uniform partition with `4^levels` cells.
pub fn uniform_partition(levels: u32) -> Partition {
    Partition::uniform(levels)
}

impl PartialEq for Partition {
    fn eq(&self, other: &Self) -> bool {
        self.cells == other.cells
    }
}

impl Partition {
    pub fn uniform(levels: u32) -> Self {
        let n = 1u32 << levels;
        let cells = (0..n)
            .flat_map(|i| (0..n).map(move |j| Cell::new(levels, i, j)))
            .collect();
        Self::from_sorted(cells, 0)
    }

    /// Builds a partition from an arbitrary list of cells, validating that the
    /// cells tile the unit square without overlap.
    pub fn from_cells(cells: impl IntoIterator<Item = Cell>) -> Result<Self> {
        let mut cells: Vec<Cell> = cells.into_iter().collect();
        cells.sort_unstable();
        cells.dedup();
        let set: HashSet<Cell> = cells.iter().copied().collect();
        for c in &cells {
            let mut a = *c;
            while let Some(p) = a.parent() {
                if set.contains(&p) {
                    return Err(AfemError::InvalidConfig(format!(
                        "cells {p:?} and {c:?} overlap"
                    )));
                }
                a = p;
            }
        }
        let area: f64 = cells.iter().map(Cell::area).sum();
        if (area - 1.0).abs() > 1e-12 {
            return Err(AfemError::InvalidConfig(format!(
                "cells cover an area of {area}, expected 1"
            )));
        }
        Ok(Self::from_sorted(cells, 0))
    }

    fn from_sorted(cells: Vec<Cell>, generation: u64) -> Self {
        let index = cells.iter().enumerate().map(|(k, c)| (*c, k)).collect();
        let mut nodes = HashSet::with_capacity(cells.len() * 2);
        for c in &cells {
            let mut a = *c;
            while nodes.insert(a) {
                match a.parent() {
                    Some(p) => a = p,
                    None => break,
                }
            }
        }
        let max_level = cells.iter().map(|c| c.level).max().unwrap_or(0);
        Partition {
            cells,
            index,
            nodes,
            generation,
            max_level,
        }
    }

    /// Active cells in key order.
    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn max_level(&self) -> u32 {
        self.max_level
    }

    pub fn is_active(&self, c: &Cell) -> bool {
        self.index.contains_key(c)
    }

    pub fn index_of(&self, c: &Cell) -> Option<usize> {
        self.index.get(c).copied()
    }

    /// True when `c` is active or an ancestor of active cells, i.e. the region
    /// of `c` is covered by cells of level `c.level` or finer.
    pub fn is_node(&self, c: &Cell) -> bool {
        self.nodes.contains(c)
    }

    /// The active cell that contains `c` (itself or an ancestor), if any.
    pub fn active_ancestor(&self, c: &Cell) -> Option<Cell> {
        (0..=c.level)
            .rev()
            .map(|l| c.ancestor_at(l))
            .find(|a| self.is_active(a))
    }

    /// Active cell containing `x`. Points on cell boundaries belong to the
    /// cell on the upper/right side, except on the far boundary of the domain.
    pub fn locate(&self, x: Point) -> Cell {
        for level in 0..=self.max_level {
            let n = 1u32 << level;
            let idx = |t: f64| ((t * f64::from(n)).floor().max(0.0) as u32).min(n - 1);
            let c = Cell::new(level, idx(x[0]), idx(x[1]));
            if self.is_active(&c) {
                return c;
            }
        }
        unreachable!("partition does not cover {x:?}")
    }

    /// Returns true when every cell of `self` lies inside an active cell of
    /// `coarse`.
    pub fn is_refinement_of(&self, coarse: &Partition) -> bool {
        self.cells
            .iter()
            .all(|c| coarse.active_ancestor(c).is_some())
    }

    /// Splits every marked cell into its four children and closes the mesh so
    /// that edge-adjacent cells differ by at most one level.
    pub fn refine(&self, marked: &[Cell]) -> Result<Partition> {
        if let Some(c) = marked.iter().find(|c| !self.is_active(c)) {
            return Err(AfemError::StaleMarking(*c));
        }
        if marked.is_empty() {
            return Ok(self.clone());
        }
        let mut active: HashSet<Cell> = self.cells.iter().copied().collect();
        for c in marked {
            if active.contains(c) {
                split_with_closure(&mut active, *c);
            }
        }
        let mut cells: Vec<Cell> = active.into_iter().collect();
        cells.sort_unstable();
        Ok(Self::from_sorted(cells, self.generation + 1))
    }

    /// Edges on the boundary of `cell`. Sides shared with finer neighbours are
    /// split into the neighbours' facets.
    pub fn cell_edges(&self, cell: &Cell) -> Vec<Edge> {
        let mut out = Vec::new();
        for side in Side::ALL {
            self.collect_side_edges(cell, side, &mut out);
        }
        out
    }

    fn collect_side_edges(&self, cell: &Cell, side: Side, out: &mut Vec<Edge>) {
        let Some(nb) = cell.neighbor(side) else {
            out.push(facet(cell, side, EdgeKind::Boundary, vec![*cell]));
            return;
        };
        if self.is_active(&nb) {
            out.push(interior_facet(cell, side, *cell, nb));
        } else if self.is_node(&nb) {
            // Finer neighbours: descend to the active cells touching this side.
            let mut stack = vec![nb];
            while let Some(c) = stack.pop() {
                if self.is_active(&c) {
                    out.push(interior_facet(&c, side.opposite(), c, *cell));
                } else {
                    stack.extend(c.children_on(side.opposite()));
                }
            }
        } else {
            let coarse = self
                .active_ancestor(&nb)
                .expect("partition covers the neighbour region");
            out.push(interior_facet(cell, side, *cell, coarse));
        }
    }

    /// All interior and boundary edges, each listed once.
    pub fn edges(&self) -> EdgeSet {
        let mut interior = BTreeMap::new();
        let mut boundary = BTreeMap::new();
        for c in &self.cells {
            for e in self.cell_edges(c) {
                let map = match e.kind {
                    EdgeKind::Interior => &mut interior,
                    EdgeKind::Boundary => &mut boundary,
                };
                map.entry(e.key()).or_insert(e);
            }
        }
        EdgeSet {
            interior: interior.into_values().collect(),
            boundary: boundary.into_values().collect(),
        }
    }

    /// Plain-text dump: one `level i j` line per active cell in key order.
    pub fn dump(&self) -> String {
        let mut s = String::with_capacity(self.cells.len() * 12);
        for c in &self.cells {
            let _ = writeln!(s, "{} {} {}", c.level, c.i, c.j);
        }
        s
    }

    /// Parses the output of [`Partition::dump`].
    pub fn parse_dump(text: &str) -> Result<Partition> {
        let mut cells = Vec::new();
        for (k, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let parsed: Vec<u32> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| AfemError::Parse {
                    line: k + 1,
                    message: format!("{e}"),
                })?;
            match parsed[..] {
                [level, i, j] if level < 31 && i < (1 << level) && j < (1 << level) => {
                    cells.push(Cell::new(level, i, j))
                }
                _ => {
                    return Err(AfemError::Parse {
                        line: k + 1,
                        message: format!("expected `level i j`, found `{line}`"),
                    })
                }
            }
        }
        Partition::from_cells(cells)
    }

    /// Support extension `ω_τ`: all active cells on which some basis function
    /// that does not vanish on `cell` is nonzero.
    pub fn support_extension<S: BasisSupports + ?Sized>(
        &self,
        space: &S,
        cell: &Cell,
    ) -> BTreeSet<Cell> {
        space
            .functions_on(cell)
            .into_iter()
            .flat_map(|f| space.support_of(f))
            .collect()
    }

    /// Exact shape-regularity maxima for this partition and `space`.
    pub fn shape_report<S: BasisSupports + ?Sized>(&self, space: &S) -> ShapeReport {
        let mut max_edge_ratio: f64 = 0.0;
        let mut max_extension_ratio: f64 = 0.0;
        let mut max_overlap_count = 0;
        for c in &self.cells {
            let h = c.side();
            for e in self.cell_edges(c) {
                max_edge_ratio = max_edge_ratio.max(h / e.length);
            }
            let ext = self.support_extension(space, c);
            max_overlap_count = max_overlap_count.max(ext.len());
            let corners: Vec<Point> = ext
                .iter()
                .flat_map(|t| {
                    let [x0, x1, y0, y1] = t.bounds();
                    [[x0, y0], [x1, y0], [x0, y1], [x1, y1]]
                })
                .collect();
            let mut diam: f64 = 0.0;
            for (a, p) in corners.iter().enumerate() {
                for q in &corners[a + 1..] {
                    diam = diam.max((p[0] - q[0]).hypot(p[1] - q[1]));
                }
            }
            max_extension_ratio = max_extension_ratio.max(diam / h);
        }
        ShapeReport {
            max_edge_ratio,
            max_extension_ratio,
            max_overlap_count,
        }
    }
}

/// Splits `cell`, first refining any coarser edge neighbours so that the new
/// children differ by at most one level from everything they touch.
fn split_with_closure(active: &mut HashSet<Cell>, cell: Cell) {
    for side in Side::ALL {
        let Some(nb) = cell.neighbor(side) else { continue };
        loop {
            let covering = (0..nb.level)
                .rev()
                .map(|l| nb.ancestor_at(l))
                .find(|a| active.contains(a));
            match covering {
                Some(coarse) => split_with_closure(active, coarse),
                None => break,
            }
        }
    }
    if active.remove(&cell) {
        active.extend(cell.children());
    }
}

fn facet(cell: &Cell, side: Side, kind: EdgeKind, owners: Vec<Cell>) -> Edge {
    let [x0, x1, y0, y1] = cell.bounds();
    let start = match side {
        Side::Left | Side::Bottom => [x0, y0],
        Side::Right => [x1, y0],
        Side::Top => [x0, y1],
    };
    let normal = match kind {
        EdgeKind::Boundary => side.outward_normal(),
        EdgeKind::Interior => match side.axis() {
            Axis::Y => [1.0, 0.0],
            Axis::X => [0.0, 1.0],
        },
    };
    Edge {
        kind,
        axis: side.axis(),
        level: cell.level,
        start,
        length: cell.side(),
        normal,
        owners,
    }
}

/// Facet of the finer (or equal-level) `cell` on `side`, shared with `a`/`b`.
fn interior_facet(cell: &Cell, side: Side, a: Cell, b: Cell) -> Edge {
    let owners = if a < b { vec![a, b] } else { vec![b, a] };
    facet(cell, side, EdgeKind::Interior, owners)
}
