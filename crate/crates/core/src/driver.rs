//! The adaptive loop and its convergence bookkeeping.

use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::assembly::{
    assemble, inconsistency_vector, laplacian_norm_sq, mesh_norm, triple_norm, triple_norm_matrix, FormParams, Mode,
    TraceNorm,
};
use crate::error::{AfemError, Result};
use crate::estimator::{dorfler_mark, estimate_all, Indicators, MarkedSet};
use crate::field::{CellField, Difference, ExactSolution};
use crate::mesh::{uniform_partition, Cell, Partition};
use crate::oracles::manufactured_sin2;
use crate::quadrature::gauss_cell;
use crate::solver::{residual_compensated, solve, SolveOptions};
use crate::splines::{build_space, HierarchicalSpace, SplineFunction};
use crate::Point;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AfemConfig {
    pub degree: usize,
    pub theta: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub mode: Mode,
    pub initial_levels: u32,
    pub max_dofs: usize,
    pub max_iters: usize,
    pub quad_n: usize,
    pub solver: SolveOptions,
    /// Truncated hierarchical basis (default) or plain hierarchical basis.
    pub truncated: bool,
    /// Record the discrete dual norm of the inconsistency functional
    /// (Nitsche mode with a known solution only).
    pub track_inconsistency: bool,
}

impl AfemConfig {
    pub fn new(mode: Mode, degree: usize) -> Self {
        let p = FormParams::defaults(mode, degree);
        AfemConfig {
            degree,
            theta: 0.5,
            gamma1: p.gamma1,
            gamma2: p.gamma2,
            mode,
            initial_levels: 2,
            max_dofs: 20_000,
            max_iters: 25,
            quad_n: p.quad_n,
            solver: SolveOptions::default(),
            truncated: true,
            track_inconsistency: false,
        }
    }

    pub fn form_params(&self) -> FormParams {
        FormParams {
            mode: self.mode,
            gamma1: self.gamma1,
            gamma2: self.gamma2,
            quad_n: self.quad_n,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=crate::MAX_DEGREE).contains(&self.degree) {
            return Err(AfemError::InvalidConfig(format!(
                "degree must be between 2 and {}, got {}",
                crate::MAX_DEGREE,
                self.degree
            )));
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(AfemError::InvalidConfig(format!(
                "theta must lie in (0, 1], got {}",
                self.theta
            )));
        }
        if self.max_iters == 0 {
            return Err(AfemError::InvalidConfig("max_iters must be at least 1".into()));
        }
        if self.initial_levels > 12 {
            return Err(AfemError::InvalidConfig(format!(
                "initial_levels {} is beyond desk scale",
                self.initial_levels
            )));
        }
        self.form_params().validate()?;
        self.solver.validate()
    }
}

impl Default for AfemConfig {
    fn default() -> Self {
        Self::new(Mode::Conforming, 2)
    }
}

type Source = Arc<dyn Fn(Point) -> f64 + Send + Sync>;

/// Load `f` with an optional closed-form solution.
#[derive(Clone)]
pub struct Problem {
    pub name: String,
    pub f: Source,
    pub exact: Option<ExactSolution>,
}

impl std::fmt::Debug for Problem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Problem")
            .field("name", &self.name)
            .field("exact", &self.exact.is_some())
            .finish()
    }
}

impl Problem {
    /// Checks `u = ∂u/∂ν = 0` at boundary samples when `exact` is given.
    pub fn new(name: impl Into<String>, f: Source, exact: Option<ExactSolution>) -> Result<Self> {
        if let Some(u) = &exact {
            let c = Cell::ROOT;
            for k in 0..100 {
                let t = (k as f64 + 0.5) / 100.0;
                for (x, n) in [
                    ([t, 0.0], [0.0, -1.0]),
                    ([t, 1.0], [0.0, 1.0]),
                    ([0.0, t], [-1.0, 0.0]),
                    ([1.0, t], [1.0, 0.0]),
                ] {
                    let g = u.gradient(&c, x);
                    let (v, dn) = (u.value(&c, x), g[0] * n[0] + g[1] * n[1]);
                    if v.abs() > 1e-12 || dn.abs() > 1e-12 {
                        return Err(AfemError::InvalidConfig(format!(
                            "exact solution violates the clamped boundary conditions at {x:?}: u = {v:e}, du/dn = {dn:e}"
                        )));
                    }
                }
            }
        }
        Ok(Problem {
            name: name.into(),
            f,
            exact,
        })
    }

    /// `u = sin²(πx) sin²(πy)`.
    pub fn sin2() -> Self {
        let m = manufactured_sin2();
        Problem {
            name: "sin2".into(),
            f: m.f,
            exact: Some(m.exact),
        }
    }

    pub fn zero() -> Self {
        Problem {
            name: "zero".into(),
            f: Arc::new(|_| 0.0),
            exact: Some(ExactSolution::zero()),
        }
    }

    /// `c·f` with solution `c·u`.
    pub fn scaled(&self, c: f64) -> Self {
        let f = self.f.clone();
        Problem {
            name: format!("{}*{c}", self.name),
            f: Arc::new(move |x| c * f(x)),
            exact: self.exact.as_ref().map(|u| u.scaled(c)),
        }
    }

    fn require_exact(&self, what: &'static str) -> Result<&ExactSolution> {
        self.exact.as_ref().ok_or(AfemError::MissingExactSolution(what))
    }
}

/// One row of the convergence history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRecord {
    pub iter: usize,
    pub n_cells: usize,
    pub n_dofs: usize,
    /// `‖Δ(u − U)‖`.
    pub energy_error: Option<f64>,
    /// `|||u − U|||`.
    pub triple_error: Option<f64>,
    pub eta: f64,
    pub osc: f64,
    pub boundary_norm_32: f64,
    pub boundary_norm_12: f64,
    pub marked_count: usize,
    pub inconsistency_sup: Option<f64>,
    /// `max_λ |(A x − b)_λ| / ‖b‖₂` of the solved system.
    pub galerkin_residual: f64,
    pub solver_residual: f64,
}

/// Everything produced by one pass through the loop.
#[derive(Clone, Debug)]
pub struct IterationState {
    pub iter: usize,
    pub space: Arc<HierarchicalSpace>,
    pub solution: SplineFunction,
    pub indicators: Indicators,
    pub marked: MarkedSet,
}

pub fn run(cfg: &AfemConfig, prob: &Problem) -> Result<Vec<ConvergenceRecord>> {
    run_observed(cfg, prob, |_| {})
}

/// Runs the loop, handing each iteration's state to `observer`.
pub fn run_observed(
    cfg: &AfemConfig,
    prob: &Problem,
    mut observer: impl FnMut(&IterationState),
) -> Result<Vec<ConvergenceRecord>> {
    cfg.validate()?;
    let params = cfg.form_params();
    let f = prob.f.as_ref();
    let mut partition = uniform_partition(cfg.initial_levels);
    let mut records: Vec<ConvergenceRecord> = Vec::new();
    for iter in 0.. {
        let space = Arc::new(build_space(&partition, cfg.degree, cfg.truncated)?);
        let dofs = crate::assembly::dof_map(&space, cfg.mode)?;
        if dofs.len() > cfg.max_dofs {
            if iter == 0 {
                return Err(AfemError::InvalidConfig(format!(
                    "max_dofs {} is below the {} unknowns of the initial space",
                    cfg.max_dofs,
                    dofs.len()
                )));
            }
            break;
        }
        let system = assemble(&space, f, &params)?;
        let sol = solve(&system.matrix, &system.load, &cfg.solver)?;
        let bnorm = system.load.iter().map(|v| v * v).sum::<f64>().sqrt();
        let galerkin_residual = if bnorm > 0.0 {
            residual_compensated(&system.matrix, &sol.x, &system.load)
                .iter()
                .fold(0.0f64, |m, r| m.max(r.abs()))
                / bnorm
        } else {
            0.0
        };
        let u_h = SplineFunction::new(space.clone(), system.dofs.expand(&sol.x))?;
        let indicators = estimate_all(&u_h, f, cfg.quad_n);
        let marked = dorfler_mark(&indicators, cfg.theta)?;

        let n_err = cfg.quad_n + 2;
        let (energy_error, triple_error) = match &prob.exact {
            Some(u) => {
                let diff = Difference { a: u, b: &u_h };
                let err_params = FormParams { quad_n: n_err, ..params };
                (
                    Some(laplacian_norm_sq(&diff, &partition, n_err).sqrt()),
                    Some(triple_norm(&diff, &partition, &err_params)),
                )
            }
            None => (None, None),
        };
        let inconsistency_sup = match (&prob.exact, cfg.track_inconsistency, cfg.mode) {
            (Some(u), true, Mode::Nitsche) => Some(inconsistency_sup(u, &space, &params)?),
            _ => None,
        };
        records.push(ConvergenceRecord {
            iter,
            n_cells: partition.len(),
            n_dofs: dofs.len(),
            energy_error,
            triple_error,
            eta: indicators.eta(),
            osc: indicators.osc_sq().sqrt(),
            boundary_norm_32: mesh_norm(&u_h, TraceNorm::ThreeHalves, &partition, cfg.quad_n),
            boundary_norm_12: mesh_norm(&u_h, TraceNorm::OneHalf, &partition, cfg.quad_n),
            marked_count: marked.cells.len(),
            inconsistency_sup,
            galerkin_residual,
            solver_residual: sol.relative_residual,
        });
        let done = indicators.total_sq == 0.0 || marked.cells.is_empty() || iter + 1 >= cfg.max_iters;
        let next = if done { None } else { Some(partition.refine(&marked.cells)?) };
        observer(&IterationState {
            iter,
            space,
            solution: u_h,
            indicators,
            marked,
        });
        match next {
            Some(p) => partition = p,
            None => break,
        }
    }
    Ok(records)
}

/// Discrete dual norm `sup_v |⟨𝓔, v⟩| / |||v|||` over the whole space.
pub fn inconsistency_sup(u: &ExactSolution, space: &HierarchicalSpace, params: &FormParams) -> Result<f64> {
    let e = inconsistency_vector(u, space, params);
    if e.iter().all(|v| *v == 0.0) {
        return Ok(0.0);
    }
    let t = triple_norm_matrix(space, params);
    let z = solve(&t, &e, &SolveOptions::default())?;
    Ok(e.iter().zip(&z.x).map(|(a, b)| a * b).sum::<f64>().max(0.0).sqrt())
}

/// Error measure used for contraction: the energy error in conforming runs
/// and the triple-norm error in Nitsche runs.
fn error_of(r: &ConvergenceRecord) -> Option<f64> {
    r.triple_error.or(r.energy_error)
}

/// `C_est = e₀² / η₀²` from the first record.
pub fn calibrate_c_est(records: &[ConvergenceRecord]) -> Result<f64> {
    let first = records
        .first()
        .ok_or_else(|| AfemError::InvalidConfig("no records".into()))?;
    let e = first
        .energy_error
        .ok_or(AfemError::MissingExactSolution("contraction ratios"))?;
    Ok(if first.eta > 0.0 { (e / first.eta).powi(2) } else { 0.0 })
}

/// `ρ_k = (e²_{k+1} + C η²_{k+1}) / (e²_k + C η²_k)`.
pub fn contraction_ratios(records: &[ConvergenceRecord], c_est: f64) -> Result<Vec<f64>> {
    let q = |r: &ConvergenceRecord| -> Result<f64> {
        let e = error_of(r).ok_or(AfemError::MissingExactSolution("contraction ratios"))?;
        Ok(e * e + c_est * r.eta * r.eta)
    };
    records
        .windows(2)
        .map(|w| Ok(q(&w[1])? / q(&w[0])?))
        .collect()
}

/// `η_k / e_k`, `+∞` when the error vanishes.
pub fn effectivity(records: &[ConvergenceRecord]) -> Result<Vec<f64>> {
    records
        .iter()
        .map(|r| {
            let e = error_of(r).ok_or(AfemError::MissingExactSolution("effectivity"))?;
            Ok(if e > 0.0 { r.eta / e } else { f64::INFINITY })
        })
        .collect()
}

/// Both sides of `‖Δ(u−U_*)‖² = ‖Δ(u−U)‖² − ‖Δ(U_*−U)‖²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PythagorasReport {
    pub lhs: f64,
    pub rhs: f64,
    /// `|lhs − rhs| / ‖Δ(u−U)‖²`.
    pub gap: f64,
}

/// Checks the energy identity between a coarse and a fine Galerkin solution,
/// integrating on whichever partition refines the other.
pub fn pythagoras_check(
    prob: &Problem,
    mode: Mode,
    coarse: &SplineFunction,
    fine: &SplineFunction,
    quad_n: usize,
) -> Result<PythagorasReport> {
    if mode != Mode::Conforming {
        return Err(AfemError::UnsupportedMode(
            "the energy identity only holds for conforming Galerkin solutions",
        ));
    }
    let u = prob.require_exact("energy identity")?;
    let pc = coarse.space().partition();
    let pf = fine.space().partition();
    let mesh: &Partition = if pf.is_refinement_of(pc) {
        pf
    } else if pc.is_refinement_of(pf) {
        pc
    } else {
        return Err(AfemError::NonNested("the two partitions are not nested".into()));
    };
    let sq = |a: &dyn CellField, b: &dyn CellField| -> f64 {
        mesh.cells()
            .iter()
            .map(|c| {
                gauss_cell(c, quad_n).integrate(|x| (a.laplacian(c, x) - b.laplacian(c, x)).powi(2))
            })
            .sum()
    };
    let lhs = sq(u, fine);
    let coarse_err = sq(u, coarse);
    let rhs = coarse_err - sq(fine, coarse);
    let gap = if coarse_err > 0.0 { (lhs - rhs).abs() / coarse_err } else { (lhs - rhs).abs() };
    Ok(PythagorasReport { lhs, rhs, gap })
}

/// Column contract of the convergence table.
pub const CSV_HEADER: &str = "iter,n_cells,n_dofs,energy_error,triple_error,eta,osc,bnorm32,bnorm12,marked,rho,effectivity";

/// Convergence table, one row per record. Ratios use `C_est = e₀²/η₀²`
/// when an exact solution is known and are left empty otherwise.
pub fn to_csv(records: &[ConvergenceRecord]) -> String {
    let c_est = calibrate_c_est(records).ok();
    let rho = c_est.and_then(|c| contraction_ratios(records, c).ok());
    let eff = effectivity(records).ok();
    let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
    let mut s = String::new();
    let _ = writeln!(s, "{CSV_HEADER}");
    for (k, r) in records.iter().enumerate() {
        let rho_k = rho.as_ref().and_then(|v| k.checked_sub(1).map(|j| v[j]));
        let eff_k = eff.as_ref().map(|v| v[k]);
        let _ = writeln!(
            s,
            "{},{},{},{},{},{:e},{:e},{:e},{:e},{},{},{}",
            r.iter,
            r.n_cells,
            r.n_dofs,
            opt(r.energy_error),
            opt(r.triple_error),
            r.eta,
            r.osc,
            r.boundary_norm_32,
            r.boundary_norm_12,
            r.marked_count,
            opt(rho_k),
            opt(eff_k),
        );
    }
    s
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}
