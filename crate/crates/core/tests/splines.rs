use std::f64::consts::PI;
use std::sync::Arc;

use afem_core::assembly::dof_map;
use afem_core::oracles::{
    brute_force_selection, fd_check, fd_check_with, global_dual_basis, global_quasi_interpolant, random_spline, FdOrder,
};
use afem_core::splines::{quasi_interpolant, CellBasis};
use afem_core::*;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn space(p: &Partition, r: usize) -> Arc<HierarchicalSpace> {
    Arc::new(build_space(p, r, true).unwrap())
}

fn random_partition(seed: u64, rounds: usize) -> Partition {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = uniform_partition(1);
    for _ in 0..rounds {
        let cells = p.cells().to_vec();
        let marked: Vec<Cell> = cells.into_iter().filter(|_| rng.gen_bool(0.25)).collect();
        p = p.refine(&marked).unwrap();
    }
    p
}

fn random_points(seed: u64, n: usize) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| [rng.gen::<f64>(), rng.gen::<f64>()]).collect()
}

#[test]
fn uniform_dimensions() {
    for r in 2..=5 {
        for l in 0..=3 {
            let s = build_space(&uniform_partition(l), r, true).unwrap();
            assert_eq!(s.dim(), ((1usize << l) + r).pow(2), "L={l} r={r}");
        }
    }
    assert_eq!(build_space(&uniform_partition(0), 2, true).unwrap().dim(), 9);
}

#[test]
fn degree_out_of_range_is_rejected() {
    let p = uniform_partition(1);
    assert!(matches!(build_space(&p, 1, true), Err(AfemError::InvalidConfig(_))));
    assert!(matches!(build_space(&p, 6, true), Err(AfemError::InvalidConfig(_))));
}

#[test]
fn selection_matches_brute_force() {
    let seven = uniform_partition(1).refine(&[Cell::new(1, 0, 0)]).unwrap();
    assert_eq!(seven.len(), 7);
    let mut cases = vec![seven];
    cases.extend((0..6).map(|s| random_partition(s, 3)));
    for p in &cases {
        for r in 2..=4 {
            for truncated in [true, false] {
                let s = build_space(p, r, truncated).unwrap();
                let mut keys = s.keys().to_vec();
                keys.sort();
                let mut want = brute_force_selection(p, r);
                want.sort();
                assert_eq!(keys, want, "r={r} cells={}", p.len());
            }
        }
    }
}

#[test]
fn truncated_basis_is_a_partition_of_unity() {
    for seed in 0..4 {
        let p = random_partition(seed, 3);
        for r in 2..=4 {
            let s = space(&p, r);
            let one = SplineFunction::new(s.clone(), vec![1.0; s.dim()]).unwrap();
            for x in random_points(seed + 10, 50) {
                assert!((one.eval(x, [0, 0]).unwrap() - 1.0).abs() < 1e-12);
                assert!(one.eval(x, [1, 0]).unwrap().abs() < 1e-9);
                assert!(one.eval(x, [0, 2]).unwrap().abs() < 1e-7);
            }
        }
    }
}

#[test]
fn plain_hierarchical_basis_is_not_a_partition_of_unity() {
    let p = uniform_partition(1).refine(&[Cell::new(1, 0, 0)]).unwrap();
    let s = Arc::new(build_space(&p, 2, false).unwrap());
    let one = SplineFunction::new(s.clone(), vec![1.0; s.dim()]).unwrap();
    let worst = random_points(3, 50)
        .into_iter()
        .map(|x| (one.eval(x, [0, 0]).unwrap() - 1.0).abs())
        .fold(0.0, f64::max);
    assert!(worst > 1e-3);
}

#[test]
fn derivative_order_is_limited() {
    let s = space(&uniform_partition(1), 2);
    let v = random_spline(&s, 1);
    assert!(matches!(v.eval([0.3, 0.3], [5, 0]), Err(AfemError::UnsupportedDerivative(5))));
    assert!(matches!(v.eval([0.3, 0.3], [3, 2]), Err(AfemError::UnsupportedDerivative(5))));
    assert!(v.eval([0.3, 0.3], [2, 2]).is_ok());
}

/// Worst `gap / max(|analytic|, h^-|α|)` over 100 interior points.
fn worst_fd_gap(r: usize, alphas: &[[u32; 2]], order: FdOrder) -> f64 {
    let p = random_partition(7, 2);
    let s = space(&p, r);
    let v = random_spline(&s, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let cell = p.cells()[rng.gen_range(0..p.len())];
        let x = cell.from_local([rng.gen_range(0.2..0.8), rng.gen_range(0.2..0.8)]);
        for &alpha in alphas {
            let c = fd_check_with(&v, x, alpha, 1e-3, order).unwrap();
            let natural = f64::from(cell.cells_per_side()).powi((alpha[0] + alpha[1]) as i32);
            worst = worst.max(c.gap / c.analytic.abs().max(natural));
        }
    }
    worst
}

#[test]
fn derivatives_match_finite_differences() {
    // Second differences are exact on biquadratics.
    let g = worst_fd_gap(2, &[[2, 2], [2, 0], [1, 1]], FdOrder::Second);
    assert!(g <= 1e-4, "r=2: {g:e}");
    // Higher degrees need the fourth-order stencil to stay clear of truncation error.
    let all = [[1, 0], [0, 1], [2, 0], [1, 1], [2, 2]];
    for r in [3, 4] {
        let g = worst_fd_gap(r, &all, FdOrder::Fourth);
        assert!(g <= 1e-4, "r={r}: {g:e}");
    }
}

#[test]
fn finite_difference_stencil_must_stay_in_cell() {
    let s = space(&uniform_partition(2), 2);
    let v = random_spline(&s, 2);
    assert!(matches!(
        fd_check(&v, [0.2499, 0.1], [2, 0], 1e-3),
        Err(AfemError::StencilCrossesCell { .. })
    ));
}

#[test]
fn splines_are_c1_across_interior_edges() {
    for seed in 0..3 {
        let p = random_partition(seed, 3);
        for r in 2..=4 {
            let s = space(&p, r);
            let v = random_spline(&s, seed);
            for e in &p.edges().interior {
                for t in [0.1, 0.5, 0.9] {
                    let x = e.point_at(t);
                    for alpha in [[0, 0], [1, 0], [0, 1]] {
                        let a = v.eval_on(&e.owners[0], x, alpha).unwrap();
                        let b = v.eval_on(&e.owners[1], x, alpha).unwrap();
                        let scale = f64::from(e.owners[0].cells_per_side().max(e.owners[1].cells_per_side()));
                        assert!((a - b).abs() <= 1e-11 * scale, "r={r} {alpha:?} jump {:e}", a - b);
                    }
                }
            }
        }
    }
}

#[test]
fn conforming_subspace_counts_and_traces() {
    let s = space(&uniform_partition(2), 2);
    assert_eq!(s.conforming_indices().len(), 4);
    for r in 2..=5 {
        for l in 1..=3u32 {
            let s = space(&uniform_partition(l), r);
            let per_dir = ((1usize << l) + r).saturating_sub(4);
            assert_eq!(s.conforming_indices().len(), per_dir * per_dir, "L={l} r={r}");
        }
    }
    let s = space(&random_partition(4, 3), 3);
    for &k in s.conforming_indices() {
        let b = SplineFunction::basis(s.clone(), k);
        for i in 0..=40 {
            let t = f64::from(i) / 40.0;
            for (x, n) in [
                ([t, 0.0], [0.0, -1.0]),
                ([t, 1.0], [0.0, 1.0]),
                ([0.0, t], [-1.0, 0.0]),
                ([1.0, t], [1.0, 0.0]),
            ] {
                let v = b.eval(x, [0, 0]).unwrap();
                let dn = n[0] * b.eval(x, [1, 0]).unwrap() + n[1] * b.eval(x, [0, 1]).unwrap();
                assert!(v.abs() + dn.abs() < 1e-12, "function {k} at {x:?}");
            }
        }
    }
}

#[test]
fn single_cell_has_no_conforming_functions() {
    let s = build_space(&uniform_partition(0), 2, true).unwrap();
    assert!(s.conforming_indices().is_empty());
    assert!(matches!(
        dof_map(&s, Mode::Conforming),
        Err(AfemError::EmptyConformingSpace { degree: 2 })
    ));
    assert_eq!(dof_map(&s, Mode::Nitsche).unwrap().len(), 9);
}

#[test]
fn quasi_interpolant_reproduces_splines() {
    for seed in 0..3 {
        let p = random_partition(seed, 3);
        for r in 2..=4 {
            for truncated in [true, false] {
                let s = Arc::new(build_space(&p, r, truncated).unwrap());
                let v = random_spline(&s, seed + 100);
                let f = |x: Point| v.eval(x, [0, 0]).unwrap();
                let w = quasi_interpolant(&s, &f).unwrap();
                let gap = v
                    .coefficients()
                    .iter()
                    .zip(w.coefficients())
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                // Rounding scales with the dual amplitudes, which grow quickly with r.
                let tol = if r <= 3 { 1e-12 } else { 5e-11 };
                assert!(gap <= tol, "r={r} truncated={truncated}: {gap:e}");
            }
        }
    }
}

#[test]
fn quasi_interpolant_reproduces_one() {
    let s = space(&random_partition(2, 3), 3);
    let w = quasi_interpolant(&s, &|_| 1.0).unwrap();
    for x in random_points(1, 30) {
        assert!((w.eval(x, [0, 0]).unwrap() - 1.0).abs() < 1e-12);
    }
}

fn l2_error(v: &SplineFunction, f: &dyn Fn(Point) -> f64) -> f64 {
    v.space()
        .partition()
        .cells()
        .iter()
        .map(|c| gauss_cell(c, 8).integrate(|x| (v.eval_on(c, x, [0, 0]).unwrap() - f(x)).powi(2)))
        .sum::<f64>()
        .sqrt()
}

#[test]
fn quasi_interpolation_converges_at_order_r_plus_one() {
    let f = |x: Point| (PI * x[0]).sin() * (PI * x[1]).sin();
    let mut hs = Vec::new();
    let mut errs = Vec::new();
    for l in 3..=6 {
        let s = space(&uniform_partition(l), 2);
        let w = quasi_interpolant(&s, &f).unwrap();
        hs.push(1.0 / f64::from(1u32 << l));
        errs.push(l2_error(&w, &f));
    }
    let slope = afem_core::driver::loglog_slope(&hs, &errs);
    assert!(slope >= 2.7, "slope {slope}");
}

#[test]
fn prolongation_is_exact() {
    for seed in 0..4 {
        let coarse_p = random_partition(seed, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let marked: Vec<Cell> = coarse_p.cells().iter().copied().filter(|_| rng.gen_bool(0.3)).collect();
        let fine_p = coarse_p.refine(&marked).unwrap();
        for r in 2..=4 {
            for truncated in [true, false] {
                let cs = Arc::new(build_space(&coarse_p, r, truncated).unwrap());
                let fs = Arc::new(build_space(&fine_p, r, truncated).unwrap());
                let v = random_spline(&cs, seed);
                let w = coarse_to_fine(&v, &fs).unwrap();
                for x in random_points(seed, 100) {
                    let d = (v.eval(x, [0, 0]).unwrap() - w.eval(x, [0, 0]).unwrap()).abs();
                    let tol = if r <= 3 { 1e-12 } else { 5e-11 };
                    assert!(d <= tol, "r={r} truncated={truncated}: {d:e}");
                }
            }
        }
    }
}

#[test]
fn prolongation_identity_and_constants() {
    let p = random_partition(1, 2);
    let s = space(&p, 2);
    let v = random_spline(&s, 3);
    let same = coarse_to_fine(&v, &s).unwrap();
    assert_eq!(same.coefficients(), v.coefficients());

    let fine = space(&p.refine(&p.cells()[..3]).unwrap(), 2);
    let one = SplineFunction::new(s.clone(), vec![1.0; s.dim()]).unwrap();
    let w = coarse_to_fine(&one, &fine).unwrap();
    for c in w.coefficients() {
        assert!((c - 1.0).abs() < 1e-12);
    }
}

#[test]
fn truncated_and_plain_bases_span_the_same_space() {
    let p = random_partition(5, 3);
    let thb = space(&p, 3);
    let hb = Arc::new(build_space(&p, 3, false).unwrap());
    let v = random_spline(&thb, 8);
    let w = coarse_to_fine(&v, &hb).unwrap();
    for x in random_points(4, 100) {
        assert!((v.eval(x, [0, 0]).unwrap() - w.eval(x, [0, 0]).unwrap()).abs() < 1e-11);
    }
}

#[test]
fn non_nested_prolongation_is_rejected() {
    let a = uniform_partition(1).refine(&[Cell::new(1, 0, 0)]).unwrap();
    let b = uniform_partition(1).refine(&[Cell::new(1, 1, 1)]).unwrap();
    let v = random_spline(&space(&a, 2), 1);
    assert!(matches!(coarse_to_fine(&v, &space(&b, 2)), Err(AfemError::NonNested(_))));
    assert!(matches!(
        coarse_to_fine(&v, &space(&a.refine(&[]).unwrap(), 3)),
        Err(AfemError::NonNested(_))
    ));
}

#[test]
fn text_round_trip() {
    let p = random_partition(6, 3);
    for truncated in [true, false] {
        let s = Arc::new(build_space(&p, 3, truncated).unwrap());
        let v = random_spline(&s, 12);
        let text = v.to_text();
        let back = SplineFunction::from_text(&text).unwrap();
        assert_eq!(back.coefficients(), v.coefficients());
        assert_eq!(back.space().keys(), s.keys());
        assert_eq!(back.to_text(), text);
    }
    assert!(matches!(SplineFunction::from_text("degree x"), Err(AfemError::Parse { .. })));
}

fn cell_rank(cb: &CellBasis, m: usize) -> usize {
    let a = DMatrix::from_fn(cb.len(), m * m, |k, j| cb.block(k, m)[j]);
    let svd = a.svd(false, false);
    let smax = svd.singular_values.max();
    svd.singular_values.iter().filter(|s| **s > 1e-10 * smax).count()
}

// Hierarchical functions are not locally independent: on a refined cell the
// truncated coarse functions overlap the fine ones. What holds is that the
// functions acting on any cell span all of Q_r there, and that the basis is
// globally independent.
#[test]
fn functions_on_each_cell_span_the_local_polynomials() {
    let seven = uniform_partition(1).refine(&[Cell::new(1, 0, 0)]).unwrap();
    for p in [seven, uniform_partition(2), random_partition(3, 2)] {
        for r in 2..=3 {
            for truncated in [true, false] {
                let s = Arc::new(build_space(&p, r, truncated).unwrap());
                for k in 0..p.len() {
                    let cb = s.cell_basis_at(k);
                    assert_eq!(cell_rank(cb, r + 1), (r + 1) * (r + 1), "cell {:?} r={r}", p.cells()[k]);
                }
                assert!(global_dual_basis(&s).is_ok(), "global Gram must be definite");
            }
        }
    }
}

#[test]
fn global_dual_basis_single_cell() {
    let s = space(&uniform_partition(0), 2);
    let d = global_dual_basis(&s).unwrap();
    let id = &d.gram * &d.dual;
    for i in 0..9 {
        for j in 0..9 {
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((id[(i, j)] - want).abs() < 1e-10);
        }
    }
}

#[test]
fn global_and_local_duals_agree_on_splines() {
    let p = uniform_partition(1).refine(&[Cell::new(1, 0, 0)]).unwrap();
    let s = space(&p, 2);
    let d = global_dual_basis(&s).unwrap();
    let v = random_spline(&s, 4);
    let f = |x: Point| v.eval(x, [0, 0]).unwrap();
    let a = global_quasi_interpolant(&s, &d, &f).unwrap();
    let b = quasi_interpolant(&s, &f).unwrap();
    for ((x, y), z) in a.coefficients().iter().zip(b.coefficients()).zip(v.coefficients()) {
        assert!((x - z).abs() < 1e-10 && (y - z).abs() < 1e-12);
    }
}

/// `max_τ ‖I v‖_{L²(τ)} / ‖v‖_{L²(ω_τ)}` over the active cells.
fn stability_constant(s: &Arc<HierarchicalSpace>, iv: &SplineFunction, v: &dyn Fn(Point) -> f64) -> f64 {
    let p = s.partition();
    let norm_on = |c: &Cell, g: &dyn Fn(Point) -> f64| gauss_cell(c, 8).integrate(|x| g(x).powi(2));
    p.cells()
        .iter()
        .map(|c| {
            let num = norm_on(c, &|x| iv.eval_on(c, x, [0, 0]).unwrap());
            let den: f64 = p.support_extension(s.as_ref(), c).iter().map(|t| norm_on(t, v)).sum();
            (num / den).sqrt()
        })
        .fold(0.0, f64::max)
}

#[test]
fn global_and_local_duals_share_a_stability_constant() {
    let p = uniform_partition(2).refine(&[Cell::new(2, 1, 1)]).unwrap();
    let s = space(&p, 2);
    let d = global_dual_basis(&s).unwrap();
    let v = |x: Point| (PI * x[0]).sin() * (PI * x[1]).sin();
    let a = global_quasi_interpolant(&s, &d, &v).unwrap();
    let b = quasi_interpolant(&s, &v).unwrap();
    let gap = a
        .coefficients()
        .iter()
        .zip(b.coefficients())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    assert!(gap > 1e-8, "the two interpolants should differ on non-spline data");
    let ca = stability_constant(&s, &a, &v);
    let cb = stability_constant(&s, &b, &v);
    let ratio = ca / cb;
    assert!((0.5..=1.5).contains(&ratio), "global {ca} local {cb}");
}

